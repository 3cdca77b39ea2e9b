"""Shared pytest configuration (anchors sys.path for the oracles module)."""
