"""Exception types shared across the package."""


class ProtocolOrderError(RuntimeError):
    """A step/observe pair was driven out of order."""


class EmptyStateError(ValueError):
    """A statistic was requested from a state that has seen no rounds."""


class FixedPointError(RuntimeError):
    """The stationary-distribution iteration did not reach tolerance.

    Carries the final l1 residual so callers can report how far off the
    returned vector was.
    """

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"fixed-point iteration stopped after {iterations} doublings "
            f"with residual {residual:.3e}"
        )


class StreamFormatError(ValueError):
    """A stream file line failed to parse or violated the row schema."""

    def __init__(self, line_number: int, message: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")
