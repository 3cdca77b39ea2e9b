"""Command-line entry point for running and replaying experiments."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    ExperimentConfig,
    emit_report,
    generate_nature,
    generate_stream,
    ingest_stream,
    replay_experiment,
    run_experiment,
    write_stream,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamcalib",
        description="Online recalibration of probability forecast streams.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment and write its report")
    run.add_argument("--mode", choices=["covariate", "forecast-stream", "multi-expert"],
                     help="round type; inferred from --generator when omitted")
    run.add_argument("--generator", help="synthetic source, e.g. iid-bernoulli:0.3")
    run.add_argument("--input", help="stream file to ingest instead of a generator")
    run.add_argument("--n", type=int, default=10, help="bucket count / grid resolution")
    run.add_argument("--T", type=int, dest="horizon", help="number of rounds")
    run.add_argument("--seed", type=int, required=True, help="run seed (no wall-clock seeding)")
    run.add_argument("--update-mode", choices=["expected", "sampled"], default="expected")
    run.add_argument("--forecaster-eta", type=float, default=0.05)
    run.add_argument("--forecaster-rule", choices=["fixed", "adaptive"], default="fixed")
    run.add_argument("--out", required=True, help="report path (companion CSV lands next to it)")
    run.add_argument("--snapshot-out", help="also save the final recalibrator state here")

    gen = sub.add_parser("gen", help="emit a generator's rounds to a stream file")
    gen.add_argument("--generator", required=True)
    gen.add_argument("--T", type=int, dest="horizon", required=True)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)

    replay = sub.add_parser("replay", help="restore a snapshot and continue on a suffix stream")
    replay.add_argument("--snapshot", required=True)
    replay.add_argument("--input", required=True, help="forecast-stream suffix file")
    replay.add_argument("--out", required=True)

    return parser


def _command_run(args) -> int:
    mode = args.mode
    if mode is None:
        if args.generator is None:
            raise ValueError("--mode is required when running from --input")
        mode = generate_nature(args.generator).mode
    config = ExperimentConfig(
        mode=mode,
        n=args.n,
        seed=args.seed,
        horizon=args.horizon,
        generator=args.generator,
        input_path=args.input,
        update_mode=args.update_mode,
        forecaster_rate=args.forecaster_eta,
        forecaster_rule=args.forecaster_rule,
        report_path=args.out,
    )
    report, recalibrator = run_experiment(config, return_state=True)
    emit_report(report, args.out)
    if args.snapshot_out:
        Path(args.snapshot_out).write_text(recalibrator.snapshot() + "\n", encoding="utf-8")
    print(f"report written to {args.out}")
    return 0


def _command_gen(args) -> int:
    rows = generate_stream(args.generator, args.horizon, args.seed)
    write_stream(rows, args.out)
    print(f"{len(rows)} rounds written to {args.out}")
    return 0


def _command_replay(args) -> int:
    snapshot_text = Path(args.snapshot).read_text(encoding="utf-8")
    rows = ingest_stream(args.input, "forecast-stream")
    head = json.loads(snapshot_text)
    config = ExperimentConfig(
        mode="forecast-stream",
        n=head["n_bins"],
        seed=head["seed"],
        horizon=len(rows),
        input_path=args.input,
        update_mode=head["update_mode"],
        report_path=args.out,
    )
    report = replay_experiment(snapshot_text, rows, config)
    emit_report(report, args.out)
    print(f"report written to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _command_run(args)
        if args.command == "gen":
            return _command_gen(args)
        return _command_replay(args)
    except Exception as exc:  # surface a clean diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
