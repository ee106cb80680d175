"""Command-line entry point: ``dmimo-sim run --spec FILE`` and ``dmimo-sim figure figN``."""

from __future__ import annotations

import argparse
import logging
import sys

from .sim import FIGURES, emit_csv, load_experiment_spec, reproduce_figure, run_experiment


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master RNG seed (unsigned 64-bit)")
    p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials per sweep point")
    p.add_argument("--output", "-o", default=None, help="CSV output path (default: stdout)")
    p.add_argument("--power-mode", choices=["full", "normalized"], default=None)
    p.add_argument("--los", choices=["los", "nlos", "prob"], default=None, help="UE-to-BS link condition")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmimo-sim", description="Two-phase uplink joint transmission simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment spec file (YAML/JSON)")
    run.add_argument("--spec", required=True)
    _common(run)
    fig = sub.add_parser("figure", help="reproduce one of the preset figures")
    fig.add_argument("figure_id", choices=FIGURES)
    _common(fig)
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    return {
        "seed": args.seed,
        "trials": args.trials,
        "power_mode": args.power_mode,
        "los": args.los,
    }


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and not (0 <= args.seed < 2**64):
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    output = args.output or "/dev/stdout"
    try:
        if args.command == "run":
            spec = load_experiment_spec(args.spec)
            scen = {k: v for k, v in _overrides(args).items() if v is not None and k != "trials"}
            if "seed" in scen:
                scen["rng_seed"] = scen.pop("seed")
            if "los" in scen:
                scen["bs_link_condition"] = scen.pop("los")
            spec = spec.replace(scenario=spec.scenario.replace(**scen))
            if args.trials is not None:
                spec = spec.replace(trials=args.trials)
            emit_csv(run_experiment(spec, jobs=args.jobs), output)
        else:
            reproduce_figure(args.figure_id, _overrides(args), output=output, jobs=args.jobs)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
