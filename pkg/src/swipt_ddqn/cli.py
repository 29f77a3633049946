"""Command line entry point: ``swipt-ddqn {train,compare,sweep,render}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .experiments import (
    ExperimentConfig,
    fast_preset,
    load_config,
    render,
    resolve_output_dir,
    run_experiment,
    sweep,
)
from .utils import ConfigurationError


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def _value_list(text: str) -> tuple:
    out = []
    for v in text.split(","):
        f = float(v)
        out.append(int(f) if f.is_integer() and "." not in v else f)
    return tuple(out)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key = value config file")
    p.add_argument("--seed", type=_int_list, help="seed or comma-separated seeds")
    p.add_argument("--out", help="output directory")
    p.add_argument("--episodes", type=int)
    p.add_argument("--fast", action="store_true",
                   help="desk-scale preset: 600 episodes, 128/64 hidden units")
    p.add_argument("--jobs", type=int, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swipt-ddqn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a single strategy")
    _common(p)
    p.add_argument("--strategy", default="ddqn-ucb")

    p = sub.add_parser("compare", help="train the benchmark strategy set")
    _common(p)
    p.add_argument("--strategies", help="comma-separated subset of strategies")

    p = sub.add_parser("sweep", help="sweep one environment parameter")
    _common(p)
    p.add_argument("--axis", choices=["L", "T", "B0", "tau"])
    p.add_argument("--values", type=_value_list, help="comma-separated axis values")
    p.add_argument("--strategy", help="strategy to sweep (default: first configured)")

    p = sub.add_parser("render", help="redraw charts from CSV files")
    p.add_argument("paths", nargs="+", type=Path, help="CSV files or directories holding them")
    p.add_argument("--out", type=Path, help="image directory (default: next to the CSVs)")
    p.add_argument("--name", default="compare")
    return parser


def _resolve_config(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.fast:
        config = fast_preset(config)
    overrides = {}
    if args.seed:
        overrides["seeds"] = args.seed
    if args.out:
        overrides["output_dir"] = args.out
    if args.episodes is not None:
        overrides["episodes"] = args.episodes
    if args.jobs is not None:
        overrides["n_jobs"] = args.jobs
    return replace(config, **overrides)


def _summary(results) -> None:
    for (strategy, seed), s in sorted(results.items()):
        window = min(500, s.episodes)
        print(f"{strategy:18s} seed {seed}: final ASR {s.final_asr(window):9.3f} "
              f"violations/episode {s.violations[-window:].mean():6.3f}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        if args.command == "render":
            csvs = []
            for p in args.paths:
                csvs += sorted(p.glob("*__seed*__*.csv")) if p.is_dir() else [p]
            if not csvs:
                raise ConfigurationError("no series CSV files found")
            out = args.out or csvs[0].parent
            for img in render(csvs, out, name=args.name):
                print(img)
            return 0

        config = _resolve_config(args)
        if args.command == "train":
            results = run_experiment(replace(config, strategies=(args.strategy,)))
            _summary(results)
        elif args.command == "compare":
            if args.strategies:
                config = replace(config, strategies=tuple(args.strategies.split(",")))
            _summary(run_experiment(config))
        elif args.command == "sweep":
            if args.strategy:
                config = replace(config, strategies=(args.strategy,))
            rows = sweep(config, args.axis, args.values)
            print("axis_value,mean_final_asr,std_final_asr,seeds")
            for r in rows:
                print(f"{r.value},{r.mean_final_asr:.4f},{r.std_final_asr:.4f},{r.seeds}")
        print(f"results in {resolve_output_dir(config.output_dir)}", file=sys.stderr)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
