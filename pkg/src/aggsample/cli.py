"""Command line entry point: ``aggsample run|sweep|verify <config>``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .exceptions import AggSampleError
from .experiment import parse_config, run_experiment, sweep


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aggsample", description="Adaptive spatial sampling experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="experiment config file")
    common.add_argument("--seed", type=int, action="append",
                        help="run only this seed (repeatable); default: the config's seeds")
    common.add_argument("--parallel", type=int, default=1, metavar="K", help="worker processes")
    common.add_argument("--out-dir", help="output directory (overrides the config)")
    common.add_argument("--trace", action="store_true", help="also write per-event trace CSVs")
    sub.add_parser("run", parents=[common], help="run a single-cell config")
    sub.add_parser("sweep", parents=[common], help="run the Cartesian product and aggregate")
    sub.add_parser("verify", parents=[common], help="run and report verifier outcomes only")
    return p


def _report(results, out) -> None:
    for r in results:
        bad = [name for name, v in r.verdicts.items() if not v]
        status = "ok" if not bad else "FAILED " + ",".join(bad)
        print(f"{r.name}: {len(r.rows)} rows, events={r.events}, {status}", file=out)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.parallel < 1:
            raise AggSampleError("--parallel must be >= 1")
        out_dir = Path(args.out_dir or cfg.out_dir)
        seeds = tuple(args.seed) if args.seed else cfg.seeds
        trace = args.trace or cfg.trace
        if args.command == "run":
            if not cfg.is_single:
                raise AggSampleError("config lists several values per axis; use 'sweep'")
            res = sweep(cfg, out_dir=out_dir, parallel=args.parallel, seeds=seeds, trace=trace)
            results = res.results
        elif args.command == "sweep":
            res = sweep(cfg, out_dir=out_dir, parallel=args.parallel, seeds=seeds, trace=trace)
            results = res.results
            print(f"aggregate written to {res.aggregate_path}")
        else:
            results = [run_experiment(cfg.cell(*cell), s) for cell in cfg.cells() for s in seeds]
            for r in results:
                for name, v in r.verdicts.items():
                    print(f"{r.name} {name}: {'pass' if v else 'FAIL'}")
    except (AggSampleError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _report(results, sys.stdout)
    return 0 if all(r.ok for r in results) else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
