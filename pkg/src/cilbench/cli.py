"""Command-line entry point.

Subcommands:
  run       -- execute one experiment from a JSON config
  ablate-n  -- sweep the neighbor-count filter over shared seeds
  verify    -- run the built-in property/oracle battery

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import ConfigurationError, DataError
from .harness import ablate_n, load_config, run_and_emit
from .selfcheck import run_selfcheck


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cilbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="global seed (overrides config)")

    run_p = sub.add_parser("run", help="run one experiment")
    add_common(run_p)

    abl_p = sub.add_parser("ablate-n", help="neighbor-count ablation")
    add_common(abl_p)
    abl_p.add_argument("--values", default="0,3,5,8", help="comma-separated n values")
    abl_p.add_argument("--seeds", default=None, help="comma-separated seeds")

    ver_p = sub.add_parser("verify", help="run the property/oracle suite")
    ver_p.add_argument("--config", required=False, help="unused, accepted for parity")
    ver_p.add_argument("--seed", type=int, default=0)
    return parser


def _resolved_config(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=args.out)
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            cfg = _resolved_config(args)
            result = run_and_emit(cfg)
            for r in result.records:
                print(
                    f"task {r.task_index}: accuracy={r.accuracy:.4f} "
                    f"avg={r.avg_accuracy:.4f} exemplars={r.exemplar_count}"
                )
            print(f"results written to {cfg.out_dir}")
        elif args.command == "ablate-n":
            cfg = _resolved_config(args)
            values = [int(v) for v in args.values.split(",")]
            seeds = (
                [int(s) for s in args.seeds.split(",")] if args.seeds else [cfg.seed]
            )
            table = ablate_n(cfg, values, seeds, cfg.out_dir)
            for (n, seed), aa in sorted(table.items()):
                print(f"n={n} seed={seed}: avg_accuracy={aa:.4f}")
        else:  # verify
            ok = True
            for name, passed in run_selfcheck(args.seed):
                print(f"{'PASS' if passed else 'FAIL'}  {name}")
                ok = ok and passed
            if not ok:
                return 1
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
