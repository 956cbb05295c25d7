"""Command-line entry point: certificate evaluation and experiment sweeps."""

from __future__ import annotations

import argparse
import sys
import time

from .bounds import BoundQuery, eps_bar, eps_bar_oracle
from .harness import load_config, run_experiment, summarize, write_csv, write_summary


def _cmd_bound(args) -> int:
    if args.table:
        config = load_config("bound-table", args.config, seed=args.seed, reps=1,
                             output_dir=args.out)
        records = run_experiment(config)
        if args.out:
            path = write_csv(records, "bound-table", args.out)
            print(path)
        else:
            from .harness import render_csv

            sys.stdout.write(render_csv(records, "bound-table"))
        return 0

    if args.k is None or args.n is None or args.delta is None:
        print("bound: --k, --n and --delta are required unless --table is given",
              file=sys.stderr)
        return 2
    query = BoundQuery(k=args.k, n=args.n, delta=args.delta)
    solver = eps_bar if args.method == "beta" else eps_bar_oracle
    print(f"{solver(query).eps:.12g}")
    return 0


def _cmd_experiment(experiment: str, args) -> int:
    config = load_config(
        experiment,
        args.config,
        seed=args.seed,
        reps=args.reps,
        output_dir=args.out,
        workers=args.workers,
    )
    t0 = time.monotonic()
    records = run_experiment(config)
    elapsed = time.monotonic() - t0
    if args.out:
        csv_path = write_csv(records, experiment, args.out)
        summary_path = write_summary(config, records, args.out, elapsed)
        print(csv_path)
        print(summary_path)
    else:
        import json

        print(json.dumps(summarize(records), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="p2l", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_bound = sub.add_parser("bound", help="evaluate the risk certificate eps(k, delta, n)")
    p_bound.add_argument("--k", type=int)
    p_bound.add_argument("--n", type=int)
    p_bound.add_argument("--delta", type=float)
    p_bound.add_argument("--method", choices=("beta", "psi"), default="beta")
    p_bound.add_argument("--table", action="store_true",
                         help="emit a CSV table over the configured grid")
    p_bound.add_argument("--config", default=None)
    p_bound.add_argument("--seed", type=int, default=0)
    p_bound.add_argument("--out", default=None)

    for name, help_text in (
        ("reach", "reachable-set experiment with test-set and conformal baselines"),
        ("oc", "optimal-control cost-threshold experiment"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--reps", type=int, default=1)
        p.add_argument("--out", default=None)
        p.add_argument("--workers", type=int, default=None)
        if name == "oc":
            p.add_argument("--cdf", action="store_true",
                           help="certify the whole ladder of cost levels")
            p.add_argument("--n", type=int, default=None,
                           help="override the dataset size")
            p.add_argument("--delta", type=float, default=None,
                           help="override the confidence parameter")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bound":
        return _cmd_bound(args)
    if args.command == "reach":
        return _cmd_experiment("reach", args)
    if args.command == "oc":
        experiment = "oc-cdf" if args.cdf else "oc"
        config = load_config(
            experiment, args.config, seed=args.seed, reps=args.reps,
            output_dir=args.out, workers=args.workers,
        )
        if args.n is not None or args.delta is not None:
            import dataclasses

            oc = config.oc
            if args.n is not None:
                oc = dataclasses.replace(oc, n=args.n)
            if args.delta is not None:
                oc = dataclasses.replace(oc, delta=args.delta)
            config = dataclasses.replace(config, oc=oc)
        t0 = time.monotonic()
        records = run_experiment(config)
        elapsed = time.monotonic() - t0
        if args.out:
            print(write_csv(records, experiment, args.out))
            print(write_summary(config, records, args.out, elapsed))
        else:
            import json

            print(json.dumps(summarize(records), indent=2))
        return 0
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    raise SystemExit(main())
