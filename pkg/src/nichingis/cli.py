from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict

from .harness import dump_figure_data, load_config, mc_reference, run_experiment
from .models import get_model
from .sampling import make_rng


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nichingis", description="Niching importance sampling experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("config", help="INI file with an [experiment] section")
    p_run.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    p_run.add_argument("--workers", type=int, default=None, help="worker processes")

    p_ref = sub.add_parser("reference", help="crude Monte Carlo reference probability")
    p_ref.add_argument("--model", required=True)
    p_ref.add_argument("--dim", type=int, default=None, help="lifted dimension")
    p_ref.add_argument("--samples", type=float, default=1e6)
    p_ref.add_argument("--seed", type=int, default=0)

    p_fig = sub.add_parser("dump-figure-data", help="single seeded run with plot-ready point clouds")
    p_fig.add_argument("--model", required=True)
    p_fig.add_argument("--dim", type=int, default=None)
    p_fig.add_argument("--seed", type=int, default=0)
    p_fig.add_argument("--out", required=True, help="JSON output path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")

    if args.command == "run":
        config = load_config(args.config)
        if args.out is not None:
            config.output_dir = args.out
        if args.workers is not None:
            config.workers = args.workers
        _, summary = run_experiment(config)
        print(json.dumps(asdict(summary), indent=2))
    elif args.command == "reference":
        model = get_model(args.model, args.dim)
        p, cov = mc_reference(model, int(args.samples), make_rng(args.seed))
        print(json.dumps({"model": args.model, "dim": model.dim, "samples": int(args.samples), "p_hat": p, "cov": cov}))
    elif args.command == "dump-figure-data":
        data = dump_figure_data(args.model, args.dim, args.seed, args.out)
        print(f"p_hat={data['p_hat']:.4e} evaluations={data['evaluations']} chain_runs={len(data['chain_runs'])} -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
