"""Command-line entry point: ``vvm run``, ``vvm fig1`` and ``vvm sigma-search``."""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ALGORITHMS,
    ConfigError,
    ExperimentConfig,
    Fig1Config,
    ParseError,
    fig1_study,
    load_csv,
    run_stream,
    sigma_search,
)
from .machine import ScoreMode


def _add_learner_flags(p):
    p.add_argument("--data", required=True, help="CSV file; last column is the label")
    p.add_argument("--algorithm", choices=ALGORITHMS, default="vvm")
    p.add_argument("--buffer-size", type=int, default=None)
    p.add_argument("--epsilon", type=float, default=0.01)
    p.add_argument("--k-pairs", type=int, default=1)
    p.add_argument("--score-mode", choices=[m.value for m in ScoreMode], default="full_kl")
    p.add_argument("--rff-dim", type=int, default=None)
    p.add_argument("--rff-sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action="store_true", help="running per-feature z-score")
    p.add_argument("--ep-sweeps", type=int, default=5)
    p.add_argument("--ep-damping", type=float, default=1.0,
                   help="site update step in (0, 1]; values below 1 help on noisy streams")
    p.add_argument("--pa-c", type=float, default=2.0, help="PA-I aggressiveness")


def _config(args, **extra):
    return ExperimentConfig(
        dataset_path=args.data,
        algorithm=args.algorithm,
        buffer_size=args.buffer_size,
        epsilon=args.epsilon,
        k_pairs=args.k_pairs,
        score_mode=args.score_mode,
        rff_dim=args.rff_dim,
        rff_sigma=args.rff_sigma,
        seed=args.seed,
        standardize=args.standardize,
        ep_sweeps=args.ep_sweeps,
        ep_damping=args.ep_damping,
        pa_aggressiveness=args.pa_c,
        **extra,
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="vvm", description="Virtual vector machine experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="progressive validation over permuted streams")
    _add_learner_flags(run)
    run.add_argument("--permutations", type=int, default=10)
    run.add_argument("--holdout", type=float, default=0.0, help="fraction held out as a test set")
    run.add_argument("--output", default=None, help="error-series CSV (summary JSON written alongside)")
    run.add_argument("--snapshot", default=None, help="save the final vvm state of the last permutation")

    fig1 = sub.add_parser("fig1", help="posterior-mean error study on the synthetic mixture")
    fig1.add_argument("--runs", type=int, default=20)
    fig1.add_argument("--buffers", type=int, nargs="+", default=[10, 40])
    fig1.add_argument("--epsilon", type=float, default=0.01)
    fig1.add_argument("--k-pairs", type=int, default=1)
    fig1.add_argument("--samples", type=int, default=200_000)
    fig1.add_argument("--seed", type=int, default=0)
    fig1.add_argument("--output", default=None, help="JSON file for the table")

    search = sub.add_parser("sigma-search", help="choose the RBF width by validation error")
    _add_learner_flags(search)
    search.add_argument("--sigmas", type=float, nargs="+", required=True)
    search.add_argument("--validation", type=float, default=0.2)
    return parser


def _run(args):
    cfg = _config(args, permutations=args.permutations, holdout=args.holdout,
                  output_path=args.output, snapshot_path=args.snapshot)
    report = run_stream(cfg)
    return report.summary()


def _fig1(args):
    if args.runs < 1 or args.samples < 1000:
        raise ConfigError("need at least one run and 1000 samples")
    cfg = Fig1Config(runs=args.runs, buffers=tuple(args.buffers), epsilon=args.epsilon,
                     k_pairs=args.k_pairs, n_samples=args.samples, seed=args.seed)
    result = fig1_study(cfg)
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(result, fh, indent=2)
    return {"mse": result["mse"], "max_mc_stderr": max(result["mc_stderr"])}


def _sigma_search(args):
    if args.rff_dim is None:
        raise ConfigError("sigma-search needs --rff-dim")
    args.rff_sigma = args.sigmas[0]
    cfg = _config(args)
    best, errors = sigma_search(cfg, args.sigmas, args.validation, data=load_csv(args.data))
    return {"best_sigma": best, "validation_errors": {repr(k): v for k, v in errors.items()}}


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"run": _run, "fig1": _fig1, "sigma-search": _sigma_search}[args.command]
    try:
        out = handler(args)
    except (ParseError, ConfigError, OSError, ValueError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, ParseError) and exc.line is not None:
            record["line"] = exc.line
        print(json.dumps(record), file=sys.stderr)
        return 2
    print(json.dumps(out, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
