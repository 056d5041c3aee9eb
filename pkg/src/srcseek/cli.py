"""Command-line entry point: ``srcseek run | weights | validate``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, dump_config, load_config
from .harness import run_scenario
from .rbffd import DegenerateConfiguration, fd_weights


def _load(path, reps=None, seed=None):
    cfg = load_config(path)
    changes = {}
    if reps is not None:
        changes["n_reps"] = reps
    if seed is not None:
        changes["master_seed"] = seed
    return cfg.replace(scenario=changes) if changes else cfg


def cmd_run(args) -> int:
    cfg = _load(args.config, args.reps, args.seed)
    out = Path(args.out) if args.out else Path("runs") / Path(args.config).stem
    res = run_scenario(cfg, out, jobs=args.jobs)
    sys.stdout.write(res.summary())
    print(f"outputs written to {out}")
    return 0 if not res.failures else 2


def cmd_validate(args) -> int:
    cfg = _load(args.config)
    sys.stdout.write(dump_config(cfg))
    print(f"# {args.config}: ok")
    return 0


def cmd_weights(args) -> int:
    X = np.loadtxt(args.positions, delimiter=",", ndmin=2, comments="#")
    if X.shape[1] != 2:
        raise ValueError(f"expected two columns (x, y), got {X.shape[1]}")
    delta = args.delta
    if delta is None:
        delta = 1.0 / float(np.mean(np.linalg.norm(X - X.mean(axis=0), axis=1)))
    fw = fd_weights(X, delta)
    print(f"# delta {fw.shape_delta!r}")
    print(f"# centroid {fw.centroid[0]!r},{fw.centroid[1]!r}")
    print(f"# condition_estimate {fw.condition_estimate:.6g}")
    if fw.in_subspace:
        print("# warning: formation does not span the plane")
    if fw.ill_conditioned:
        print("# warning: ill-conditioned RBF system")
    for row in fw.w:
        print(",".join(repr(float(v)) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srcseek", description="Stochastic source-seeking simulations.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write metrics")
    r.add_argument("config")
    r.add_argument("--reps", type=int, help="override scenario.n_reps")
    r.add_argument("--seed", type=int, help="override scenario.master_seed")
    r.add_argument("--out", help="output directory (default runs/<config name>)")
    r.add_argument("--jobs", type=int, default=1, help="worker processes for repetitions")
    r.set_defaults(func=cmd_run)

    w = sub.add_parser("weights", help="print RBF-FD gradient weights for a formation")
    w.add_argument("positions", help="CSV file with one x,y row per sensor")
    w.add_argument("--delta", type=float, help="shape parameter (default 1/mean radius)")
    w.set_defaults(func=cmd_weights)

    v = sub.add_parser("validate", help="check a config file and print the resolved version")
    v.add_argument("config")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, DegenerateConfiguration) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
