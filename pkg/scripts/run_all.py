"""Run every shipped scenario config and print the final-error summaries.

Outputs go to ``<out>/<config name>/``. Use ``--reps`` for a quick pass.
"""
import argparse
from pathlib import Path

from srcseek.config import load_config
from srcseek.harness import run_scenario

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="*", help="config files (default: configs/*.yaml)")
    ap.add_argument("--reps", type=int)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="runs")
    args = ap.parse_args(argv)

    paths = [Path(p) for p in args.configs] or sorted((ROOT / "configs").glob("*.yaml"))
    failed = False
    for path in paths:
        cfg = load_config(path)
        if args.reps:
            cfg = cfg.replace(scenario={"n_reps": args.reps})
        res = run_scenario(cfg, Path(args.out) / path.stem, jobs=args.jobs)
        mean, std = res.final_error()
        print(f"{path.stem:24s} {res.primary_metric} {mean:8.3f} +- {std:.3f}  "
              f"({len(res.failures)} failed reps)")
        failed |= bool(res.failures)
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
