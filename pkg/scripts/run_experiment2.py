"""Run the heterogeneity experiment over several seeds and print RMSE tables.

    python scripts/run_experiment2.py [--config path] [--seeds 0 1 2 3 4] [--heldout]
"""

import argparse

import numpy as np

from drivershare.cli import format_table
from drivershare.config import load_config
from drivershare.evaluation import run_experiment2


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--heldout", action="store_true", help="evaluate on experiment2.heldout_leader")
    args = ap.parse_args()

    base = load_config(args.config)
    tables = []
    for seed in args.seeds:
        rep = run_experiment2(base.with_seed(seed), evaluate_on="heldout" if args.heldout else None)
        print(f"seed {seed}")
        print(format_table(rep), end="\n\n")
        tables.append(rep.table)
    for vid in tables[0]:
        pooled = np.array([t[vid]["pooled"] for t in tables])
        pers = np.array([t[vid]["personalized"] for t in tables])
        print(f"{vid:>10}: pooled {pooled.mean():.3f} +/- {pooled.std():.3f}, "
              f"personalized {pers.mean():.3f} +/- {pers.std():.3f}, "
              f"personalized wins {int(np.sum(pers < pooled))}/{len(tables)}")


if __name__ == "__main__":
    main()
