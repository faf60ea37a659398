"""Run the knowledge-sharing experiment with a config file and print coverage.

    python scripts/run_experiment1.py [--config path] [--out dir] [--seed n]
"""

import argparse

from drivershare.cli import format_table
from drivershare.config import load_config
from drivershare.evaluation import run_experiment1


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    rep = run_experiment1(cfg)
    print(format_table(rep))
    for name, ok in rep.checks.items():
        print(f"  {'ok  ' if ok else 'FAIL'} {name}")
    for p in rep.write(args.out or cfg.output_dir):
        print(f"wrote {p}")


if __name__ == "__main__":
    main()
