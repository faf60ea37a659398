"""Lower bound on the RMSE of any model that maps leader speed at time t to
follower speed at time t, for the Experiment 2 vehicles.

Samples sharing exactly the same leader speed (the cruise phases, and the
mirrored points of the dip) must receive the same prediction, so the best
possible prediction there is the group mean.  The residual within those
groups bounds the achievable RMSE from below.

    python scripts/exp2_error_floor.py [--config path]
"""

import argparse

import numpy as np

from drivershare.cfsim import simulate_follower
from drivershare.config import load_config
from drivershare.evaluation import leader_profile


def floor_rmse(x, y):
    sq = 0.0
    for v in np.unique(x):
        grp = y[x == v]
        sq += np.sum((grp - grp.mean()) ** 2)
    return float(np.sqrt(sq / y.size))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    args = ap.parse_args()
    cfg = load_config(args.config)
    e = cfg.experiment2
    lead = leader_profile(e.leader)
    ys = {}
    for vid, cname in e.vehicles.items():
        ys[vid] = simulate_follower(lead, cfg.controllers[cname]).follower.speeds
        print(f"{vid:>10}: floor on own data {floor_rmse(lead.speeds, ys[vid]):.3f} m/s")
    x = np.tile(lead.speeds, len(ys))
    y = np.concatenate(list(ys.values()))
    print(f"{'pooled':>10}: floor on pooled data {floor_rmse(x, y):.3f} m/s")


if __name__ == "__main__":
    main()
