"""Robustness sweep behind the shipped Experiment 1 data design.

Varies the ramp duration of the long training oscillation and the synthetic
sensor noise, over several training and data seeds, and counts how often all
Experiment 1 checks hold.  Slow (a few minutes).

    python scripts/sweep_experiment1.py
"""

import copy
import itertools
import tempfile
from pathlib import Path

import yaml

from drivershare.config import default_config_path, load_config
from drivershare.evaluation import run_experiment1

RAMPS = (30.0, 35.0, 40.0, 45.0)
NOISES = (0.02, 0.03, 0.04)
TRAIN_SEEDS = (0, 1)
DATA_SEEDS = (0, 1, 2)


def variant(raw, ramp, noise, data_seed):
    raw = copy.deepcopy(raw)
    n = int(round(ramp / 0.1))
    e = raw["experiment1"]
    e["noise_std"], e["data_seed"] = noise, data_seed
    windows = {"vehicle_1": [0, 197], "vehicle_2": [197, 394], "vehicle_3": [197 + n, 394 + n]}
    for vid, w in windows.items():
        e["scenarios"][vid]["durations"] = [19.7, ramp, ramp, 19.7]
        e["scenarios"][vid]["window"] = w
    return raw


def main():
    raw = yaml.safe_load(default_config_path().read_text())
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "cfg.yaml"
        for ramp, noise in itertools.product(RAMPS, NOISES):
            passed = 0
            for seed, ds in itertools.product(TRAIN_SEEDS, DATA_SEEDS):
                path.write_text(yaml.safe_dump(variant(raw, ramp, noise, ds)))
                rep = run_experiment1(load_config(path).with_seed(seed))
                passed += all(rep.checks.values())
            print(f"ramp {ramp:>4} s, noise {noise:.2f} m/s: all checks hold in {passed}/{len(TRAIN_SEEDS) * len(DATA_SEEDS)}")


if __name__ == "__main__":
    main()
