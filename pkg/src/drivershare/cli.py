"""Command-line entry point: ``drivershare simulate | train | experiment``.

Exit codes: 0 success, 1 internal error, 2 configuration or input error,
3 pipeline or numerical error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .cfsim import simulate_follower
from .config import ConfigError, RunConfig, load_config
from .data import Trajectory, TrajectoryFormatError, load_trajectory_csv, save_trajectory_csv, to_dataset
from .evaluation import (
    ExperimentReport,
    PipelineError,
    leader_profile,
    pooled_training_config,
    run_experiment1,
    run_experiment2,
    train_pooled,
)
from .federation import FederationError, run_federation, train_local
from .gp import HyperParams, NumericalError
from .personalize import personalize
from .trainer import TrainingError

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_PIPELINE = 0, 1, 2, 3
U64_MAX = 2**64 - 1


def _guard(fn):
    """Run a command body and translate exceptions into exit codes."""
    try:
        fn()
    except (ConfigError, TrajectoryFormatError, FileNotFoundError) as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except (PipelineError, FederationError, TrainingError, NumericalError) as exc:
        click.echo(f"pipeline error: {exc}", err=True)
        sys.exit(EXIT_PIPELINE)
    except Exception as exc:  # noqa: BLE001
        click.echo(f"internal error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)


def _load(config: str | None, seed: int | None) -> RunConfig:
    cfg = load_config(config)
    if seed is not None:
        if not 0 <= seed <= U64_MAX:
            raise ConfigError(f"--seed must fit in an unsigned 64-bit integer, got {seed}")
        cfg = cfg.with_seed(seed)
    return cfg


def _out_dir(cfg: RunConfig, out: str | None) -> Path:
    path = Path(out) if out is not None else cfg.output_dir
    path.mkdir(parents=True, exist_ok=True)
    return path


_common = [
    click.option("--config", "config", type=click.Path(dir_okay=False), default=None,
                 help="YAML run config (default: the packaged default.yaml)."),
    click.option("--out", "out", type=click.Path(file_okay=False), default=None,
                 help="Output directory (default: output_dir from the config)."),
    click.option("--seed", "seed", type=int, default=None, help="Override the config seed."),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Federated GP car-following driver models."""


@main.command()
@common_options
def simulate(config, out, seed):
    """Simulate the configured controller behind the configured leader."""

    def body():
        cfg = _load(config, seed)
        if cfg.simulate is None:
            raise ConfigError("config has no simulate section")
        sim = cfg.simulate
        try:
            leader = leader_profile(sim.leader)
            trace = simulate_follower(leader, cfg.controllers[sim.controller])
            traj = Trajectory(leader.dt, leader.speeds, trace.follower.speeds, f"simulate:{sim.controller}")
        except (ConfigError, TrajectoryFormatError, FileNotFoundError):
            raise
        except Exception as exc:
            raise PipelineError("simulation", f"{type(exc).__name__}: {exc}") from exc
        path = save_trajectory_csv(
            traj, _out_dir(cfg, out) / f"simulate_{sim.controller}.csv", comment=f"controller={sim.controller}"
        )
        click.echo(f"wrote {path} ({len(traj)} rows)")
        click.echo(f"collisions: {len(trace.collisions)}")

    _guard(body)


def _read_anchor(path: Path) -> HyperParams:
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    if isinstance(raw, dict) and "params" in raw:
        params = raw["params"]
        if len(params) != 1:
            raise ConfigError(f"{path}: anchor file holds {len(params)} parameter sets, expected one")
        raw = next(iter(params.values()))
    try:
        return HyperParams.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a parameter set: {exc}") from None


@main.command()
@click.argument("mode", type=click.Choice(["local", "federated", "pooled", "personalize"]))
@common_options
def train(mode, config, out, seed):
    """Fit GP hyperparameters on the CSV datasets listed under ``train``."""

    def body():
        cfg = _load(config, seed)
        if not cfg.train.datasets:
            raise ConfigError("train.datasets is empty")
        datasets = [to_dataset(load_trajectory_csv(p), p.stem) for p in cfg.train.datasets]
        ids = [d.vehicle_id for d in datasets]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"train.datasets: file stems must be unique vehicle ids, got {ids}")
        result: dict = {"mode": mode, "config": cfg.echo()}
        if mode == "local":
            result["params"] = {d.vehicle_id: train_local(d, cfg.federation).as_dict() for d in datasets}
        elif mode == "federated":
            g, history = run_federation(datasets, cfg.federation)
            result["params"] = {"global": g.as_dict()}
            result["history"] = history.to_dict()
        elif mode == "pooled":
            p = train_pooled(datasets, pooled_training_config(cfg), cfg.initial_params)
            result["params"] = {"pooled": p.as_dict()}
        else:
            if cfg.train.anchor is None:
                raise ConfigError("personalize mode needs train.anchor (a parameters JSON file)")
            anchor = _read_anchor(cfg.train.anchor)
            result["params"] = {
                d.vehicle_id: personalize(anchor, d, cfg.personalization).as_dict() for d in datasets
            }
        path = _out_dir(cfg, out) / f"train_{mode}.json"
        path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        click.echo(f"wrote {path}")

    _guard(body)


def format_table(report: ExperimentReport) -> str:
    """Experiment 2: models as rows, vehicles as columns (RMSE, m/s).
    Experiment 1: vehicles as rows, coverage before/after sharing."""
    if report.experiment == 2:
        vids = list(report.table)
        head = f"{'Model':<38}" + "".join(f"{v:>12}" for v in vids)
        lines = ["Prediction Error (RMSE, m/s)", head, "-" * len(head)]
        for key, name in (("pooled", "Pooled data (one-size-fits-all)"),
                          ("personalized", "Knowledge sharing & personalization")):
            lines.append(f"{name:<38}" + "".join(f"{report.table[v][key]:>12.3f}" for v in vids))
        return "\n".join(lines)
    head = f"{'Vehicle':<14}{'without sharing':>18}{'with sharing':>16}"
    lines = ["Oscillation coverage on the full-oscillation test", head, "-" * len(head)]
    for v, row in report.table.items():
        lines.append(f"{v:<14}{row['without_sharing']:>18.3f}{row['with_sharing']:>16.3f}")
    return "\n".join(lines)


@main.command()
@click.option("--which", type=click.Choice(["1", "2"]), required=True, help="Experiment to run.")
@common_options
def experiment(which, config, out, seed):
    """Run an experiment end to end and write its report."""

    def body():
        cfg = _load(config, seed)
        runner = run_experiment1 if which == "1" else run_experiment2
        section = cfg.experiment1 if which == "1" else cfg.experiment2
        if section is None:
            raise ConfigError(f"config has no experiment{which} section")
        report = runner(cfg)
        paths = report.write(_out_dir(cfg, out))
        click.echo(format_table(report))
        failed = [k for k, ok in report.checks.items() if not ok]
        click.echo(f"checks: {len(report.checks) - len(failed)}/{len(report.checks)} hold"
                   + (f" (failed: {', '.join(failed)})" if failed else ""))
        click.echo(f"report: {paths[0]}")

    _guard(body)


if __name__ == "__main__":
    main()
