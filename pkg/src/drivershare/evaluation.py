"""Metrics, the pooled-data baseline and the two experiment drivers.

Experiment 1 (knowledge sharing): three vehicles each see one part of a
traffic oscillation (cruise, deceleration, acceleration).  Each is trained
alone and, separately, by federation plus personalization; both models are
then asked to reproduce the AV response to a full oscillation.

Experiment 2 (heterogeneity): an aggressive and a passive AV follow the same
leader.  A single model fit to the pooled data is compared with federated,
personalized models on each vehicle's own response.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cfsim import ControllerConfig, SpeedProfile, generate_oscillation, simulate_follower
from .config import RunConfig, ScenarioSource
from .data import ScenarioSlice, Trajectory, load_trajectory_csv, save_trajectory_csv, slice_trajectory, to_dataset
from .federation import run_federation, train_local
from .gp import Dataset, HyperParams, posterior_predict
from .personalize import personalize
from .trainer import TrainingConfig, sgd_local

__all__ = [
    "PipelineError",
    "ExperimentReport",
    "rmse",
    "oscillation_coverage",
    "train_pooled",
    "build_trajectory",
    "leader_profile",
    "pooled_training_config",
    "run_experiment1",
    "run_experiment2",
]


class PipelineError(RuntimeError):
    """A stage of an experiment failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def rmse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float).reshape(-1)
    actual = np.asarray(actual, dtype=float).reshape(-1)
    if pred.size != actual.size or pred.size == 0:
        raise ValueError(f"rmse needs equal non-empty lengths, got {pred.size} and {actual.size}")
    return float(np.sqrt(np.mean((pred - actual) ** 2)))


def oscillation_coverage(pred, actual) -> float:
    """Predicted speed range over the true response's range (1 = full swing)."""
    spread = float(np.ptp(actual))
    if spread <= 0:
        raise ValueError("true response has zero range; coverage undefined")
    return float(np.ptp(pred)) / spread


def train_pooled(datasets, cfg: TrainingConfig, start: HyperParams, rng=None) -> HyperParams:
    """One model on the concatenation of every vehicle's data."""
    if len(datasets) == 0:
        raise ValueError("need at least one dataset")
    pooled = Dataset(
        np.concatenate([d.inputs for d in datasets]),
        np.concatenate([d.outputs for d in datasets]),
        "pooled",
    )
    return sgd_local(start, pooled, cfg, rng=rng)


@dataclass
class ExperimentReport:
    experiment: int
    config: dict
    vehicles: dict[str, dict] = field(default_factory=dict)
    table: dict[str, dict[str, float]] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    federation: dict = field(default_factory=dict)
    # kept out of the JSON so repeated runs serialize identically
    timings: dict[str, float] = field(default_factory=dict)
    series: dict[str, dict] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "vehicles": self.vehicles,
            "table": self.table,
            "checks": self.checks,
            "federation": self.federation,
            "series": {
                name: {k: [float(x) for x in v] for k, v in self.series_arrays(name).items()}
                for name in sorted(self.series)
            },
        }

    def series_arrays(self, name: str) -> dict[str, np.ndarray]:
        s = self.series[name]
        return {
            "leader_speed": s["trajectory"].leader_speed,
            "true_speed": s["trajectory"].follower_speed,
            "predicted_speed": np.asarray(s["predicted"]),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> list[Path]:
        """Report JSON, per-series prediction CSVs and a separate timings file."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [out_dir / f"experiment{self.experiment}_report.json"]
        written[0].write_text(self.to_json(), encoding="utf-8")
        for name, s in sorted(self.series.items()):
            written.append(
                save_trajectory_csv(s["trajectory"], out_dir / f"experiment{self.experiment}_{name}.csv", s["predicted"])
            )
        timing_path = out_dir / f"experiment{self.experiment}_timings.json"
        timing_path.write_text(json.dumps(self.timings, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(timing_path)
        return written


def build_trajectory(
    source: ScenarioSource,
    controller: ControllerConfig | None,
    noise_std: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Load a trajectory from CSV, or synthesize one by simulating
    ``controller`` behind the generated leader oscillation.

    Synthetic trajectories can carry Gaussian speed-sensor noise of std
    ``noise_std`` on both columns (clipped at 0).
    """
    if source.csv is not None:
        traj = load_trajectory_csv(source.csv)
        if source.window is not None:
            traj = slice_trajectory(traj, ScenarioSlice(*source.window))
        return traj
    osc = source.oscillation
    leader = generate_oscillation(osc.base_speed, osc.dip_speed, osc.durations, osc.dt)
    if controller is None:
        raise ValueError("a controller is needed to synthesize the follower response")
    follower = simulate_follower(leader, controller).follower
    traj = Trajectory(osc.dt, leader.speeds, follower.speeds, f"generated:{osc.base_speed}->{osc.dip_speed}")
    if source.window is not None:
        traj = slice_trajectory(traj, ScenarioSlice(*source.window, label=source.label))
    if noise_std > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        n = len(traj.leader_speed)
        lead = np.maximum(traj.leader_speed + noise_std * rng.standard_normal(n), 0.0)
        foll = np.maximum(traj.follower_speed + noise_std * rng.standard_normal(n), 0.0)
        traj = Trajectory(traj.dt, lead, foll, traj.source_tag + "+noise")
    return traj


def _stage(name: str):
    """Wrap failures of one pipeline stage into a PipelineError."""

    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, PipelineError) and isinstance(exc, Exception):
                raise PipelineError(name, f"{type(exc).__name__}: {exc}") from exc
            return False

    return _Ctx()


def _params_block(**params: HyperParams) -> dict:
    return {k: v.as_dict() for k, v in params.items()}


def run_experiment1(cfg: RunConfig) -> ExperimentReport:
    if cfg.experiment1 is None:
        raise PipelineError("config", "no experiment1 section")
    e = cfg.experiment1
    fed = cfg.federation
    report = ExperimentReport(experiment=1, config=cfg.echo())
    t0 = time.perf_counter()

    with _stage("data"):
        controller = cfg.controllers[e.controller]
        rng = np.random.default_rng(e.data_seed)
        trajs = {
            vid: build_trajectory(src, controller, e.noise_std, rng) for vid, src in sorted(e.scenarios.items())
        }
        datasets = [to_dataset(t, vid) for vid, t in trajs.items()]
        test = build_trajectory(e.test, controller)
    report.timings["data"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("local training"):
        before = {d.vehicle_id: train_local(d, fed) for d in datasets}
    report.timings["local"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("federation"):
        global_params, history = run_federation(datasets, fed)
    with _stage("personalization"):
        after = {d.vehicle_id: personalize(global_params, d, cfg.personalization) for d in datasets}
    report.timings["federation+personalization"] = time.perf_counter() - t0

    with _stage("evaluation"):
        truth = test.follower_speed
        for d in datasets:
            vid = d.vehicle_id
            pred_before = posterior_predict(before[vid], d, test.leader_speed).mean
            pred_after = posterior_predict(after[vid], d, test.leader_speed).mean
            cov_b = oscillation_coverage(pred_before, truth)
            cov_a = oscillation_coverage(pred_after, truth)
            report.vehicles[vid] = {
                "samples": len(d),
                "params": _params_block(local_only=before[vid], personalized=after[vid]),
                "coverage": {"without_sharing": cov_b, "with_sharing": cov_a},
                "rmse": {"without_sharing": rmse(pred_before, truth), "with_sharing": rmse(pred_after, truth)},
                "predicted_range": {
                    "without_sharing": [float(pred_before.min()), float(pred_before.max())],
                    "with_sharing": [float(pred_after.min()), float(pred_after.max())],
                },
            }
            report.table[vid] = {"without_sharing": cov_b, "with_sharing": cov_a}
            report.series[f"{vid}_without_sharing"] = {"trajectory": test, "predicted": pred_before}
            report.series[f"{vid}_with_sharing"] = {"trajectory": test, "predicted": pred_after}

        first = datasets[0].vehicle_id
        cov = {vid: report.table[vid] for vid in report.table}
        report.checks = {
            f"{first}_blind_without_sharing": cov[first]["without_sharing"] < e.blind_max,
            f"{first}_oscillates_with_sharing": cov[first]["with_sharing"] >= e.shared_min,
            **{
                f"{d.vehicle_id}_coverage_improves": cov[d.vehicle_id]["with_sharing"]
                > cov[d.vehicle_id]["without_sharing"]
                for d in datasets[1:]
            },
            "personalized_params_distinct": len({after[v] for v in after}) == len(after),
        }
        report.federation = {"global_params": global_params.as_dict(), "history": history.to_dict()}
        report.vehicles["_test"] = {
            "samples": len(test),
            "true_range": [float(truth.min()), float(truth.max())],
        }
    return report


def run_experiment2(cfg: RunConfig, evaluate_on: str | None = None) -> ExperimentReport:
    """Pooled vs personalized RMSE for each vehicle.

    ``evaluate_on`` overrides the config's choice between the training
    oscillation and the held-out leader.
    """
    if cfg.experiment2 is None:
        raise PipelineError("config", "no experiment2 section")
    if evaluate_on is None:
        evaluate_on = cfg.experiment2.evaluate_on
    if evaluate_on not in ("training", "heldout"):
        raise ValueError(f"evaluate_on must be 'training' or 'heldout', got {evaluate_on!r}")
    e = cfg.experiment2
    if evaluate_on == "heldout" and e.heldout_leader is None:
        raise ValueError("evaluate_on='heldout' needs experiment2.heldout_leader")
    fed = cfg.federation
    report = ExperimentReport(experiment=2, config=cfg.echo())
    t0 = time.perf_counter()

    with _stage("simulation"):
        lead_profile = leader_profile(e.leader)
        trajs = {}
        collisions = {}
        for vid, cname in e.vehicles.items():
            trace = simulate_follower(lead_profile, cfg.controllers[cname])
            collisions[vid] = len(trace.collisions)
            trajs[vid] = Trajectory(lead_profile.dt, lead_profile.speeds, trace.follower.speeds, f"{vid}:{cname}")
        datasets = [to_dataset(t, vid) for vid, t in trajs.items()]
        if evaluate_on == "heldout":
            held = leader_profile(e.heldout_leader)
            eval_trajs = {
                vid: Trajectory(held.dt, held.speeds, simulate_follower(held, cfg.controllers[c]).follower.speeds)
                for vid, c in e.vehicles.items()
            }
        else:
            eval_trajs = trajs
    report.timings["simulation"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("pooled training"):
        pooled_cfg = pooled_training_config(cfg)
        pooled = train_pooled(datasets, pooled_cfg, cfg.initial_params)
        pooled_data = Dataset(
            np.concatenate([d.inputs for d in datasets]), np.concatenate([d.outputs for d in datasets]), "pooled"
        )
    report.timings["pooled"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    with _stage("federation"):
        global_params, history = run_federation(datasets, fed)
    with _stage("personalization"):
        personal = {d.vehicle_id: personalize(global_params, d, cfg.personalization) for d in datasets}
    report.timings["federation+personalization"] = time.perf_counter() - t0

    with _stage("evaluation"):
        for d in datasets:
            vid = d.vehicle_id
            tr = eval_trajs[vid]
            p_pool = posterior_predict(pooled, pooled_data, tr.leader_speed).mean
            p_pers = posterior_predict(personal[vid], d, tr.leader_speed).mean
            report.table[vid] = {
                "pooled": rmse(p_pool, tr.follower_speed),
                "personalized": rmse(p_pers, tr.follower_speed),
            }
            report.vehicles[vid] = {
                "controller": e.vehicles[vid],
                "samples": len(d),
                "collisions": collisions[vid],
                "params": _params_block(pooled=pooled, personalized=personal[vid]),
                "rmse_follower_vs_leader": rmse(tr.follower_speed, tr.leader_speed),
            }
            report.series[f"{vid}_pooled"] = {"trajectory": tr, "predicted": p_pool}
            report.series[f"{vid}_personalized"] = {"trajectory": tr, "predicted": p_pers}
        report.checks = {
            **{f"{vid}_personalized_beats_pooled": t["personalized"] < t["pooled"] for vid, t in report.table.items()},
            "personalized_params_distinct": len(set(personal.values())) == len(personal),
        }
        report.federation = {
            "global_params": global_params.as_dict(),
            "history": history.to_dict(),
            "evaluated_on": evaluate_on,
        }
    return report


def leader_profile(source: ScenarioSource) -> SpeedProfile:
    if source.csv is not None:
        traj = build_trajectory(source, None)
        return SpeedProfile(traj.dt, traj.leader_speed)
    osc = source.oscillation
    prof = generate_oscillation(osc.base_speed, osc.dip_speed, osc.durations, osc.dt)
    if source.window is not None:
        prof = prof[source.window[0] : source.window[1]]
    return prof


def pooled_training_config(cfg: RunConfig) -> TrainingConfig:
    """Training config for the pooled baseline."""
    # Same total update budget as one vehicle gets across all federation rounds.
    return replace(cfg.training, local_updates=cfg.rounds * cfg.training.local_updates)
