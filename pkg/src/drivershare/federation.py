"""Federated training of a shared GP driver model.

Each round the coordinator broadcasts the global parameters, every vehicle
runs local SGD on its own data starting from them, and the coordinator
replaces the global parameters by the size-weighted average of the local
results.  The coordinator only ever sees parameters, dataset sizes and scalar
losses reported by the vehicles.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .gp import Dataset, HyperParams, nlml
from .trainer import TrainingConfig, TrainingError, sgd_local

__all__ = [
    "FederationConfig",
    "FederationWeights",
    "FederationHistory",
    "FederationError",
    "RoundRecord",
    "Vehicle",
    "compute_weights",
    "aggregate",
    "round_rng",
    "coordinate",
    "run_federation",
    "train_local",
]


class FederationError(RuntimeError):
    def __init__(self, message: str, vehicle_id: str | None = None, round_index: int | None = None):
        super().__init__(message)
        self.vehicle_id = vehicle_id
        self.round_index = round_index


@dataclass(frozen=True)
class FederationConfig:
    rounds: int
    training: TrainingConfig
    initial_params: HyperParams

    def __post_init__(self):
        if int(self.rounds) < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")


@dataclass(frozen=True)
class FederationWeights:
    alphas: np.ndarray

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float).reshape(-1)
        if a.size == 0:
            raise ValueError("need at least one weight")
        if np.any(a <= 0) or np.any(a > 1) or abs(a.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must lie in (0, 1] and sum to 1, got {a}")
        a.flags.writeable = False
        object.__setattr__(self, "alphas", a)

    def __len__(self) -> int:
        return self.alphas.size


@dataclass
class RoundRecord:
    global_params: HyperParams
    local_params: dict[str, HyperParams]
    # full-batch NLML of each vehicle at its own local parameters
    local_losses: dict[str, float]
    # full-batch NLML of each vehicle at the aggregated parameters
    global_losses: dict[str, float]
    # sum_v alpha_v * global_losses[v]
    global_loss: float


@dataclass
class FederationHistory:
    vehicle_ids: list[str]
    weights: list[float]
    rounds: list[RoundRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rounds)

    def to_dict(self) -> dict:
        return {
            "vehicle_ids": list(self.vehicle_ids),
            "weights": list(self.weights),
            "rounds": [
                {
                    "round": s + 1,
                    "global_params": r.global_params.as_dict(),
                    "global_loss": r.global_loss,
                    "vehicles": {
                        v: {
                            "local_params": r.local_params[v].as_dict(),
                            "local_loss": r.local_losses[v],
                            "loss_at_global": r.global_losses[v],
                        }
                        for v in self.vehicle_ids
                    },
                }
                for s, r in enumerate(self.rounds)
            ],
        }


def compute_weights(sizes: Sequence[int]) -> FederationWeights:
    sizes = np.asarray(sizes, dtype=float).reshape(-1)
    if sizes.size == 0:
        raise ValueError("no vehicles")
    if np.any(sizes < 1):
        raise ValueError(f"every dataset size must be >= 1, got {sizes.tolist()}")
    a = sizes / sizes.sum()
    # push the rounding residue onto the largest weight so the sum is exact-ish
    a[np.argmax(a)] += 1.0 - a.sum()
    return FederationWeights(a)


def aggregate(local_params: Sequence[HyperParams], weights: FederationWeights) -> HyperParams:
    """Weighted average of the local parameters in log space.

    Computed as ``z_0 + sum_v alpha_v (z_v - z_0)``, which returns the common
    value exactly when all vehicles agree.
    """
    if len(local_params) != len(weights) or len(local_params) == 0:
        raise ValueError(f"{len(local_params)} parameter sets but {len(weights)} weights")
    Z = np.stack([p.to_log() for p in local_params])
    ref = Z[0]
    return HyperParams.from_log(ref + weights.alphas @ (Z - ref))


def round_rng(seed: int, vehicle_id: str, round_index: int) -> np.random.Generator:
    """Independent stream for one vehicle in one round.

    Derived from ``(seed, crc32(vehicle_id), round_index)`` only, so results do
    not depend on the order or thread in which vehicles are updated.
    """
    key = zlib.crc32(str(vehicle_id).encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key, int(round_index)))
    return np.random.Generator(np.random.PCG64(ss))


class Participant(Protocol):
    """What the coordinator is allowed to know about a vehicle."""

    vehicle_id: str
    num_samples: int

    def local_update(self, params: HyperParams, training: TrainingConfig, round_index: int) -> HyperParams: ...

    def report_loss(self, params: HyperParams) -> float: ...


class Vehicle:
    """A federation participant that keeps its data to itself.

    Random streams are keyed by ``stream_key`` (the vehicle id by default);
    giving several vehicles the same key makes them draw identical batches.
    """

    def __init__(self, data: Dataset, stream_key: str | None = None):
        self._data = data
        self.vehicle_id = data.vehicle_id
        self.num_samples = len(data)
        self.stream_key = self.vehicle_id if stream_key is None else stream_key

    def local_update(self, params: HyperParams, training: TrainingConfig, round_index: int) -> HyperParams:
        rng = round_rng(training.seed, self.stream_key, round_index)
        return sgd_local(params, self._data, training, rng=rng)

    def report_loss(self, params: HyperParams) -> float:
        return nlml(params, self._data)


def coordinate(
    participants: Sequence[Participant],
    cfg: FederationConfig,
    max_workers: int | None = None,
) -> tuple[HyperParams, FederationHistory]:
    if len(participants) == 0:
        raise ValueError("federation needs at least one vehicle")
    ids = [p.vehicle_id for p in participants]
    if len(set(ids)) != len(ids):
        raise ValueError(f"vehicle ids must be unique, got {ids}")
    weights = compute_weights([p.num_samples for p in participants])
    history = FederationHistory(vehicle_ids=ids, weights=weights.alphas.tolist())
    theta = cfg.initial_params

    def call(p: Participant, method: str, *args):
        try:
            return getattr(p, method)(*args)
        except (TrainingError, ArithmeticError, ValueError) as exc:
            r = args[-1] + 1 if method == "local_update" else len(history) + 1
            raise FederationError(
                f"vehicle {p.vehicle_id!r}, round {r}: {exc}", vehicle_id=p.vehicle_id, round_index=r
            ) from exc

    def broadcast(method: str, per_vehicle_args):
        jobs = list(zip(participants, per_vehicle_args))
        if pool is None:
            return [call(p, method, *a) for p, a in jobs]
        return list(pool.map(lambda job: call(job[0], method, *job[1]), jobs))

    pool = ThreadPoolExecutor(max_workers) if max_workers and max_workers > 1 else None
    try:
        for s in range(cfg.rounds):
            local = broadcast("local_update", [(theta, cfg.training, s)] * len(participants))
            theta = aggregate(local, weights)
            local_losses = broadcast("report_loss", [(q,) for q in local])
            global_losses = broadcast("report_loss", [(theta,)] * len(participants))
            history.rounds.append(
                RoundRecord(
                    global_params=theta,
                    local_params=dict(zip(ids, local)),
                    local_losses=dict(zip(ids, local_losses)),
                    global_losses=dict(zip(ids, global_losses)),
                    global_loss=float(weights.alphas @ np.asarray(global_losses)),
                )
            )
    finally:
        if pool is not None:
            pool.shutdown()
    return theta, history


def run_federation(
    datasets: Sequence[Dataset], cfg: FederationConfig, max_workers: int | None = None
) -> tuple[HyperParams, FederationHistory]:
    """Federated training over ``datasets``; returns the final global
    parameters and the per-round history."""
    return coordinate([Vehicle(d) for d in datasets], cfg, max_workers=max_workers)


def train_local(data: Dataset, cfg: FederationConfig) -> HyperParams:
    """Local-only training with the same budget and random streams as a
    federation run: ``rounds`` chained calls of ``local_updates`` steps."""
    theta = cfg.initial_params
    for s in range(cfg.rounds):
        theta = sgd_local(theta, data, cfg.training, rng=round_rng(cfg.training.seed, data.vehicle_id, s))
    return theta
