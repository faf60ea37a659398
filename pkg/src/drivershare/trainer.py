"""Mini-batch SGD over GP hyperparameters (the local update loop)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import Dataset, HyperParams, NumericalError, nlml_and_grad

__all__ = ["TrainingConfig", "TrainingError", "sample_minibatch", "sgd_local", "GRAD_CLIP"]

GRAD_CLIP = 10.0
MAX_ABS_LOG = 100.0  # |log theta| beyond this counts as divergence


class TrainingError(RuntimeError):
    """Local optimization failed; carries the offending update index."""

    def __init__(self, message: str, step: int | None = None, vehicle_id: str | None = None):
        super().__init__(message)
        self.step = step
        self.vehicle_id = vehicle_id


@dataclass(frozen=True)
class TrainingConfig:
    """SGD settings.

    ``learning_rate`` is decayed geometrically, ``lr * lr_decay**t`` at update t.
    ``batch_size`` larger than a vehicle's dataset means full batch.
    """

    local_updates: int = 50
    learning_rate: float = 0.05
    lr_decay: float = 1.0
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if int(self.local_updates) < 1:
            raise ValueError(f"local_updates must be >= 1, got {self.local_updates}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if not 0 < self.lr_decay <= 1:
            raise ValueError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if int(self.batch_size) < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def sample_minibatch(data: Dataset, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    n = len(data)
    if batch_size >= n:
        return rng.permutation(n)
    return rng.choice(n, size=batch_size, replace=False)


def _clip(g: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(g))
    if norm > GRAD_CLIP:
        return g * (GRAD_CLIP / norm)
    return g


def sgd_local(
    start: HyperParams,
    data: Dataset,
    cfg: TrainingConfig,
    prox: tuple[float, HyperParams] | None = None,
    rng: np.random.Generator | None = None,
) -> HyperParams:
    """Run ``cfg.local_updates`` SGD steps on the mini-batch NLML.

    The mini-batch loss is the NLML of the sub-dataset indexed by the batch,
    scaled by 1/|batch|.  The data gradient is clipped to norm ``GRAD_CLIP``.

    With ``prox=(omega, anchor)`` the objective gains ``omega * ||z - z_anchor||^2``
    in log space.  That term is applied implicitly,

        z <- (z - lr * g + 2 lr omega z_anchor) / (1 + 2 lr omega),

    which is the exact minimizer of the linearized step and stays stable for
    any omega; with omega = 0 it is the plain update.

    ``rng`` defaults to a generator seeded from ``cfg.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    z = start.to_log()
    if prox is not None:
        omega, anchor = prox
        if omega < 0:
            raise ValueError(f"omega must be >= 0, got {omega}")
        z_anchor = anchor.to_log()
    for t in range(cfg.local_updates):
        idx = sample_minibatch(data, cfg.batch_size, rng)
        # NLML ignores pair order; sorting makes the full batch identical to data.
        batch = data.subset(np.sort(idx))
        try:
            _, g = nlml_and_grad(HyperParams.from_log(z), batch)
        except NumericalError as exc:
            raise TrainingError(f"update {t}: {exc}", step=t, vehicle_id=data.vehicle_id) from exc
        if not np.all(np.isfinite(g)):
            raise TrainingError(
                f"update {t}: non-finite gradient {g} at log-params {z}",
                step=t,
                vehicle_id=data.vehicle_id,
            )
        lr = cfg.learning_rate * cfg.lr_decay**t
        step = z - lr * _clip(g)
        if prox is None:
            z = step
        else:
            c = 2.0 * lr * omega
            z = (step + c * z_anchor) / (1.0 + c)
        if not np.all(np.abs(z) <= MAX_ABS_LOG):
            raise TrainingError(f"update {t}: parameters diverged to {z}", step=t, vehicle_id=data.vehicle_id)
    return HyperParams.from_log(z)
