"""Per-vehicle fine-tuning of the global parameters under a proximal penalty."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gp import Dataset, HyperParams
from .trainer import TrainingConfig, sgd_local

__all__ = ["PersonalizationConfig", "personalize"]


@dataclass(frozen=True)
class PersonalizationConfig:
    """``omega`` weighs the squared log-space distance to the global parameters.

    ``training.local_updates`` is ignored; ``steps`` sets the update count.
    """

    omega: float
    steps: int
    training: TrainingConfig

    def __post_init__(self):
        if not self.omega >= 0:
            raise ValueError(f"omega must be >= 0, got {self.omega}")
        if int(self.steps) < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")


def personalize(
    anchor: HyperParams,
    data: Dataset,
    cfg: PersonalizationConfig,
    rng: np.random.Generator | None = None,
) -> HyperParams:
    """Minimize ``nlml(theta) + omega * ||log theta - log anchor||^2`` on the
    vehicle's own data, starting from ``anchor``."""
    if cfg.steps == 0:
        return anchor
    training = replace(cfg.training, local_updates=int(cfg.steps))
    return sgd_local(anchor, data, training, prox=(cfg.omega, anchor), rng=rng)
