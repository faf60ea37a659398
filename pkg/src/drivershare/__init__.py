"""Personalized car-following driver models learned by federated GP training."""

from .cfsim import AGGRESSIVE, PASSIVE, ControllerConfig, generate_oscillation, simulate_follower
from .federation import FederationConfig, compute_weights, aggregate, run_federation, train_local
from .gp import Dataset, HyperParams, NumericalError, nlml, nlml_grad, posterior_predict
from .personalize import PersonalizationConfig, personalize
from .trainer import TrainingConfig, sgd_local

__version__ = "0.1.0"

__all__ = [
    "AGGRESSIVE",
    "PASSIVE",
    "ControllerConfig",
    "Dataset",
    "FederationConfig",
    "HyperParams",
    "NumericalError",
    "PersonalizationConfig",
    "TrainingConfig",
    "aggregate",
    "compute_weights",
    "generate_oscillation",
    "nlml",
    "nlml_grad",
    "personalize",
    "posterior_predict",
    "run_federation",
    "sgd_local",
    "simulate_follower",
    "train_local",
]
