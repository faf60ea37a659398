"""Zero-mean Gaussian-process regression with an RBF kernel on a scalar input.

The driver model maps leader speed (m/s) to the subject vehicle's speed (m/s).
Hyperparameters are ``(sigma0, length_scale, sigma_eps)``; the covariance is
``sigma0 * exp(-(x - x')**2 / (2 l**2))`` plus ``sigma_eps**2`` on the diagonal
of the training block.

All loss and gradient computations are expressed over the log of the
hyperparameters, which is the coordinate system the optimizer works in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

__all__ = [
    "HyperParams",
    "Dataset",
    "PosteriorPrediction",
    "NumericalError",
    "rbf_kernel",
    "covariance_matrix",
    "nlml",
    "nlml_grad",
    "nlml_and_grad",
    "posterior_predict",
    "JITTER_START",
    "JITTER_MAX",
]

JITTER_START = 1e-8
JITTER_MAX = 1e-2
_LOG_2PI = math.log(2.0 * math.pi)


class NumericalError(ArithmeticError):
    """Raised when the training covariance cannot be factorized."""

    def __init__(self, message: str, jitter: float | None = None):
        super().__init__(message)
        self.jitter = jitter


class HyperParams:
    """GP hyperparameters stored canonically in log space.

    Construct from positive values with ``HyperParams(sigma0, length_scale,
    sigma_eps)`` or from log values with :meth:`from_log`.  ``from_log(z).to_log()``
    returns ``z`` bit for bit, so chained optimizer calls never drift through
    repeated exp/log conversions.
    """

    __slots__ = ("_log",)
    names = ("sigma0", "length_scale", "sigma_eps")

    def __init__(self, sigma0: float, length_scale: float, sigma_eps: float):
        values = np.array([sigma0, length_scale, sigma_eps], dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise ValueError(
                f"hyperparameters must be finite and > 0, got sigma0={sigma0}, "
                f"length_scale={length_scale}, sigma_eps={sigma_eps}"
            )
        self._log = np.log(values)
        self._log.flags.writeable = False

    @classmethod
    def from_log(cls, log_values) -> "HyperParams":
        z = np.array(log_values, dtype=float).reshape(-1)
        if z.shape != (3,) or not np.all(np.isfinite(z)):
            raise ValueError(f"expected 3 finite log-parameters, got {log_values!r}")
        obj = cls.__new__(cls)
        z.flags.writeable = False
        obj._log = z
        return obj

    def to_log(self) -> np.ndarray:
        return self._log.copy()

    @property
    def sigma0(self) -> float:
        return float(np.exp(self._log[0]))

    @property
    def length_scale(self) -> float:
        return float(np.exp(self._log[1]))

    @property
    def sigma_eps(self) -> float:
        return float(np.exp(self._log[2]))

    def as_dict(self) -> dict:
        return {
            "sigma0": self.sigma0,
            "length_scale": self.length_scale,
            "sigma_eps": self.sigma_eps,
            "log": [float(v) for v in self._log],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HyperParams":
        # The log entry is exact; raw values are there for humans.
        if "log" in d:
            return cls.from_log(d["log"])
        return cls(d["sigma0"], d["length_scale"], d["sigma_eps"])

    def __eq__(self, other) -> bool:
        if not isinstance(other, HyperParams):
            return NotImplemented
        return bool(np.array_equal(self._log, other._log))

    def __hash__(self) -> int:
        return hash(self._log.tobytes())

    def __repr__(self) -> str:
        return (
            f"HyperParams(sigma0={self.sigma0:.6g}, length_scale={self.length_scale:.6g}, "
            f"sigma_eps={self.sigma_eps:.6g})"
        )


@dataclass(frozen=True)
class Dataset:
    """Training pairs for one vehicle: leader speed in, own speed out."""

    inputs: np.ndarray
    outputs: np.ndarray
    vehicle_id: str = "vehicle"

    def __post_init__(self):
        x = np.array(self.inputs, dtype=float).reshape(-1)
        y = np.array(self.outputs, dtype=float).reshape(-1)
        if x.shape != y.shape:
            raise ValueError(f"inputs ({x.size}) and outputs ({y.size}) differ in length")
        if x.size == 0:
            raise ValueError("dataset must contain at least one sample")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError(f"dataset {self.vehicle_id!r} contains non-finite values")
        x.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    def __len__(self) -> int:
        return self.inputs.size

    def subset(self, index) -> "Dataset":
        index = np.asarray(index)
        return Dataset(self.inputs[index], self.outputs[index], self.vehicle_id)


@dataclass(frozen=True)
class PosteriorPrediction:
    mean: np.ndarray
    variance: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return self.mean.size


def rbf_kernel(x1: float, x2: float, length_scale: float) -> float:
    if not length_scale > 0:
        raise ValueError(f"length_scale must be > 0, got {length_scale}")
    return math.exp(-((x1 - x2) ** 2) / (2.0 * length_scale**2))


def _sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, None] - b[None, :]) ** 2


def covariance_matrix(X1, X2, params: HyperParams, add_noise: bool = False) -> np.ndarray:
    """Cross-covariance ``sigma0 * k(X1, X2)``.

    With ``add_noise`` the noise variance is added on the diagonal; this only
    makes sense for the training block, so ``X1`` and ``X2`` must then be the
    same points.
    """
    X1 = np.asarray(X1, dtype=float).reshape(-1)
    X2 = np.asarray(X2, dtype=float).reshape(-1)
    if X1.size == 0 or X2.size == 0:
        raise ValueError("covariance_matrix needs non-empty inputs")
    l = params.length_scale
    K = params.sigma0 * np.exp(-_sqdist(X1, X2) / (2.0 * l * l))
    if add_noise:
        if X1.shape != X2.shape or not np.array_equal(X1, X2):
            raise ValueError("add_noise requires X1 and X2 to be the same points")
        K[np.diag_indices_from(K)] += params.sigma_eps**2
    return K


def _factorize(K: np.ndarray):
    """Cholesky of ``K + jitter`` with escalating relative jitter.

    Returns ``(cho_factor, rel_jitter)`` where the jitter actually added is
    ``rel_jitter * mean(diag(K))``.
    """
    scale = float(np.mean(np.diag(K)))
    rel = JITTER_START
    while True:
        Kj = K.copy()
        Kj[np.diag_indices_from(Kj)] += rel * scale
        try:
            return linalg.cho_factor(Kj, lower=True, check_finite=True), rel
        except (linalg.LinAlgError, ValueError):
            if rel >= JITTER_MAX * (1 - 1e-9):
                raise NumericalError(
                    f"covariance not positive definite even with jitter {rel * scale:.3g} "
                    f"({rel:.0e} x mean diagonal)",
                    jitter=rel * scale,
                ) from None
            rel *= 10.0


def _train_terms(params: HyperParams, X: np.ndarray):
    l = params.length_scale
    D2 = _sqdist(X, X)
    Kf = np.exp(-D2 / (2.0 * l * l))
    K = params.sigma0 * Kf
    K[np.diag_indices_from(K)] += params.sigma_eps**2
    return D2, Kf, K


def nlml_and_grad(params: HyperParams, data: Dataset, with_grad: bool = True):
    """Scaled negative log marginal likelihood ``-log p(y | X) / n`` and its
    gradient with respect to ``log(sigma0), log(l), log(sigma_eps)``."""
    X, y = data.inputs, data.outputs
    n = X.size
    D2, Kf, K = _train_terms(params, X)
    cf, rel = _factorize(K)
    alpha = linalg.cho_solve(cf, y)
    logdet = 2.0 * np.sum(np.log(np.diag(cf[0])))
    loss = (0.5 * y @ alpha + 0.5 * logdet + 0.5 * n * _LOG_2PI) / n
    if not with_grad:
        return float(loss), None

    s0, l, se = params.sigma0, params.length_scale, params.sigma_eps
    # The added jitter is rel * (sigma0 + sigma_eps**2), so it moves with the
    # parameters too; include that so the gradient matches the computed loss.
    eye = np.eye(n)
    dK = (
        s0 * Kf + rel * s0 * eye,
        s0 * Kf * (D2 / (l * l)),
        (2.0 * se * se) * (1.0 + rel) * eye,
    )
    grad = np.empty(3)
    for j, dKj in enumerate(dK):
        trace = np.trace(linalg.cho_solve(cf, dKj))
        grad[j] = 0.5 * (trace - alpha @ dKj @ alpha) / n
    return float(loss), grad


def nlml(params: HyperParams, data: Dataset) -> float:
    return nlml_and_grad(params, data, with_grad=False)[0]


def nlml_grad(params: HyperParams, data: Dataset) -> np.ndarray:
    return nlml_and_grad(params, data)[1]


def posterior_predict(params: HyperParams, train: Dataset, query_inputs) -> PosteriorPrediction:
    Xq = np.asarray(query_inputs, dtype=float).reshape(-1)
    X, y = train.inputs, train.outputs
    _, _, K = _train_terms(params, X)
    cf, _ = _factorize(K)
    Ks = covariance_matrix(X, Xq, params)
    mean = Ks.T @ linalg.cho_solve(cf, y)
    v = linalg.solve_triangular(cf[0], Ks, lower=True)
    var = params.sigma0 - np.sum(v * v, axis=0)
    return PosteriorPrediction(mean=mean, variance=np.maximum(var, 0.0))
