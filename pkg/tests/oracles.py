"""Independent reference implementations used to check the package.

Nothing here imports package internals beyond plain value types; the
linear algebra is done the slow, obvious way (explicit inverse, slogdet).
"""

from __future__ import annotations

import itertools
import math

import numpy as np

REL_JITTER = 1e-8  # the first jitter level the package always applies


def dense_ky(sigma0, length_scale, sigma_eps, X, rel_jitter=REL_JITTER):
    X = np.asarray(X, dtype=float)
    d2 = (X[:, None] - X[None, :]) ** 2
    K = sigma0 * np.exp(-d2 / (2 * length_scale**2)) + sigma_eps**2 * np.eye(X.size)
    return K + rel_jitter * np.mean(np.diag(K)) * np.eye(X.size)


def dense_nlml(sigma0, length_scale, sigma_eps, X, y, rel_jitter=REL_JITTER):
    y = np.asarray(y, dtype=float)
    Ky = dense_ky(sigma0, length_scale, sigma_eps, X, rel_jitter)
    Kinv = np.linalg.inv(Ky)
    sign, logdet = np.linalg.slogdet(Ky)
    assert sign > 0
    n = y.size
    return float((0.5 * y @ Kinv @ y + 0.5 * logdet + 0.5 * n * math.log(2 * math.pi)) / n)


def dense_posterior(sigma0, length_scale, sigma_eps, X, y, Xq, rel_jitter=REL_JITTER):
    X = np.asarray(X, dtype=float)
    Xq = np.asarray(Xq, dtype=float)
    Kinv = np.linalg.inv(dense_ky(sigma0, length_scale, sigma_eps, X, rel_jitter))
    Ks = sigma0 * np.exp(-((X[:, None] - Xq[None, :]) ** 2) / (2 * length_scale**2))
    mean = Ks.T @ Kinv @ np.asarray(y, dtype=float)
    var = sigma0 - np.einsum("ij,ik,kj->j", Ks, Kinv, Ks)
    return mean, np.maximum(var, 0.0)


def central_diff(f, z, h=1e-5):
    """Central finite differences of scalar ``f`` at vector ``z``."""
    z = np.asarray(z, dtype=float)
    g = np.empty_like(z)
    for j in range(z.size):
        e = np.zeros_like(z)
        e[j] = h
        g[j] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def all_batches(n, b):
    return [list(c) for c in itertools.combinations(range(n), b)]


def euler_follower(leader, gains, time_gap, standstill, dt, limit=3.0):
    """Plain-loop car-following reference: returns (speeds, spacings)."""
    ks, kv, ka = gains
    v = leader[0]
    d = v * time_gap + standstill
    a = 0.0
    speeds, gaps = [v], [d]
    for t in range(len(leader) - 1):
        u = ks * (d - (v * time_gap + standstill)) + kv * (leader[t] - v) + ka * a
        a_next = min(max(u, -limit), limit)
        v_next = max(0.0, v + a_next * dt)
        d = d + (leader[t] - v) * dt
        v, a = v_next, a_next
        speeds.append(v)
        gaps.append(d)
    return np.array(speeds), np.array(gaps)
