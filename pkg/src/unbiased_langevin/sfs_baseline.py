"""Fixed-(level, N) Schrödinger-Föllmer sampler used as a comparison baseline.

The diffusion ``dX = b(X, t) dt + dW`` on ``[0, 1]`` from ``X_0 = 0`` has drift

    b(x, t) = E[grad f(x + sqrt(1 - t) Z)] / E[f(x + sqrt(1 - t) Z)],

with ``f = pi / phi`` the target density relative to the standard Gaussian.
Both expectations are replaced by ``N``-sample Monte Carlo means and the SDE
is Euler-discretized with ``2**l`` steps. Only the terminal state is returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .streams import CountingStream


@dataclass(frozen=True)
class SfsConfig:
    level: int
    N: int
    model: object

    def __post_init__(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if self.level < 0:
            raise ConfigError("level must be >= 0")


def sfs_drift_estimate(x, t: float, N: int, model, rng: CountingStream) -> np.ndarray:
    """Self-normalized Monte Carlo estimate of the drift at ``(x, t)``.

    ``log f(z) = -U(z) + |z|^2 / 2`` (up to a constant that cancels), so
    ``grad f = f * (z - grad U(z))``. Weights are formed after subtracting the
    largest log-weight.
    """
    if not t < 1.0:
        raise ConfigError("drift needs t < 1")
    x = np.asarray(x, dtype=np.float64)
    z = rng.normal((N, x.shape[0]))
    pts = x + math.sqrt(1.0 - t) * z
    log_f = -model.potential_batch(pts) + 0.5 * np.einsum("ij,ij->i", pts, pts)
    score = pts - model.gradient_batch(pts)
    top = np.max(log_f)
    if not np.isfinite(top):
        raise NumericalError(f"non-finite log weight at t={t}: max log f = {top}")
    w = np.exp(log_f - top)
    total = w.sum()
    if not total > 0:
        raise NumericalError(f"drift weights underflowed at t={t} (max log f = {top:.3e})")
    return (w @ score) / total


def sfs_sample(config: SfsConfig, rng: CountingStream) -> np.ndarray:
    """Terminal state ``X_1`` of the Euler-discretized sampler."""
    model = config.model
    n_steps = 1 << config.level
    delta = math.ldexp(1.0, -config.level)
    root = math.sqrt(delta)
    x = np.zeros(model.d)
    for k in range(n_steps):
        b = sfs_drift_estimate(x, k * delta, config.N, model, rng)
        x = x + b * delta + root * rng.normal(model.d)
    return x
