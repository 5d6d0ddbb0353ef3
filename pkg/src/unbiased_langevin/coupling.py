"""Reflection maximal coupling of two Gaussians with a shared diagonal covariance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTransitionError, DimensionError
from .streams import CountingStream


@dataclass(frozen=True)
class CoupledDraw:
    """Pair of draws; ``met`` is set exactly when ``y2`` is a copy of ``y1``."""

    y1: np.ndarray
    y2: np.ndarray
    met: bool


@dataclass(frozen=True)
class PairedCoupledDraw:
    fine: CoupledDraw
    coarse: CoupledDraw


def _standardize(mu1, mu2, stddev):
    mu1 = np.asarray(mu1, dtype=np.float64)
    mu2 = np.asarray(mu2, dtype=np.float64)
    stddev = np.asarray(stddev, dtype=np.float64)
    if not (mu1.shape == mu2.shape == stddev.shape) or mu1.ndim != 1:
        raise DimensionError("mu1, mu2 and stddev must be vectors of equal length")
    if np.any(~(stddev > 0)):
        raise DegenerateTransitionError("reflection coupling needs strictly positive scales")
    return mu1, mu2, stddev, (mu1 - mu2) / stddev


def _reflect(mu1, mu2, stddev, z, xi, log_w) -> CoupledDraw:
    y1 = mu1 + stddev * xi
    # log phi(xi + z) - log phi(xi), evaluated without forming either density
    log_ratio = -0.5 * (np.dot(xi + z, xi + z) - np.dot(xi, xi))
    if log_w <= log_ratio:
        return CoupledDraw(y1, y1.copy(), True)
    e = z / np.sqrt(np.dot(z, z))
    y2 = mu2 + stddev * (xi - 2.0 * np.dot(e, xi) * e)
    return CoupledDraw(y1, y2, False)


def reflection_max_coupling(mu1, mu2, stddev, rng: CountingStream) -> CoupledDraw:
    """Sample from the reflection maximal coupling of N(mu1, S) and N(mu2, S), S = diag(stddev^2).

    Consumes ``len(mu1)`` normals and one uniform. Identical means always meet.
    """
    mu1, mu2, stddev, z = _standardize(mu1, mu2, stddev)
    xi = rng.normal(mu1.shape[0])
    log_w = np.log(rng.uniform())
    return _reflect(mu1, mu2, stddev, z, xi, log_w)


def sync_pairwise_reflection_coupling(fine_mu, coarse_mu, fine_stddev, coarse_stddev,
                                      rng: CountingStream) -> PairedCoupledDraw:
    """Reflection maximal coupling applied per level with the same (xi, W).

    Args:
        fine_mu: ``(mu, mu_tilde)`` of the fine pair.
        coarse_mu: ``(mu, mu_tilde)`` of the coarse pair.
        fine_stddev: Shared scale of the fine pair.
        coarse_stddev: Shared scale of the coarse pair.
    """
    f1, f2, fs, fz = _standardize(fine_mu[0], fine_mu[1], fine_stddev)
    c1, c2, cs, cz = _standardize(coarse_mu[0], coarse_mu[1], coarse_stddev)
    if f1.shape != c1.shape:
        raise DimensionError("fine and coarse means must have the same length")
    xi = rng.normal(f1.shape[0])
    log_w = np.log(rng.uniform())
    return PairedCoupledDraw(_reflect(f1, f2, fs, fz, xi, log_w), _reflect(c1, c2, cs, cz, xi, log_w))


def overlap_probability(mu1, mu2, stddev) -> float:
    """Maximal meeting probability 2 * Phi(-|z| / 2) for equal-covariance Gaussians."""
    from scipy.special import ndtr

    _, _, _, z = _standardize(mu1, mu2, stddev)
    return float(2.0 * ndtr(-0.5 * np.sqrt(np.dot(z, z))))
