"""Euler-discretized underdamped Langevin dynamics and the unit-time kernel.

One Euler step at level ``l`` (step ``delta = 2**-l``) maps ``(x, v)`` to::

    x' = x + v * delta + sigma_l * gamma
    v' = v + (b(x) - kappa * v) * delta + sigma * dB

with ``b = -grad U`` and ``gamma, dB ~ N(0, delta I)``. The position noise
scale ``sigma_l`` shrinks with the level; it is what makes one step a
non-degenerate Gaussian in the full phase space, so two chains can be
maximally coupled at the last step of a kernel.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _jit
from .errors import ConfigError, DegenerateTransitionError, DimensionError, NumericalError
from .streams import CountingStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PhaseState:
    """Position/velocity pair of one chain."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64, ndmin=1)
        v = np.array(self.v, dtype=np.float64, ndmin=1)
        if x.ndim != 1 or x.shape != v.shape or x.shape[0] < 1:
            raise DimensionError(f"x and v must be vectors of equal length >= 1, got {x.shape} and {v.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.x.shape[0]

    @classmethod
    def zeros(cls, d: int) -> "PhaseState":
        return cls(np.zeros(d), np.zeros(d))

    def identical(self, other: "PhaseState") -> bool:
        """Exact (bitwise-value) equality of both components."""
        return bool(np.array_equal(self.x, other.x) and np.array_equal(self.v, other.v))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.v])


@dataclass(frozen=True)
class LevelParams:
    """Discretization level ``l``: step ``2**-l``, ``2**l`` steps per unit time."""

    l: int
    sigma_l: float

    def __post_init__(self):
        if self.l < 0:
            raise ConfigError(f"level must be >= 0, got {self.l}")
        if self.sigma_l < 0:
            raise ConfigError("sigma_l must be non-negative")

    @property
    def delta(self) -> float:
        return math.ldexp(1.0, -self.l)

    @property
    def steps(self) -> int:
        return 1 << self.l


@dataclass(frozen=True)
class DynamicsParams:
    """Friction ``kappa``, diffusion ``sigma`` and the position-noise schedule.

    The position noise at level ``l`` is ``noise_scale * 2**(-noise_rate * l)``;
    the default gives ``sigma_l = delta_l``. ``kappa`` defaults to
    ``sigma**2 / 2``, the choice under which the position marginal of the
    invariant law is proportional to ``exp(-U)``.
    """

    sigma: float = 3.0
    kappa: float | None = None
    noise_scale: float = 1.0
    noise_rate: float = 1.0

    def __post_init__(self):
        if self.kappa is None:
            object.__setattr__(self, "kappa", 0.5 * self.sigma ** 2)
        if self.sigma < 0 or self.kappa < 0:
            raise ConfigError("sigma and kappa must be non-negative")
        if self.noise_scale < 0 or self.noise_rate < 0:
            raise ConfigError("position-noise schedule must be non-negative and non-increasing")
        if not self.satisfies_invariance():
            logger.warning("2*kappa != sigma^2 (kappa=%g, sigma=%g): target is exp(-(2 kappa / sigma^2) U)",
                           self.kappa, self.sigma)

    def satisfies_invariance(self) -> bool:
        return math.isclose(2.0 * self.kappa, self.sigma ** 2, rel_tol=1e-12, abs_tol=1e-15)

    def sigma_l(self, l: int) -> float:
        return self.noise_scale * 2.0 ** (-self.noise_rate * l)

    def level(self, l: int) -> LevelParams:
        return LevelParams(int(l), self.sigma_l(l))


@dataclass(frozen=True)
class GaussianStepParams:
    """Mean and diagonal standard deviation of one Euler step in phase space (length 2d)."""

    mean: np.ndarray
    stddev: np.ndarray


@dataclass(frozen=True)
class NoisePath:
    """Position and velocity increments for consecutive Euler steps, each row N(0, delta I)."""

    gammas: np.ndarray
    brownian: np.ndarray

    def __len__(self) -> int:
        return self.gammas.shape[0]

    def coarsen(self) -> "NoisePath":
        """Sum consecutive pairs, giving the increments of the level below."""
        n, d = self.gammas.shape
        if n % 2:
            raise DimensionError(f"cannot coarsen a path of odd length {n}")
        g = self.gammas.reshape(n // 2, 2, d)
        b = self.brownian.reshape(n // 2, 2, d)
        return NoisePath(g[:, 0] + g[:, 1], b[:, 0] + b[:, 1])

    def head(self, n: int) -> "NoisePath":
        return NoisePath(self.gammas[:n], self.brownian[:n])


def draw_path(rng: CountingStream, n_steps: int, d: int, delta: float) -> NoisePath:
    """Draw ``n_steps`` position and velocity increments (``2 * n_steps * d`` variates)."""
    scale = math.sqrt(delta)
    gammas = rng.normal((n_steps, d)) * scale
    brownian = rng.normal((n_steps, d)) * scale
    return NoisePath(gammas, brownian)


def _check_dims(state: PhaseState, model, *vectors):
    if state.d != model.d:
        raise DimensionError(f"state has dimension {state.d}, model has {model.d}")
    for vec in vectors:
        if np.shape(vec) != (state.d,):
            raise DimensionError(f"noise increment of shape {np.shape(vec)} does not match d={state.d}")


def advance(xs: np.ndarray, vs: np.ndarray, path: NoisePath, model, dyn: DynamicsParams,
            level: LevelParams) -> None:
    """Run the Euler recursion in place on stacked chains ``(chains, d)`` sharing ``path``."""
    if len(path) == 0:
        return
    if model._jit_args is not None:
        status = _jit.advance(xs, vs, path.gammas, path.brownian, level.delta, level.sigma_l,
                              dyn.kappa, dyn.sigma, *model._jit_args)
        if status >= 0:
            chain, coord = divmod(int(status), xs.shape[1])
            raise NumericalError(f"non-finite drift in chain {chain} at coordinate {coord}", [coord])
        return
    delta, sigma_l, kappa, sigma = level.delta, level.sigma_l, dyn.kappa, dyn.sigma
    for gamma, db in zip(path.gammas, path.brownian):
        for c in range(xs.shape[0]):
            b = _finite_drift(model, xs[c])
            xn = xs[c] + vs[c] * delta + sigma_l * gamma
            vs[c] = vs[c] + (b - kappa * vs[c]) * delta + sigma * db
            xs[c] = xn


def _finite_drift(model, x) -> np.ndarray:
    b = -np.asarray(model.gradient(x), dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(b))
    if bad.size:
        raise NumericalError(f"non-finite drift at coordinates {bad.tolist()}", bad)
    return b


def euler_step(state: PhaseState, model, dyn: DynamicsParams, level: LevelParams,
               gamma, dB) -> PhaseState:
    """One Euler step with caller-supplied increments ``gamma`` and ``dB``."""
    gamma = np.asarray(gamma, dtype=np.float64)
    dB = np.asarray(dB, dtype=np.float64)
    _check_dims(state, model, gamma, dB)
    xs, vs = state.x[None].copy(), state.v[None].copy()
    advance(xs, vs, NoisePath(gamma[None], dB[None]), model, dyn, level)
    return PhaseState(xs[0], vs[0])


def apply_kernel(state: PhaseState, model, dyn: DynamicsParams, level: LevelParams,
                 rng: CountingStream) -> PhaseState:
    """Unit-time kernel: ``2**l`` Euler steps with fresh noise (``2**(l+1) * d`` normals)."""
    _check_dims(state, model)
    path = draw_path(rng, level.steps, state.d, level.delta)
    xs, vs = state.x[None].copy(), state.v[None].copy()
    advance(xs, vs, path, model, dyn, level)
    return PhaseState(xs[0], vs[0])


def transition_params(state: PhaseState, model, dyn: DynamicsParams,
                      level: LevelParams) -> GaussianStepParams:
    """Law of one Euler step from ``state``: a diagonal Gaussian on R^(2d)."""
    _check_dims(state, model)
    if level.sigma_l <= 0:
        raise DegenerateTransitionError(
            f"sigma_l = 0 at level {level.l}: the one-step position law is a point mass")
    delta = level.delta
    b = _finite_drift(model, state.x)
    mean = np.concatenate([state.x + state.v * delta, state.v + (b - dyn.kappa * state.v) * delta])
    root = math.sqrt(delta)
    stddev = np.concatenate([np.full(state.d, level.sigma_l * root), np.full(state.d, dyn.sigma * root)])
    return GaussianStepParams(mean, stddev)
