"""Target models supplying the potential U = -log(target density) and its gradient.

The built-in models evaluate through compiled kernels; :class:`CallableModel`
wraps arbitrary Python callables and runs on the (slower) numpy path.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from . import _jit
from .errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

_EMPTY_INTS = np.zeros(1, dtype=np.int64)
_EMPTY_FLOATS = np.zeros(1)
_EMPTY_MAT = np.zeros((1, 1))
_EMPTY_VEC = np.zeros(1)


class TargetModel:
    """Base class: a dimension plus ``potential`` and ``gradient``.

    Subclasses either set ``_jit_args`` (a compiled argument pack) or override
    :meth:`potential` and :meth:`gradient`.
    """

    name = "model"
    _jit_args: tuple | None = None

    def __init__(self, d: int):
        if int(d) < 1:
            raise ConfigError(f"model dimension must be >= 1, got {d}")
        self.d = int(d)

    def _check(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 1 or x.shape[0] != self.d:
            raise DimensionError(f"{self.name}: expected a vector of length {self.d}, got shape {x.shape}")
        return x

    def potential(self, x) -> float:
        return float(_jit.potential(*self._jit_args, self._check(x)))

    def gradient(self, x) -> np.ndarray:
        x = self._check(x)
        out = np.empty(self.d)
        _jit.gradient_into(*self._jit_args, x, out)
        return out

    def drift(self, x) -> np.ndarray:
        """Langevin drift b = -grad U."""
        return -self.gradient(x)

    def potential_batch(self, xs) -> np.ndarray:
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        if self._jit_args is not None:
            return _jit.potential_batch(*self._jit_args, xs)
        return np.array([self.potential(x) for x in xs])

    def gradient_batch(self, xs) -> np.ndarray:
        xs = np.ascontiguousarray(xs, dtype=np.float64)
        if self._jit_args is not None:
            return _jit.gradient_batch(*self._jit_args, xs)
        return np.array([self.gradient(x) for x in xs])

    @property
    def reference_mean(self) -> np.ndarray | None:
        """Known expectation of the position under the target, if any."""
        return None

    def __repr__(self) -> str:
        return f"{type(self).__name__}(d={self.d})"


class GaussianModel(TargetModel):
    """Isotropic Gaussian potential ``U(x) = precision * |x - mean|^2 / 2``.

    With ``2 kappa = sigma^2`` the position marginal is N(mean, I / precision),
    which makes it the analytic oracle for unbiasedness checks. ``precision=0``
    gives a flat potential (zero drift).
    """

    name = "gaussian"

    def __init__(self, mean, precision: float = 1.0):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64)).copy()
        super().__init__(mean.shape[0])
        if precision < 0:
            raise ConfigError("precision must be non-negative")
        self.mean = mean
        self.precision = float(precision)
        self._jit_args = (_jit.GAUSSIAN, _EMPTY_INTS, np.array([self.precision]),
                          _EMPTY_MAT, _EMPTY_MAT, self.mean)

    @property
    def reference_mean(self):
        return self.mean.copy()

    def __repr__(self):
        return f"GaussianModel(mean={self.mean.tolist()}, precision={self.precision})"


class DoubleWellModel(TargetModel):
    """``U(x) = |x|^4 / 4 - |x|^2 / 2``; the target is symmetric with mean zero."""

    name = "double-well"

    def __init__(self, d: int = 100):
        super().__init__(d)
        self._jit_args = (_jit.DOUBLE_WELL, _EMPTY_INTS, _EMPTY_FLOATS,
                          _EMPTY_MAT, _EMPTY_MAT, _EMPTY_VEC)

    @property
    def reference_mean(self):
        return np.zeros(self.d)


class GinzburgLandauModel(TargetModel):
    """Lattice Ginzburg-Landau free energy on a periodic ``d0 x d0 x d0`` grid.

    Sites are flattened in C order, ``(i, j, k) -> (i * d0 + j) * d0 + k``.

    Args:
        d0: Lattice side length; the dimension is ``d0**3``.
        t_bar: Reduced temperature ratio T_c / T.
        gamma: Gradient (stiffness) coefficient.
        zeta: Quartic coefficient.
    """

    name = "ginzburg-landau"

    def __init__(self, d0: int = 10, t_bar: float = 2.0, gamma: float = 0.1, zeta: float = 0.5):
        if d0 < 1:
            raise ConfigError("lattice side d0 must be >= 1")
        if min(t_bar, gamma, zeta) <= 0:
            raise ConfigError("t_bar, gamma and zeta must be positive")
        super().__init__(d0 ** 3)
        self.d0 = int(d0)
        self.t_bar, self.gamma, self.zeta = float(t_bar), float(gamma), float(zeta)
        self._jit_args = (_jit.GINZBURG_LANDAU, np.array([self.d0], dtype=np.int64),
                          np.array([self.t_bar, self.gamma, self.zeta]),
                          _EMPTY_MAT, _EMPTY_MAT, _EMPTY_VEC)

    @property
    def reference_mean(self):
        return np.zeros(self.d)

    def __repr__(self):
        return (f"GinzburgLandauModel(d0={self.d0}, t_bar={self.t_bar}, "
                f"gamma={self.gamma}, zeta={self.zeta})")


class LogisticRegressionModel(TargetModel):
    """Posterior of Bayesian logistic regression with a Gaussian prior.

    The prior precision defaults to ``X^T X / n`` of the supplied covariates.

    Args:
        covariates: ``(n, d)`` design matrix.
        labels: ``n`` binary labels in {0, 1}.
        precision: Optional ``(d, d)`` prior precision matrix.
    """

    name = "logistic"

    def __init__(self, covariates, labels, precision=None):
        covariates = np.ascontiguousarray(covariates, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.float64).ravel()
        if covariates.ndim != 2 or covariates.shape[0] != labels.shape[0]:
            raise DimensionError("covariates must be (n, d) with n labels")
        if not np.all((labels == 0) | (labels == 1)):
            raise ConfigError("labels must be 0 or 1")
        super().__init__(covariates.shape[1])
        n = covariates.shape[0]
        if precision is None:
            precision = covariates.T @ covariates / n
        precision = np.ascontiguousarray(precision, dtype=np.float64)
        if precision.shape != (self.d, self.d):
            raise DimensionError(f"precision must be ({self.d}, {self.d})")
        self.covariates = covariates
        self.labels = labels
        self.precision = precision
        self._jit_args = (_jit.LOGISTIC, _EMPTY_INTS, _EMPTY_FLOATS,
                          self.covariates, self.precision, self.labels)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    def to_csv(self, path) -> None:
        """Write ``n`` rows: ``d`` covariate columns followed by the label."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"x{i}" for i in range(self.d)] + ["y"])
            for row, y in zip(self.covariates, self.labels):
                writer.writerow([repr(float(v)) for v in row] + [int(y)])

    @classmethod
    def from_csv(cls, path) -> "LogisticRegressionModel":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            rows = [list(map(float, r)) for r in reader if r]
        data = np.array(rows)
        return cls(data[:, :-1], data[:, -1])


class CallableModel(TargetModel):
    """Model built from Python callables ``potential(x)`` and ``gradient(x)``."""

    def __init__(self, d: int, potential, gradient, name: str = "callable", reference_mean=None):
        super().__init__(d)
        self._potential = potential
        self._gradient = gradient
        self.name = name
        self._reference = None if reference_mean is None else np.asarray(reference_mean, dtype=float)

    def potential(self, x) -> float:
        return float(self._potential(self._check(x)))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self._gradient(self._check(x)), dtype=np.float64)

    @property
    def reference_mean(self):
        return self._reference


def make_logistic_model(seed: int, n: int = 100, d: int = 5) -> LogisticRegressionModel:
    """Synthetic logistic-regression posterior.

    Covariates are uniform on {-1, 1}^d and then standardized column-wise
    (sample sd with ``ddof=1``); a hidden coefficient vector drawn from N(0, I)
    generates Bernoulli labels. A zero-variance column triggers regeneration
    from the next sub-stream.
    """
    if n < 2 or d < 1:
        raise ConfigError("need n >= 2 and d >= 1")
    attempt = 0
    while True:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(attempt,))))
        raw = rng.choice(np.array([-1.0, 1.0]), size=(n, d))
        sd = raw.std(axis=0, ddof=1)
        if np.all(sd > 0):
            break
        logger.info("degenerate covariate column with seed %s attempt %d; regenerating", seed, attempt)
        attempt += 1
    X = (raw - raw.mean(axis=0)) / sd
    # re-centre once more so the column means are zero to rounding
    X -= X.mean(axis=0)
    truth = rng.standard_normal(d)
    prob = 1.0 / (1.0 + np.exp(-(X @ truth)))
    y = (rng.random(n) < prob).astype(np.float64)
    return LogisticRegressionModel(X, y)


MODEL_NAMES = ("gaussian", "logistic", "double-well", "ginzburg-landau")


def build_model(name: str, *, dim: int | None = None, d0: int | None = None, seed: int = 0,
                n_data: int = 100, data_path: str | Path | None = None) -> TargetModel:
    """Construct a named built-in model with desk-scale defaults.

    Defaults: gaussian d=2 with mean (1, -1, 1, ...); logistic d=5, n=100;
    double-well d=5; Ginzburg-Landau d0=4.
    """
    if name == "gaussian":
        dim = 2 if dim is None else dim
        mean = np.array([1.0 if i % 2 == 0 else -1.0 for i in range(dim)])
        return GaussianModel(mean)
    if name == "logistic":
        if data_path is not None:
            return LogisticRegressionModel.from_csv(data_path)
        return make_logistic_model(seed, n=n_data, d=5 if dim is None else dim)
    if name == "double-well":
        return DoubleWellModel(5 if dim is None else dim)
    if name == "ginzburg-landau":
        return GinzburgLandauModel(4 if d0 is None else d0)
    raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
