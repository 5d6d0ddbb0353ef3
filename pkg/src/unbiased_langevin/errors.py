"""Exception types raised across the package."""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Array lengths of states, models or noise increments disagree."""


class NumericalError(FloatingPointError):
    """A drift or state value became NaN or infinite.

    Attributes:
        coordinates: Indices of the offending coordinates.
    """

    def __init__(self, message: str, coordinates=()):
        super().__init__(message)
        self.coordinates = tuple(int(i) for i in coordinates)


class DegenerateTransitionError(ValueError):
    """A Gaussian transition has a zero scale, so it cannot be maximally coupled."""


class ConfigError(ValueError):
    """Invalid estimator, dynamics or experiment configuration."""


class FitError(ValueError):
    """Least-squares fit requested on degenerate data."""


class NonMeetingError(RuntimeError):
    """A coupled pair failed to meet before the iteration cap.

    Attributes:
        level: Discretization level of the pair that did not meet.
        gap: Euclidean distance between the two chains' phase states at the cap.
        iterations: Number of coupled kernel applications performed.
        replicate: Replicate id, filled in by the harness when known.
    """

    def __init__(self, level: int, gap: float, iterations: int, replicate=None):
        self.level = level
        self.gap = float(gap)
        self.iterations = iterations
        self.replicate = replicate
        super().__init__(str(self))

    def __str__(self) -> str:
        where = f" (replicate {self.replicate})" if self.replicate is not None else ""
        return (
            f"chains at level {self.level} did not meet within {self.iterations} "
            f"kernel steps{where}; state gap {self.gap:.3e}"
        )


def state_gap(u, u_tilde) -> float:
    return float(np.sqrt(np.sum((u.x - u_tilde.x) ** 2) + np.sum((u.v - u_tilde.v) ** 2)))
