"""Gaussian toy model with closed-form answers.

State is a d-dimensional standard normal vector and the importance
function is the first coordinate, so tail probabilities, conditional
probabilities, and level quantiles are all available exactly. The kernel
redraws the whole state from the level-conditioned law (first coordinate
truncated normal, rest fresh normals), which is an exact, perfectly mixing
kernel. That makes this model the reference oracle for every estimator
and bound in the package.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .kernels import truncated_normal_draw


def normal_tail(x: float) -> float:
    """P(Z >= x) for standard normal Z."""
    return float(ndtr(-x))


def normal_tail_quantile(p: float) -> float:
    """x with P(Z >= x) = p."""
    return float(-ndtri(p))


@dataclass(frozen=True)
class ToyNormalModel:
    """Standard normal in R^dim with S(x) = x[0] and an exact kernel."""

    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def sample_f(self, count: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((count, self.dim))

    def importance(self, states: np.ndarray) -> np.ndarray:
        return states[:, 0]

    def kernel_step(self, level: float, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        k = states.shape[0]
        out = rng.standard_normal((k, self.dim))
        out[:, 0] = truncated_normal_draw(
            np.zeros(k), np.ones(k), np.full(k, float(level)), np.full(k, np.inf), rng
        )
        return out

    # closed forms used as test oracles

    def event_probability(self, gamma: float) -> float:
        return normal_tail(gamma)

    def conditional_tail(self, x: float, gamma: float) -> float:
        """P(X_1 >= x | X_1 >= gamma)."""
        if x <= gamma:
            return 1.0
        return normal_tail(x) / normal_tail(gamma)

    def conditional_cdf(self, gamma: float):
        """CDF of the first coordinate under the gamma-conditioned law."""

        def cdf(x):
            x = np.asarray(x, dtype=float)
            tail = ndtr(-np.maximum(x, gamma))
            return 1.0 - tail / normal_tail(gamma)

        return cdf
