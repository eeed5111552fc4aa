"""Local convex objectives exposed through value / prox / subgradient queries.

Two instances are provided: the scaled pinball loss whose minimizer over a
sample is the alpha-quantile, and the Euclidean distance to an anchor vector
whose sum over a sample is minimized by the geometric median.  Both have
closed-form proximal maps, which is what the consensus algorithms consume.
"""

from __future__ import annotations

import numpy as np


class PinballObjective:
    """Scaled pinball loss f(x) = L_alpha(a - x) / (1 - alpha).

    Piecewise linear with slope -beta for x < a and +1 for x > a, where
    beta = alpha / (1 - alpha).  Value is 0 exactly at the anchor.
    """

    __slots__ = ("a", "alpha", "beta")

    def __init__(self, a: float, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0, 1)")
        if not np.isfinite(a):
            raise ValueError("anchor must be finite")
        self.a = float(a)
        self.alpha = float(alpha)
        self.beta = alpha / (1.0 - alpha)

    def value(self, x: float) -> float:
        d = self.a - x
        return self.beta * d if d > 0.0 else -d

    def prox(self, z: float, gamma: float) -> float:
        """Closed-form prox: shift by gamma*beta / gamma, or clamp to the anchor."""
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        lo = self.a - gamma * self.beta
        if z < lo:
            return z + gamma * self.beta
        hi = self.a + gamma
        if z > hi:
            return z - gamma
        return self.a

    def subgradient(self, x: float) -> float:
        # midpoint of [-beta, 1] at the kink
        if x < self.a:
            return -self.beta
        if x > self.a:
            return 1.0
        return (1.0 - self.beta) / 2.0


class EuclideanDistanceObjective:
    """Distance to an anchor vector, f(x) = ||x - a||_2.

    The prox shrinks v toward the anchor: a + (1 - lam/||v - a||)_+ (v - a).
    When v is within lam of the anchor the positive-part branch applies and
    the anchor itself is returned, so no division by zero is ever evaluated.
    """

    __slots__ = ("a",)

    def __init__(self, a):
        self.a = np.asarray(a, dtype=float)
        if self.a.ndim != 1 or self.a.size == 0:
            raise ValueError("anchor must be a 1-D vector")
        if not np.all(np.isfinite(self.a)):
            raise ValueError("anchor must be finite")

    def value(self, x) -> float:
        return float(np.linalg.norm(np.asarray(x, dtype=float) - self.a))

    def prox(self, v, lam: float) -> np.ndarray:
        if lam <= 0.0:
            raise ValueError("lam must be positive")
        d = np.asarray(v, dtype=float) - self.a
        norm = float(np.linalg.norm(d))
        if norm <= lam:
            return self.a.copy()
        return self.a + (1.0 - lam / norm) * d

    def subgradient(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - self.a
        norm = float(np.linalg.norm(d))
        if norm == 0.0:
            return np.zeros_like(self.a)
        return d / norm


LocalObjective = PinballObjective | EuclideanDistanceObjective


def pinball_family(anchors, alpha: float) -> list[PinballObjective]:
    """One pinball objective per data point; the sample objective they sum to
    is minimized at the alpha-quantile."""
    return [PinballObjective(float(a), alpha) for a in np.asarray(anchors, dtype=float)]


def euclidean_family(anchors) -> list[EuclideanDistanceObjective]:
    """One distance objective per data vector; their sum is minimized at the
    geometric median."""
    pts = np.asarray(anchors, dtype=float)
    return [EuclideanDistanceObjective(row) for row in pts]


def total_value(objectives, x) -> float:
    """Sum of the per-node objectives at a common (consensus) point."""
    return float(sum(obj.value(x) for obj in objectives))
