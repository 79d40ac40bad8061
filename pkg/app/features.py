"""
Feature matching terms.

Each FeaturePair couples theta0 on the first curve with theta1 on the second.
Given phi(theta0), parameter-space kinds penalize the residual
phi(theta0) - theta1, and position-space kinds compare the point
c0(phi(theta0)) with c1(theta1). Hard bounds act as constraints: they cost 0
inside the bound and +inf outside regardless of the weight lambda.
"""
import logging
from typing import List, Optional

import numpy as np

from app.config import FeaturePair, FeatureSpec
from app.curve_core import DiscreteCurve, interpolant

logger = logging.getLogger(__name__)


class FeatureTerms:
    """
    Vectorized evaluation of the per-pair terms and their phi-derivatives.

    Args:
        spec: Feature pairs and weight
        c0: Curve whose parameter is warped
        c1: Curve supplying the target points c1(theta1)
    """

    def __init__(self, spec: FeatureSpec, c0: Optional[DiscreteCurve] = None, c1: Optional[DiscreteCurve] = None):
        self.spec = spec
        self.pairs = list(spec.pairs)
        self.theta0 = np.array([pair.theta0 for pair in self.pairs], dtype=float)
        self.theta1 = np.array([pair.theta1 for pair in self.pairs], dtype=float)
        needs_points = any(not pair.parametric for pair in self.pairs)
        if needs_points and (c0 is None or c1 is None):
            raise ValueError("Position-space feature terms need both curves")
        self._c0 = None
        self._targets = None
        if needs_points:
            self._c0 = interpolant(c0.params, c0.samples, c0.topology, "cubic")
            self._targets = interpolant(c1.params, c1.samples, c1.topology, "cubic")(self.theta1)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def weight(self) -> float:
        return self.spec.weight

    @property
    def active(self) -> bool:
        """True when the terms can change an energy"""
        if not self.pairs:
            return False
        return self.weight > 0.0 or any(pair.kind == "hard" for pair in self.pairs)

    def _point_gap(self, index: int, phi: np.ndarray) -> np.ndarray:
        return self._c0(phi) - self._targets[index]

    def values(self, index: int, phi) -> np.ndarray:
        """Unweighted term of pair ``index`` for candidate values phi(theta0)"""
        pair = self.pairs[index]
        phi = np.asarray(phi, dtype=float)
        if pair.kind == "quadratic":
            return (phi - pair.theta1) ** 2
        if pair.kind == "huber":
            delta = pair.scale
            return 2.0 * delta ** 2 * (np.sqrt(1.0 + ((phi - pair.theta1) / delta) ** 2) - 1.0)
        gap = self._point_gap(index, phi)
        if pair.kind == "position":
            return np.sum(gap ** 2, axis=-1)
        if pair.kind == "hard":
            return np.where(np.linalg.norm(gap, axis=-1) > pair.bound, np.inf, 0.0)
        points = self._c0(phi)
        flat = np.reshape(points, (-1, points.shape[-1]))
        out = np.array([float(pair.callback(point, self._targets[index])) for point in flat])
        return out.reshape(phi.shape)

    def weighted(self, index: int, phi) -> np.ndarray:
        """Contribution of pair ``index`` to an energy"""
        values = self.values(index, phi)
        if self.pairs[index].kind == "hard":
            return values
        return self.weight * values

    def derivatives(self, index: int, phi) -> np.ndarray:
        """d/dphi of the unweighted term of pair ``index``"""
        pair = self.pairs[index]
        phi = np.asarray(phi, dtype=float)
        if pair.kind == "quadratic":
            return 2.0 * (phi - pair.theta1)
        if pair.kind == "huber":
            residual = phi - pair.theta1
            return 2.0 * residual / np.sqrt(1.0 + (residual / pair.scale) ** 2)
        if pair.kind == "hard":
            return np.zeros_like(phi)
        tangent = self._c0(phi, 1)
        if pair.kind == "position":
            return 2.0 * np.sum(self._point_gap(index, phi) * tangent, axis=-1)
        if pair.derivative is None:
            raise ValueError(f"Feature pair {index} has no derivative callback")
        points = np.reshape(self._c0(phi), (-1, tangent.shape[-1]))
        tangents = np.reshape(tangent, (-1, tangent.shape[-1]))
        out = np.array([
            float(np.dot(pair.derivative(point, self._targets[index]), direction))
            for point, direction in zip(points, tangents)
        ])
        return out.reshape(phi.shape)

    def total(self, phi_at_theta0) -> float:
        """Weighted sum over all pairs given phi(theta0) for every pair"""
        phi_at_theta0 = np.asarray(phi_at_theta0, dtype=float)
        total = 0.0
        for index in range(len(self.pairs)):
            total += float(self.weighted(index, phi_at_theta0[index]))
        return total

    def gradient(self, phi_at_theta0) -> np.ndarray:
        """Weighted d/dphi per pair"""
        phi_at_theta0 = np.asarray(phi_at_theta0, dtype=float)
        return np.array([
            0.0 if pair.kind == "hard" else self.weight * float(self.derivatives(index, phi_at_theta0[index]))
            for index, pair in enumerate(self.pairs)
        ])

    def mirrored(self, c0: Optional[DiscreteCurve] = None, c1: Optional[DiscreteCurve] = None) -> "FeatureTerms":
        """Terms with the curves swapped, for the inverse warp"""
        return FeatureTerms(self.spec.mirrored(), c1, c0)


def max_parametric_deviation(pairs: List[FeaturePair], phi_at_theta0) -> float:
    """Largest |phi(theta0) - theta1| over the pairs"""
    if not pairs:
        return 0.0
    targets = np.array([pair.theta1 for pair in pairs])
    return float(np.max(np.abs(np.asarray(phi_at_theta0) - targets)))

