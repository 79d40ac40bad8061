"""
Gradient descent over reparametrizations.

Warps are represented by psi = sqrt(phi') on the grid of the first curve.
phi is the cumulative trapezoidal integral of psi**2 rescaled by
r = 2*pi / integral(psi**2) so that it ends at 2*pi, and the SRV factor is
sqrt(r) psi. The matching energy is therefore invariant under scaling psi,
and its gradient is the exact adjoint of that discretization.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid

from app.config import FeatureSpec, GradientOptions
from app.curve_core import (
    EPS_REG,
    TWO_PI,
    DiscreteCurve,
    SrvCurve,
    Topology,
    finite_difference,
    grid_step,
    quadrature_weights,
    srvt,
    srvt_inverse,
    uniform_grid,
)
from app.errors import InvalidCurve, InvalidWarp, LineSearchFailed, RegularityViolation
from app.features import FeatureTerms
from app.srvt_geometry import normal_basis_values
from app.warps import Warp

logger = logging.getLogger(__name__)

TOL_NORM = 1e-9 * TWO_PI
GRADIENT_FLOOR = 1e-10


@dataclass(frozen=True)
class PsiField:
    """
    Non-negative square-root slope field with trapezoidal integral(psi**2) = 2*pi.

    Use ``from_values`` to clip and normalize arbitrary samples.
    """
    values: np.ndarray
    topology: Topology = "open"

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 3:
            raise InvalidWarp("psi must be a 1-d array with at least 3 samples")
        if np.any(values < 0.0):
            raise InvalidWarp("psi must be non-negative")
        defect = abs(float(np.sum(quadrature_weights(len(values), self.topology) * values ** 2)) - TWO_PI)
        if defect > TOL_NORM:
            raise InvalidWarp(f"psi is not normalized: |integral(psi^2) - 2 pi| = {defect:.3g}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values, topology: Topology = "open") -> "PsiField":
        values = np.maximum(np.asarray(values, dtype=float), 0.0)
        return cls(normalize_psi(values, topology), topology)

    @classmethod
    def identity(cls, n: int, topology: Topology = "open") -> "PsiField":
        return cls(np.ones(n), topology)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def params(self) -> np.ndarray:
        return uniform_grid(self.n, self.topology)

    @property
    def weights(self) -> np.ndarray:
        return quadrature_weights(self.n, self.topology)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.weights * a * b))


def normalize_psi(values: np.ndarray, topology: Topology = "open") -> np.ndarray:
    total = float(np.sum(quadrature_weights(len(values), topology) * values ** 2))
    if total <= 0.0:
        raise InvalidWarp("psi vanishes identically")
    return values * np.sqrt(TWO_PI / total)


def _psi_values(psi: Union[PsiField, np.ndarray]) -> np.ndarray:
    return psi.values if isinstance(psi, PsiField) else np.asarray(psi, dtype=float)


def _integrate(psi: np.ndarray, step: float, weights: np.ndarray) -> Tuple[np.ndarray, float, float]:
    """Raw cumulative integral of psi**2, its total and the rescaling r"""
    squared = psi ** 2
    cumulative = cumulative_trapezoid(squared, dx=step, initial=0.0)
    total = float(np.sum(weights * squared))
    if total <= 0.0:
        raise InvalidWarp("psi vanishes identically")
    return cumulative, total, TWO_PI / total


def psi_to_warp(psi: PsiField) -> Warp:
    """phi(theta) = r * integral_0^theta psi**2, ending exactly at 2*pi"""
    values = _psi_values(psi)
    topology = psi.topology if isinstance(psi, PsiField) else "open"
    params = uniform_grid(len(values), topology)
    weights = quadrature_weights(len(values), topology)
    cumulative, _, scale = _integrate(values, grid_step(len(values), topology), weights)
    return Warp(params, scale * cumulative, topology, slopes=scale * values ** 2, psi=values)


def warp_to_psi(w: Warp) -> PsiField:
    """
    psi = sqrt(phi'), normalized.

    Warps built by psi_to_warp give back their own psi; other warps go through
    their grid slopes, which reproduces piecewise-linear warps to second order
    in the grid step.
    """
    if w.psi is not None:
        return PsiField.from_values(w.psi, w.topology)
    return PsiField.from_values(np.sqrt(np.maximum(w.derivative(), 0.0)), w.topology)


@lru_cache(maxsize=16)
def _difference_matrix(n: int, topology: Topology) -> np.ndarray:
    matrix = finite_difference(np.eye(n), 1.0, topology)
    matrix.setflags(write=False)
    return matrix


class MatchingObjective:
    """
    Discrete matching energy sum_k w_k |q0_k - s_k Q(phi_k)|^2 + features.

    Q is a cubic spline through the SRV samples of c1 (periodic for closed
    curves), s the SRV factor sqrt(phi'), and phi(theta0) is read off the grid
    values by linear interpolation.
    """

    def __init__(self, q0: SrvCurve, c1: DiscreteCurve, features: Optional[FeatureSpec] = None,
                 c0: Optional[DiscreteCurve] = None, q1: Optional[SrvCurve] = None):
        if q0.topology != c1.topology:
            raise InvalidCurve("Both curves must have the same topology")
        if q0.dim != c1.dim:
            raise InvalidCurve(f"Curves live in R^{q0.dim} and R^{c1.dim}")
        self.q0 = q0
        self.q1 = q1 if q1 is not None else srvt(c1)
        self.spline = self.q1.spline
        self.topology = q0.topology
        self.params = q0.params
        self.weights = q0.weights
        self.step = q0.step
        features = features if features is not None else FeatureSpec.empty()
        if c0 is None and any(not pair.parametric for pair in features.pairs):
            c0 = srvt_inverse(q0)
        self.terms = FeatureTerms(features, c0, c1)

        grid = np.append(self.params, TWO_PI) if self.topology == "closed" else self.params
        theta0 = self.terms.theta0
        index = np.clip(np.searchsorted(grid, theta0, side="right") - 1, 0, len(grid) - 2)
        self._feature_index = index
        self._feature_alpha = (theta0 - grid[index]) / (grid[index + 1] - grid[index])

    @property
    def n(self) -> int:
        return self.q0.n

    def phi_at_features(self, phi: np.ndarray) -> np.ndarray:
        if self.topology == "closed":
            phi = np.append(phi, TWO_PI)
        alpha = self._feature_alpha
        return (1.0 - alpha) * phi[self._feature_index] + alpha * phi[self._feature_index + 1]

    def energy_parts(self, factor: np.ndarray, phi: np.ndarray) -> Tuple[float, float]:
        """(elastic, feature) energy for SRV factor s and grid values phi"""
        residual = self.q0.values - factor[:, None] * self.spline(phi)
        elastic = float(np.sum(self.weights * np.einsum("kd,kd->k", residual, residual)))
        feature = self.terms.total(self.phi_at_features(phi)) if len(self.terms) else 0.0
        return elastic, feature

    def energy(self, factor: np.ndarray, phi: np.ndarray) -> float:
        return sum(self.energy_parts(factor, phi))

    def partials(self, factor: np.ndarray, phi: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Partial derivatives of the energy with respect to s_k and phi_k"""
        moved = self.spline(phi)
        residual = self.q0.values - factor[:, None] * moved
        d_factor = -2.0 * self.weights * np.einsum("kd,kd->k", residual, moved)
        d_phi = -2.0 * self.weights * factor * np.einsum("kd,kd->k", residual, self.spline(phi, 1))
        if len(self.terms):
            d_phi = d_phi + self._spread(self.terms.gradient(self.phi_at_features(phi)))
        return d_factor, d_phi

    def _spread(self, per_feature: np.ndarray) -> np.ndarray:
        """Adjoint of the linear interpolation used for phi(theta0)"""
        size = self.n + (1 if self.topology == "closed" else 0)
        spread = np.zeros(size)
        np.add.at(spread, self._feature_index, (1.0 - self._feature_alpha) * per_feature)
        np.add.at(spread, self._feature_index + 1, self._feature_alpha * per_feature)
        return spread[: self.n]

    def psi_state(self, psi: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
        """SRV factor, phi, raw cumulative integral, total and rescaling for psi"""
        cumulative, total, scale = _integrate(psi, self.step, self.weights)
        return np.sqrt(scale) * psi, scale * cumulative, cumulative, total, scale

    def psi_energy(self, psi: np.ndarray) -> float:
        factor, phi, _, _, _ = self.psi_state(psi)
        return self.energy(factor, phi)

    def pullback(self, psi: np.ndarray, d_factor: np.ndarray, d_phi: np.ndarray) -> np.ndarray:
        """
        Chain rule from (s, phi) partials to d/dpsi_k.

        phi_j = r C_j with C the cumulative trapezoid of psi**2, so C_j
        depends on psi_k**2 with weight h/2 at k = 0 and k = j and weight h in
        between; r = 2 pi / sum(w psi**2) contributes through both s and phi.
        """
        _, _, cumulative, total, scale = self.psi_state(psi)
        step = self.step
        later = np.cumsum(d_phi[::-1])[::-1] - d_phi
        accumulated = step * later + 0.5 * step * d_phi
        accumulated[0] = 0.5 * step * later[0]
        root = np.sqrt(scale)
        d_scale = -2.0 * scale * self.weights * psi / total
        through_scale = np.dot(d_factor, psi) / (2.0 * root) + np.dot(d_phi, cumulative)
        return root * d_factor + 2.0 * scale * psi * accumulated + d_scale * through_scale

    def psi_gradient(self, psi: np.ndarray) -> Tuple[float, np.ndarray]:
        """Energy and L2 gradient in psi"""
        factor, phi, _, _, _ = self.psi_state(psi)
        d_factor, d_phi = self.partials(factor, phi)
        return self.energy(factor, phi), self.pullback(psi, d_factor, d_phi) / self.weights

    def closed_normals(self, psi: np.ndarray) -> np.ndarray:
        """Normal basis of the closure constraint at q1 * phi pulled back to psi, shape (d, N)"""
        factor, phi, _, _, _ = self.psi_state(psi)
        moved = self.spline(phi)
        slope = self.spline(phi, 1)
        basis = normal_basis_values(factor[:, None] * moved, allow_zero=True)
        normals = []
        for field_values in basis:
            d_factor = self.weights * np.einsum("kd,kd->k", field_values, moved)
            d_phi = self.weights * factor * np.einsum("kd,kd->k", field_values, slope)
            normals.append(self.pullback(psi, d_factor, d_phi) / self.weights)
        return np.array(normals)

    def project_normals(self, psi: np.ndarray, gradient: np.ndarray) -> np.ndarray:
        normals = self.closed_normals(psi)
        if not np.any(normals):
            return gradient
        gram = (normals * self.weights) @ normals.T
        coefficients = np.linalg.pinv(gram, rcond=1e-12) @ ((normals * self.weights) @ gradient)
        return gradient - coefficients @ normals

    def phi_slopes(self, phi: np.ndarray) -> np.ndarray:
        if self.topology == "closed":
            return finite_difference(phi - self.params, self.step, "closed") + 1.0
        return finite_difference(phi, self.step, "open")


def _objective(q0: SrvCurve, c1: DiscreteCurve, features: Optional[FeatureSpec],
               c0: Optional[DiscreteCurve]) -> MatchingObjective:
    return MatchingObjective(q0, c1, features, c0=c0)


def energy_open(q0: SrvCurve, c1: DiscreteCurve, psi: Union[PsiField, np.ndarray],
                features: Optional[FeatureSpec] = None, c0: Optional[DiscreteCurve] = None) -> float:
    """
    Matching energy of psi: |q0 - (q1 * phi)|^2 plus weighted feature terms.

    Args:
        q0: SRV function of the first curve, whose grid psi lives on
        c1: Second curve
        psi: Square-root slope field
        features: Feature pairs and weight
        c0: First curve for position-space features
    """
    return _objective(q0, c1, features, c0).psi_energy(_psi_values(psi))


def warp_energy(q0: SrvCurve, c1: DiscreteCurve, warp: Warp, features: Optional[FeatureSpec] = None,
                c0: Optional[DiscreteCurve] = None) -> float:
    """Matching energy of a warp, using its stored slopes or its grid finite differences"""
    objective = _objective(q0, c1, features, c0)
    phi = warp.at(objective.params)
    factor = np.sqrt(np.maximum(warp.derivative_at(objective.params), 0.0))
    return objective.energy(factor, phi)


def grad_psi(q0: SrvCurve, c1: DiscreteCurve, psi: Union[PsiField, np.ndarray],
             features: Optional[FeatureSpec] = None, c0: Optional[DiscreteCurve] = None) -> np.ndarray:
    """L2 gradient of energy_open with respect to psi"""
    _, gradient = _objective(q0, c1, features, c0).psi_gradient(_psi_values(psi))
    return gradient


def grad_phi(q0: SrvCurve, c1: DiscreteCurve, warp: Warp, features: Optional[FeatureSpec] = None,
             c0: Optional[DiscreteCurve] = None) -> np.ndarray:
    """
    L2 gradient of warp_energy with respect to the grid values of phi.

    Fixed nodes (phi(0) = 0, and phi(2 pi) = 2 pi for open curves) get zero.
    Feature terms enter through the hat functions of the interpolation cell
    containing theta0.

    Raises:
        RegularityViolation: if phi' <= eps_reg at a node
    """
    objective = _objective(q0, c1, features, c0)
    phi = warp.at(objective.params)
    slopes = objective.phi_slopes(phi)
    if np.any(slopes <= EPS_REG * TWO_PI):
        raise RegularityViolation("phi gradient needs phi' > 0 at every node")
    factor = np.sqrt(slopes)
    d_factor, d_phi = objective.partials(factor, phi)
    operator = _difference_matrix(objective.n, objective.topology) / objective.step
    gradient = operator.T @ (d_factor / (2.0 * factor)) + d_phi
    gradient[0] = 0.0
    if objective.topology == "open":
        gradient[-1] = 0.0
    return gradient / objective.weights


def grad_closed(q0: SrvCurve, c1: DiscreteCurve, psi: Union[PsiField, np.ndarray],
                features: Optional[FeatureSpec] = None, c0: Optional[DiscreteCurve] = None) -> np.ndarray:
    """psi gradient with the pulled-back closure normals projected out"""
    objective = _objective(q0, c1, features, c0)
    values = _psi_values(psi)
    _, gradient = objective.psi_gradient(values)
    return objective.project_normals(values, gradient)


@dataclass
class DescentTrace:
    energies: List[float] = field(default_factory=list)
    gradient_norms: List[float] = field(default_factory=list)
    steps: List[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.steps)


@dataclass
class DescentResult:
    warp: Warp
    energy: float
    trace: DescentTrace
    psi: PsiField

    def __iter__(self) -> Iterator:
        yield self.warp
        yield self.energy
        yield self.trace


def descend(q0: SrvCurve, c1: DiscreteCurve, features: Optional[FeatureSpec] = None,
            init: Optional[PsiField] = None, opts: Optional[GradientOptions] = None,
            c0: Optional[DiscreteCurve] = None) -> DescentResult:
    """
    Projected gradient descent in psi with Armijo backtracking.

    Each step removes the gradient component along psi (and, for closed
    curves, along the pulled-back closure normals), steps, clips psi at 0
    and renormalizes. Iteration stops when the projected gradient norm falls
    below tol_grad times its initial value or after max_iters steps.

    Returns:
        DescentResult; unpacks as (warp, energy, trace)

    Raises:
        LineSearchFailed: if max_halvings halvings find no Armijo step
    """
    opts = opts or GradientOptions()
    objective = _objective(q0, c1, features, c0)
    topology = objective.topology
    psi = (init or PsiField.identity(objective.n, topology)).values
    if len(psi) != objective.n:
        raise InvalidCurve(f"Initial psi has {len(psi)} samples for a grid of {objective.n}")
    weights = objective.weights

    def direction(values):
        energy, gradient = objective.psi_gradient(values)
        if topology == "closed":
            gradient = objective.project_normals(values, gradient)
        along = np.sum(weights * gradient * values) / np.sum(weights * values ** 2)
        return energy, gradient - along * values

    energy, gradient = direction(psi)
    floor = GRADIENT_FLOOR * max(q0.norm_squared(), 1.0)
    trace = DescentTrace(energies=[energy])
    initial_norm = None
    for iteration in range(opts.max_iters):
        norm = float(np.sqrt(np.sum(weights * gradient ** 2)))
        trace.gradient_norms.append(norm)
        if initial_norm is None:
            initial_norm = norm
        if norm <= opts.tol_grad * initial_norm or norm <= floor:
            trace.converged = True
            break

        step = opts.initial_step
        for _ in range(opts.max_halvings):
            candidate = normalize_psi(np.maximum(psi - step * gradient, 0.0), topology)
            candidate_energy = objective.psi_energy(candidate)
            decrease = float(np.sum(weights * gradient * (candidate - psi)))
            if candidate_energy <= energy + opts.armijo_c * decrease and candidate_energy <= energy:
                break
            step *= 0.5
        else:
            raise LineSearchFailed(
                f"No Armijo step after {opts.max_halvings} halvings at iteration {iteration} (energy {energy:.6g})"
            )

        psi = candidate
        energy, gradient = direction(psi)
        trace.energies.append(energy)
        trace.steps.append(step)
        logger.debug(f"Descent iteration {iteration + 1}: energy {energy:.6g}, step {step:.3g}")
    else:
        trace.converged = opts.max_iters == 0

    result = PsiField.from_values(psi, topology)
    logger.info(f"Gradient descent finished after {trace.iterations} iterations, energy {energy:.6g}")
    return DescentResult(psi_to_warp(result), energy, trace, result)
