"""
Elastic geometry in square-root velocity coordinates.

For the elastic metric with a = 1, b = 1/2 the SRV transform is an isometry
onto (an open subset of) L2, so geodesics between open curves are straight
lines in SRV space. Closed curves live on the codimension-d submanifold cut
out by the closure condition integral(|q| q) = 0; geodesics between them are
approximated by projecting the snapshots of the straight path back onto that
submanifold with Newton steps along its normal basis.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from app.curve_core import (
    DiscreteCurve,
    InterpolationKind,
    SrvCurve,
    finite_difference,
    srvt,
    srvt_inverse,
)
from app.errors import InvalidCurve, NotConnectable, ProjectionDiverged, RegularityViolation
from app.warps import Warp

logger = logging.getLogger(__name__)

DEFAULT_A = 1.0
DEFAULT_B = 0.5
TOL_ANTI = 1e-6
TOL_CLOSE = 1e-8
MAX_PROJECTION_ITERS = 50
MAX_DAMPING = 30


@dataclass(frozen=True)
class TangentField:
    """Vector field along a curve, sampled on the base grid"""
    vectors: np.ndarray
    base: Union[DiscreteCurve, SrvCurve]

    def __post_init__(self):
        vectors = np.array(self.vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        if vectors.shape != (self.base.n, self.base.dim):
            raise InvalidCurve(
                f"Tangent field of shape {vectors.shape} does not match base grid ({self.base.n}, {self.base.dim})"
            )
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)


@dataclass
class GeodesicPath:
    """
    Snapshots c(t_s, .) of a path of curves at uniform times in [0, 1].

    ``step_energies[s]`` is the contribution of the interval [t_s, t_{s+1}]
    to the path energy, computed from SRV differences.
    """
    steps: List[DiscreteCurve]
    srv_steps: List[SrvCurve]
    times: np.ndarray
    step_energies: np.ndarray
    closure_defects: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def energy(self) -> float:
        return float(np.sum(self.step_energies))

    @property
    def length(self) -> float:
        return float(np.sum(np.sqrt(self.step_energies * np.diff(self.times))))

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "energy": self.energy,
            "times": self.times.tolist(),
            "step_energies": self.step_energies.tolist(),
            "steps": [
                {
                    "topology": c.topology,
                    "dim": c.dim,
                    "params": c.params.tolist(),
                    "samples": c.samples.tolist(),
                }
                for c in self.steps
            ],
        }
        if self.closure_defects is not None:
            data["closure_defects"] = self.closure_defects.tolist()
        if self.metadata:
            data["metadata"] = self.metadata
        return data


def _check_pair(c0: DiscreteCurve, c1: DiscreteCurve, topology: str) -> None:
    if c0.topology != topology or c1.topology != topology:
        raise InvalidCurve(f"Expected two {topology} curves, got {c0.topology} and {c1.topology}")
    if c0.n != c1.n or c0.dim != c1.dim:
        raise InvalidCurve(f"Curves do not share a grid: {c0!r} vs {c1!r}")


def elastic_metric(c: DiscreteCurve, h: TangentField, k: TangentField,
                   a: float = DEFAULT_A, b: float = DEFAULT_B) -> float:
    """
    Elastic inner product G^{a,b}_c(h, k).

    Arc-length derivatives D_s = (1/|c'|) d/dtheta of h and k are split into
    parts normal and tangential to c; the normal parts are weighted by a**2,
    the tangential parts by b**2, integrated against ds = |c'| dtheta.

    Raises:
        RegularityViolation: if |c'| <= eps_reg somewhere
    """
    if h.base.n != c.n or k.base.n != c.n:
        raise InvalidCurve("Tangent fields must share the curve grid")
    speeds = c.speeds
    if np.any(speeds <= c.eps_reg):
        raise RegularityViolation("Elastic metric is undefined where |c'| vanishes")
    tangent = c.derivative / speeds[:, None]
    ds_h = finite_difference(h.vectors, c.step, c.topology) / speeds[:, None]
    ds_k = finite_difference(k.vectors, c.step, c.topology) / speeds[:, None]

    tan_h = np.einsum("kd,kd->k", ds_h, tangent)
    tan_k = np.einsum("kd,kd->k", ds_k, tangent)
    normal_h = ds_h - tan_h[:, None] * tangent
    normal_k = ds_k - tan_k[:, None] * tangent
    integrand = a ** 2 * np.einsum("kd,kd->k", normal_h, normal_k) + b ** 2 * tan_h * tan_k
    return float(np.sum(c.weights * integrand * speeds))


def star_action(q: SrvCurve, w: Warp, kind: InterpolationKind = "cubic") -> SrvCurve:
    """Right action (q * phi)(theta) = sqrt(phi'(theta)) q(phi(theta))"""
    phi = w.at(q.params)
    slopes = np.maximum(w.derivative_at(q.params), 0.0)
    moved = q.spline(phi) if kind == "cubic" else q.evaluate(phi, "linear")
    return q.with_values(np.sqrt(slopes)[:, None] * moved)


def check_connectable(q0: SrvCurve, q1: SrvCurve, tol_anti: float = TOL_ANTI) -> None:
    """
    Raises:
        NotConnectable: where q0 and q1 point in opposite directions to within tol_anti radians
    """
    n0, n1 = q0.norms, q1.norms
    both = (n0 > 0.0) & (n1 > 0.0)
    if not np.any(both):
        return
    unit_sum = q0.values[both] / n0[both][:, None] + q1.values[both] / n1[both][:, None]
    # pi minus the angle between the two directions, stable near anti-parallel
    gap = 2.0 * np.arcsin(np.clip(np.linalg.norm(unit_sum, axis=1) / 2.0, 0.0, 1.0))
    if np.any(gap < tol_anti):
        where = q0.params[both][int(np.argmin(gap))]
        raise NotConnectable(
            f"SRV values are anti-parallel at theta={where:.6g}; "
            "c0' = -lambda c1' with lambda > 0 admits no geodesic"
        )


def srv_path(q0: SrvCurve, q1: SrvCurve, t_steps: int) -> List[SrvCurve]:
    times = np.linspace(0.0, 1.0, t_steps)
    return [q0.with_values((1.0 - t) * q0.values + t * q1.values) for t in times]


def path_energies(srv_steps: Sequence[SrvCurve], times: np.ndarray) -> np.ndarray:
    """Per-interval energies |q_{s+1} - q_s|^2 / dt"""
    energies = []
    for (qa, qb), dt in zip(zip(srv_steps[:-1], srv_steps[1:]), np.diff(times)):
        diff = qa.with_values(qb.values - qa.values)
        energies.append(diff.norm_squared() / dt)
    return np.asarray(energies)


def geodesic_open_srv(q0: SrvCurve, q1: SrvCurve, t_steps: int, tol_anti: float = TOL_ANTI,
                      inverse: str = "stencil") -> GeodesicPath:
    """Straight SRV path between two open SRV functions, with snapshots anchored at the origin"""
    if t_steps < 2:
        raise InvalidCurve("A geodesic needs at least 2 time steps")
    check_connectable(q0, q1, tol_anti)
    times = np.linspace(0.0, 1.0, t_steps)
    srv_steps = srv_path(q0, q1, t_steps)
    steps = [srvt_inverse(q, inverse) for q in srv_steps]
    return GeodesicPath(steps, srv_steps, times, path_energies(srv_steps, times))


def geodesic_open(c0: DiscreteCurve, c1: DiscreteCurve, t_steps: int = 16, tol_anti: float = TOL_ANTI,
                  inverse: str = "stencil") -> GeodesicPath:
    """
    Geodesic between open curves, R^{-1}((1 - t) R(c0) + t R(c1)).

    Args:
        c0: Start curve
        c1: End curve on the same grid
        t_steps: Number of snapshots including both endpoints
        tol_anti: Angular tolerance for anti-parallel SRV values

    Returns:
        Path whose snapshots satisfy c(t, 0) = 0

    Raises:
        NotConnectable: if the curves admit no geodesic
    """
    _check_pair(c0, c1, "open")
    path = geodesic_open_srv(srvt(c0), srvt(c1), t_steps, tol_anti, inverse)
    logger.debug(f"Open geodesic with {t_steps} steps, energy {path.energy:.6g}")
    return path


def distance_open(c0: DiscreteCurve, c1: DiscreteCurve) -> float:
    """L2 distance of the SRV functions"""
    _check_pair(c0, c1, "open")
    q0, q1 = srvt(c0), srvt(c1)
    return float(np.sqrt(max(q0.with_values(q0.values - q1.values).norm_squared(), 0.0)))


def normal_basis_values(values: np.ndarray, allow_zero: bool = False) -> np.ndarray:
    """
    Normal basis U_i = (q_i q + |q|^2 e_i) / |q| stacked as a (d, N, d) array.

    With ``allow_zero`` the basis is continued by 0 where q vanishes.
    """
    norms = np.linalg.norm(values, axis=1)
    vanishing = norms == 0.0
    if np.any(vanishing) and not allow_zero:
        raise RegularityViolation("Closed basis is undefined where q vanishes")
    dim = values.shape[1]
    basis = values.T[:, :, None] * values[None, :, :]
    basis[np.arange(dim), :, np.arange(dim)] += (norms ** 2)[None, :]
    scale = np.divide(1.0, norms, out=np.zeros_like(norms), where=~vanishing)
    return basis * scale[None, :, None]


def closed_basis(q: SrvCurve) -> List[TangentField]:
    """
    Normal basis U_1..U_d of the closed-curve submanifold at q.

    Raises:
        RegularityViolation: if q vanishes at a grid node
    """
    return [TangentField(vectors, q) for vectors in normal_basis_values(q.values)]


def closure_defect(q: Union[SrvCurve, np.ndarray], weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Quadrature of |q| q, the displacement between the curve endpoints"""
    if isinstance(q, SrvCurve):
        values, weights = q.values, q.weights
    else:
        values = q
    norms = np.linalg.norm(values, axis=1)
    return np.sum((weights * norms)[:, None] * values, axis=0)


def project_to_closed(q: SrvCurve, tol_close: float = TOL_CLOSE, max_iter: int = MAX_PROJECTION_ITERS,
                      scale: Optional[float] = None, history: Optional[List[float]] = None) -> SrvCurve:
    """
    Newton projection onto the closed-curve submanifold.

    Each step solves the Gram system of the normal basis for the correction
    that cancels the linearized closure defect; the step is halved until the
    defect decreases.

    Args:
        q: SRV function on a closed grid
        tol_close: Defect tolerance relative to ``scale``
        max_iter: Newton step limit
        scale: Length scale of the defect tolerance, defaults to the diameter of
            the reconstructed curve
        history: Receives the initial defect norm and the norm after every
            accepted Newton step

    Raises:
        ProjectionDiverged: if the tolerance is not met within max_iter steps
    """
    if scale is None:
        scale = srvt_inverse(q, "trapezoid").diameter
    tol = tol_close * max(scale, np.finfo(float).tiny)
    weights = q.weights
    values = np.array(q.values)
    defect = closure_defect(values, weights)
    error = float(np.linalg.norm(defect))
    if history is not None:
        history.append(error)
    if error < tol:
        return q

    for iteration in range(max_iter):
        basis = normal_basis_values(values, allow_zero=True)
        gram = np.einsum("k,ikd,jkd->ij", weights, basis, basis)
        try:
            alpha = np.linalg.solve(gram, -defect)
        except np.linalg.LinAlgError as e:
            raise ProjectionDiverged(f"Normal basis is singular at Newton step {iteration}: {str(e)}") from e
        direction = np.einsum("i,ikd->kd", alpha, basis)

        step = 1.0
        for _ in range(MAX_DAMPING):
            trial = values + step * direction
            trial_defect = closure_defect(trial, weights)
            trial_error = float(np.linalg.norm(trial_defect))
            if trial_error < error:
                break
            step *= 0.5
        else:
            raise ProjectionDiverged(
                f"Closure defect stalled at {error:.3g} after {iteration} Newton steps (tolerance {tol:.3g})"
            )

        values, defect, error = trial, trial_defect, trial_error
        if history is not None:
            history.append(error)
        logger.debug(f"Closure projection step {iteration + 1}: defect {error:.3g}")
        if error < tol:
            return q.with_values(values)

    raise ProjectionDiverged(f"Closure defect {error:.3g} above {tol:.3g} after {max_iter} Newton steps")


def geodesic_closed_srv(q0: SrvCurve, q1: SrvCurve, t_steps: int, tol_close: float = TOL_CLOSE,
                        max_iter: int = MAX_PROJECTION_ITERS, inverse: str = "stencil") -> GeodesicPath:
    """Projected straight SRV path between two closed SRV functions"""
    if t_steps < 2:
        raise InvalidCurve("A geodesic needs at least 2 time steps")
    times = np.linspace(0.0, 1.0, t_steps)
    srv_steps = [project_to_closed(q, tol_close, max_iter) for q in srv_path(q0, q1, t_steps)]
    steps = [srvt_inverse(q, inverse) for q in srv_steps]
    defects = np.array([np.linalg.norm(closure_defect(q)) for q in srv_steps])
    return GeodesicPath(steps, srv_steps, times, path_energies(srv_steps, times), closure_defects=defects)


def geodesic_closed(c0: DiscreteCurve, c1: DiscreteCurve, t_steps: int = 16, tol_close: float = TOL_CLOSE,
                    max_iter: int = MAX_PROJECTION_ITERS, inverse: str = "stencil") -> GeodesicPath:
    """
    Approximate geodesic between closed curves.

    The straight SRV path is computed first and every snapshot is projected
    onto the closed-curve submanifold, so the reported energy bounds the true
    geodesic energy from above up to discretization error.

    Raises:
        ProjectionDiverged: propagated from the snapshot projections
    """
    _check_pair(c0, c1, "closed")
    path = geodesic_closed_srv(srvt(c0), srvt(c1), t_steps, tol_close, max_iter, inverse)
    logger.debug(f"Closed geodesic with {t_steps} steps, energy {path.energy:.6g}")
    return path


def distance_closed(c0: DiscreteCurve, c1: DiscreteCurve, t_steps: int = 16,
                    tol_close: float = TOL_CLOSE, max_iter: int = MAX_PROJECTION_ITERS) -> float:
    """Square root of the projected path energy; an approximation from above"""
    return float(np.sqrt(geodesic_closed(c0, c1, t_steps, tol_close, max_iter).energy))
