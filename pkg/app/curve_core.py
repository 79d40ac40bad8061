"""
Discrete parametrized curves and the square-root velocity transform.

Curves are sampled on a uniform grid over [0, 2*pi]. Open curves carry both
endpoints; closed curves omit theta = 2*pi, which is identified with
theta = 0. Derivatives use central differences (second-order one-sided
stencils at open endpoints, wrap-around for closed curves) and integrals use
the trapezoidal rule.
"""
import logging
from functools import cached_property, lru_cache
from typing import TYPE_CHECKING, Callable, Literal

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import CubicSpline
from scipy.spatial.distance import pdist

from app.errors import InvalidCurve, RegularityViolation

if TYPE_CHECKING:
    from app.warps import Warp

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
EPS_REG = 1e-10
GRID_TOL = 1e-9

Topology = Literal["open", "closed"]
InterpolationKind = Literal["linear", "cubic"]


def uniform_grid(n: int, topology: Topology = "open") -> np.ndarray:
    """Uniform parameter grid with n nodes on [0, 2*pi]"""
    if topology == "closed":
        return np.linspace(0.0, TWO_PI, n, endpoint=False)
    return np.linspace(0.0, TWO_PI, n)


def grid_step(n: int, topology: Topology = "open") -> float:
    return TWO_PI / n if topology == "closed" else TWO_PI / (n - 1)


def quadrature_weights(n: int, topology: Topology = "open") -> np.ndarray:
    """Trapezoidal weights; the periodic rule for closed grids"""
    weights = np.full(n, grid_step(n, topology))
    if topology == "open":
        weights[0] *= 0.5
        weights[-1] *= 0.5
    return weights


def finite_difference(values: np.ndarray, step: float, topology: Topology = "open") -> np.ndarray:
    """Derivative along axis 0 by central differences"""
    if topology == "closed":
        return (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2.0 * step)
    return np.gradient(values, step, axis=0, edge_order=2)


@lru_cache(maxsize=32)
def _stencil_pseudo_inverse(n: int, topology: Topology) -> np.ndarray:
    # Columns of the unit-step difference operator applied to the identity
    operator = finite_difference(np.eye(n), 1.0, topology)
    inverse = np.linalg.pinv(operator)
    inverse.setflags(write=False)
    return inverse


def interpolant(params: np.ndarray, values: np.ndarray, topology: Topology,
                kind: InterpolationKind = "linear") -> Callable[[np.ndarray], np.ndarray]:
    """
    Build an interpolating function for grid values.

    Closed curves are extended by the wrap-around sample so that evaluation is
    periodic. The cubic variant returns a scipy CubicSpline, which also
    provides derivatives through its ``nu`` argument.
    """
    values = np.asarray(values, dtype=float)
    if topology == "closed":
        params = np.append(params, TWO_PI)
        values = np.concatenate([values, values[:1]], axis=0)

    if kind == "cubic":
        bc_type = "periodic" if topology == "closed" else "not-a-knot"
        return CubicSpline(params, values, axis=0, bc_type=bc_type)

    def linear(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if topology == "closed":
            x = np.mod(x, TWO_PI)
        if values.ndim == 1:
            return np.interp(x, params, values)
        return np.stack([np.interp(x, params, values[:, i]) for i in range(values.shape[1])], axis=-1)

    return linear


def _check_grid(params: np.ndarray, n: int, topology: Topology) -> None:
    if topology not in ("open", "closed"):
        raise InvalidCurve(f"Unknown topology {topology!r}")
    if n < 3:
        raise InvalidCurve(f"A curve needs at least 3 samples, got {n}")
    if params.shape != (n,):
        raise InvalidCurve(f"Expected {n} parameter values, got shape {params.shape}")
    if np.any(np.diff(params) <= 0):
        raise InvalidCurve("Parameter values must be strictly increasing")
    if not np.allclose(params, uniform_grid(n, topology), rtol=0.0, atol=GRID_TOL):
        raise InvalidCurve(f"Parameters are not the uniform {topology} grid on [0, 2*pi]")


class DiscreteCurve:
    """
    Uniformly sampled curve in R^d.

    Construction checks regularity: a finite-difference speed at or below
    EPS_REG times the curve diameter raises RegularityViolation unless
    ``allow_degenerate`` is set, in which case the curve is flagged through
    ``degenerate`` instead.
    """

    def __init__(self, samples, params=None, topology: Topology = "open", allow_degenerate: bool = False):
        samples = np.array(samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2:
            raise InvalidCurve(f"Samples must be an (N, d) array, got shape {samples.shape}")
        n = samples.shape[0]
        params = uniform_grid(n, topology) if params is None else np.array(params, dtype=float)
        _check_grid(params, n, topology)
        if not np.all(np.isfinite(samples)):
            raise InvalidCurve("Samples contain non-finite values")

        samples.setflags(write=False)
        params = uniform_grid(n, topology)
        params.setflags(write=False)
        self.samples = samples
        self.params = params
        self.topology: Topology = topology

        self.degenerate = bool(np.any(self.speeds <= self.eps_reg))
        if self.degenerate and not allow_degenerate:
            worst = int(np.argmin(self.speeds))
            raise RegularityViolation(
                f"Curve derivative vanishes at theta={self.params[worst]:.6g} "
                f"(|c'|={self.speeds[worst]:.3g} <= {self.eps_reg:.3g})"
            )

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    @property
    def closed(self) -> bool:
        return self.topology == "closed"

    @property
    def step(self) -> float:
        return grid_step(self.n, self.topology)

    @cached_property
    def weights(self) -> np.ndarray:
        return quadrature_weights(self.n, self.topology)

    @cached_property
    def derivative(self) -> np.ndarray:
        return finite_difference(self.samples, self.step, self.topology)

    @cached_property
    def speeds(self) -> np.ndarray:
        return np.linalg.norm(self.derivative, axis=1)

    @cached_property
    def diameter(self) -> float:
        return float(pdist(self.samples).max())

    @property
    def eps_reg(self) -> float:
        return EPS_REG * self.diameter

    def evaluate(self, theta, kind: InterpolationKind = "linear") -> np.ndarray:
        return interpolant(self.params, self.samples, self.topology, kind)(theta)

    def with_samples(self, samples, allow_degenerate: bool = False) -> "DiscreteCurve":
        return DiscreteCurve(samples, self.params, self.topology, allow_degenerate=allow_degenerate)

    def translated(self, offset) -> "DiscreteCurve":
        return self.with_samples(self.samples + np.asarray(offset, dtype=float), allow_degenerate=self.degenerate)

    def anchored(self) -> "DiscreteCurve":
        """The same curve moved so that c(0) = 0"""
        return self.translated(-self.samples[0])

    def __repr__(self) -> str:
        return f"DiscreteCurve(n={self.n}, dim={self.dim}, topology={self.topology!r})"


class SrvCurve:
    """SRV function q = c'/sqrt(|c'|) sampled on the grid of its source curve"""

    def __init__(self, values, params=None, topology: Topology = "open"):
        values = np.array(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        n = values.shape[0]
        params = uniform_grid(n, topology) if params is None else np.array(params, dtype=float)
        _check_grid(params, n, topology)
        values.setflags(write=False)
        params.setflags(write=False)
        self.values = values
        self.params = params
        self.topology: Topology = topology

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def closed(self) -> bool:
        return self.topology == "closed"

    @property
    def step(self) -> float:
        return grid_step(self.n, self.topology)

    @cached_property
    def weights(self) -> np.ndarray:
        return quadrature_weights(self.n, self.topology)

    @cached_property
    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    @property
    def degenerate(self) -> bool:
        return bool(np.any(self.norms == 0.0))

    def inner(self, other: "SrvCurve") -> float:
        """L2 inner product by the trapezoidal rule"""
        return float(np.sum(self.weights * np.einsum("kd,kd->k", self.values, other.values)))

    def norm_squared(self) -> float:
        return self.inner(self)

    def evaluate(self, theta, kind: InterpolationKind = "linear") -> np.ndarray:
        return interpolant(self.params, self.values, self.topology, kind)(theta)

    @cached_property
    def spline(self) -> CubicSpline:
        return interpolant(self.params, self.values, self.topology, "cubic")

    def with_values(self, values) -> "SrvCurve":
        return SrvCurve(values, self.params, self.topology)

    def __repr__(self) -> str:
        return f"SrvCurve(n={self.n}, dim={self.dim}, topology={self.topology!r})"


def srvt(c: DiscreteCurve) -> SrvCurve:
    """
    Square-root velocity transform q = c'/sqrt(|c'|).

    Raises:
        RegularityViolation: if |c'| <= eps_reg at some node of a curve not
            flagged as degenerate
    """
    speeds = c.speeds
    if not c.degenerate and np.any(speeds <= c.eps_reg):
        raise RegularityViolation("Cannot transform a curve with vanishing derivative")
    scale = np.zeros_like(speeds)
    moving = speeds > 0.0
    scale[moving] = 1.0 / np.sqrt(speeds[moving])
    return SrvCurve(c.derivative * scale[:, None], c.params, c.topology)


def srvt_inverse(q: SrvCurve, method: Literal["stencil", "trapezoid"] = "stencil") -> DiscreteCurve:
    """
    Recover the curve with c(0) = 0 from its SRV function by integrating |q| q.

    The default ``stencil`` quadrature is the least-squares antiderivative of
    the central-difference operator used by srvt, so the round trip is exact
    modulo translation. ``trapezoid`` is the plain cumulative trapezoidal rule.
    """
    velocity = q.norms[:, None] * q.values
    if method == "trapezoid":
        samples = cumulative_trapezoid(velocity, dx=q.step, axis=0, initial=0.0)
    else:
        samples = q.step * (_stencil_pseudo_inverse(q.n, q.topology) @ velocity)
        samples = samples - samples[0]
    return DiscreteCurve(samples, q.params, q.topology, allow_degenerate=True)


def resample(c: DiscreteCurve, n: int, kind: InterpolationKind = "linear") -> DiscreteCurve:
    """Interpolate c onto the uniform n-point grid of the same topology"""
    if n < 3:
        raise InvalidCurve(f"Cannot resample to {n} points")
    if n == c.n:
        return c
    params = uniform_grid(n, c.topology)
    return DiscreteCurve(c.evaluate(params, kind), params, c.topology, allow_degenerate=c.degenerate)


def apply_warp(c: DiscreteCurve, w: "Warp", kind: InterpolationKind = "linear",
               allow_degenerate: bool = False) -> DiscreteCurve:
    """
    Compose c with the warp from the right, sampled on c's grid.

    Raises:
        RegularityViolation: if flat stretches of the warp collapse the
            derivative and ``allow_degenerate`` is not set
    """
    phi = w.at(c.params)
    return c.with_samples(c.evaluate(phi, kind), allow_degenerate=allow_degenerate)
