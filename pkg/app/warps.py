"""
Monotone reparametrizations of [0, 2*pi].

A Warp is stored by its values on a curve grid. Warps coming out of the
dynamic program also keep their lattice vertices, so evaluation between grid
nodes is exactly piecewise linear; warps built from a square-root velocity
field psi keep psi and the slopes psi**2.
"""
import logging
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from app.curve_core import TWO_PI, Topology, finite_difference, grid_step, uniform_grid
from app.errors import InvalidWarp

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-12


class Warp:
    """
    Monotone non-decreasing map of [0, 2*pi] onto itself with phi(0) = 0.

    Args:
        params: Uniform grid the warp is sampled on
        values: phi at the grid nodes
        topology: Grid topology; closed grids omit 2*pi, where phi(2*pi) = 2*pi
        slopes: Known phi' at the grid nodes, finite differences otherwise
        vertices: (K, 2) lattice vertices of a piecewise-linear warp
        psi: Square-root slope field the warp was built from
    """

    def __init__(self, params, values, topology: Topology = "open", slopes=None, vertices=None, psi=None):
        params = np.asarray(params, dtype=float)
        values = np.array(values, dtype=float)
        if values.shape != params.shape:
            raise InvalidWarp(f"Warp has {values.shape} values for {params.shape} grid nodes")
        scale = MONOTONE_TOL * TWO_PI
        if abs(values[0]) > 1e-9 or np.any(np.diff(values) < -scale):
            raise InvalidWarp("Warp values must start at 0 and be non-decreasing")
        if values[-1] > TWO_PI + 1e-9 or (topology == "open" and abs(values[-1] - TWO_PI) > 1e-9):
            raise InvalidWarp("Warp must map onto [0, 2*pi]")
        values = np.maximum.accumulate(np.clip(values, 0.0, TWO_PI))
        values[0] = 0.0
        if topology == "open":
            values[-1] = TWO_PI

        self.params = params
        self.values = values
        self.topology: Topology = topology
        self.slopes = None if slopes is None else np.asarray(slopes, dtype=float)
        self.vertices = None if vertices is None else np.asarray(vertices, dtype=float)
        self.psi = None if psi is None else np.asarray(psi, dtype=float)

    @classmethod
    def identity(cls, params, topology: Topology = "open") -> "Warp":
        params = np.asarray(params, dtype=float)
        corners = np.array([[0.0, 0.0], [TWO_PI, TWO_PI]])
        return cls(params, params.copy(), topology, slopes=np.ones_like(params), vertices=corners)

    @classmethod
    def from_vertices(cls, vertices, params, topology: Topology = "open") -> "Warp":
        """Piecewise-linear warp through lattice vertices from (0, 0) to (2*pi, 2*pi)"""
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 2:
            raise InvalidWarp("Vertices must be a (K, 2) array with K >= 2")
        if not np.allclose(vertices[0], 0.0) or not np.allclose(vertices[-1], TWO_PI):
            raise InvalidWarp("Vertices must run from (0, 0) to (2*pi, 2*pi)")
        if np.any(np.diff(vertices[:, 0]) <= 0) or np.any(np.diff(vertices[:, 1]) < 0):
            raise InvalidWarp("Vertices must increase in theta and not decrease in phi")
        params = np.asarray(params, dtype=float)
        values = np.interp(params, vertices[:, 0], vertices[:, 1])
        return cls(params, values, topology, vertices=vertices)

    @classmethod
    def from_function(cls, func: Callable[[np.ndarray], np.ndarray], n: int, topology: Topology = "open",
                      derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> "Warp":
        params = uniform_grid(n, topology)
        slopes = None if derivative is None else derivative(params)
        return cls(params, func(params), topology, slopes=slopes)

    @property
    def n(self) -> int:
        return len(self.params)

    def graph(self) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes and values of phi, closed warps extended by the point (2*pi, 2*pi)"""
        if self.topology == "closed":
            return np.append(self.params, TWO_PI), np.append(self.values, TWO_PI)
        return self.params, self.values

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.vertices is not None:
            return np.interp(theta, self.vertices[:, 0], self.vertices[:, 1])
        params, values = self.graph()
        return np.interp(theta, params, values)

    def at(self, params) -> np.ndarray:
        """phi on the given grid, reusing stored values when the grids agree"""
        params = np.asarray(params, dtype=float)
        if params.shape == self.params.shape and np.array_equal(params, self.params):
            return self.values
        return self(params)

    def derivative(self) -> np.ndarray:
        """phi' at the grid nodes, clipped at zero"""
        if self.slopes is not None:
            return self.slopes
        step = grid_step(self.n, self.topology)
        if self.topology == "closed":
            slopes = finite_difference(self.values - self.params, step, "closed") + 1.0
        else:
            slopes = finite_difference(self.values, step, "open")
        return np.maximum(slopes, 0.0)

    def derivative_at(self, params) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape == self.params.shape and np.array_equal(params, self.params):
            return self.derivative()
        ext_params, _ = self.graph()
        slopes = self.derivative()
        if self.topology == "closed":
            slopes = np.append(slopes, slopes[0])
        return np.interp(params, ext_params, slopes)

    def inverse(self) -> "Warp":
        """
        Inverse warp on the same grid.

        Piecewise-linear warps invert exactly by swapping vertex coordinates;
        sampled warps invert by linear interpolation of the graph.
        """
        if self.vertices is not None:
            swapped = self.vertices[:, ::-1]
            keep = np.concatenate([[True], np.diff(swapped[:, 0]) > 0])
            return Warp.from_vertices(swapped[keep], self.params, self.topology)
        params, values = self.graph()
        return Warp(self.params, np.interp(self.params, values, params), self.topology)

    def compose(self, other: "Warp") -> "Warp":
        """self o other, sampled on other's grid"""
        inner = other.at(other.params)
        slopes = None
        if self.slopes is not None and other.slopes is not None:
            slopes = self.derivative_at(inner) * other.derivative()
        return Warp(other.params, self(inner), other.topology, slopes=slopes)

    def sup_distance(self, other: "Warp") -> float:
        return float(np.max(np.abs(self.values - other.at(self.params))))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "topology": self.topology,
            "params": self.params.tolist(),
            "values": self.values.tolist(),
        }
        if self.vertices is not None:
            data["vertices"] = self.vertices.tolist()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Warp":
        topology = data.get("topology", "open")
        if data.get("vertices") is not None:
            return cls.from_vertices(data["vertices"], data["params"], topology)
        return cls(data["params"], data["values"], topology)

    def __repr__(self) -> str:
        kind = "piecewise-linear" if self.vertices is not None else "sampled"
        return f"Warp(n={self.n}, topology={self.topology!r}, {kind})"
