"""
Dynamic programming over piecewise-linear monotone warps.

The parameter square [0, 2*pi]^2 is covered by an (M+1) x (M+1) lattice. A
warp is a lattice path from (0, 0) to (M, M) whose steps (dk, dl) come from
the slope mask of the DpGrid. Every step carries the elastic cost of matching
q0 on [tau_k, tau_i] against q1 composed with the linear map onto
[tau_l, tau_j], plus the feature terms whose theta0 falls in (tau_k, tau_i].
The minimal path cost H(M, M) is found by forward induction over the rows
of the lattice and the path is recovered by backtracking.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.config import FeatureSpec
from app.curve_core import TWO_PI, DiscreteCurve, SrvCurve, srvt, srvt_inverse
from app.errors import InfeasibleHardBounds, InfeasibleMask, InvalidCurve
from app.features import FeatureTerms
from app.warps import Warp

logger = logging.getLogger(__name__)

Offset = Tuple[int, int]

DEFAULT_GRID_SIZE = 128
DEFAULT_WINDOW = 6


@dataclass(frozen=True)
class DpGrid:
    """
    Lattice resolution and slope mask.

    ``offsets`` are the admissible steps (dk, dl), kept in tie-breaking order:
    smallest dk + dl first, then smallest dk.
    """
    size: int
    window: int
    offsets: Tuple[Offset, ...]

    @classmethod
    def create(cls, size: int = DEFAULT_GRID_SIZE, window: int = DEFAULT_WINDOW,
               offsets: Optional[Sequence[Offset]] = None) -> "DpGrid":
        if size < 2:
            raise InvalidCurve(f"DP grid needs at least 2 cells, got {size}")
        window = max(1, min(window, size))
        if offsets is None:
            offsets = itertools.product(range(1, window + 1), repeat=2)
        offsets = sorted({(int(dk), int(dl)) for dk, dl in offsets}, key=lambda o: (o[0] + o[1], o[0]))
        if not offsets:
            raise InvalidCurve("Slope mask is empty")
        for dk, dl in offsets:
            if dk < 1 or dl < 1:
                raise InvalidCurve(f"Mask offset {(dk, dl)} must be positive in both coordinates")
            if dk > window or dl > window:
                window = max(window, dk, dl)
        return cls(size=size, window=min(window, size), offsets=tuple(offsets))

    @classmethod
    def full(cls, size: int) -> "DpGrid":
        """Unrestricted mask"""
        return cls.create(size, window=size)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, TWO_PI, self.size + 1)

    @property
    def spacing(self) -> float:
        return TWO_PI / self.size

    def index_of(self, value: float) -> int:
        index = int(round(value / self.spacing))
        if index < 0 or index > self.size or abs(index * self.spacing - value) > 1e-9:
            raise InvalidCurve(f"{value!r} is not a node of the DP grid")
        return index


def masked_predecessors(grid: DpGrid, i: int, j: int) -> List[Tuple[int, int]]:
    """Admissible predecessors of lattice node (i, j), in tie-breaking order"""
    return [(i - dk, j - dl) for dk, dl in grid.offsets if i - dk >= 0 and j - dl >= 0]


def _reachable(grid: DpGrid) -> bool:
    reach = np.zeros((grid.size + 1, grid.size + 1), dtype=bool)
    reach[0, 0] = True
    for i in range(1, grid.size + 1):
        for dk, dl in grid.offsets:
            if dk <= i:
                reach[i, dl:] |= reach[i - dk, : grid.size + 1 - dl]
    return bool(reach[grid.size, grid.size])


def _fine_weights(points: int, step: float) -> np.ndarray:
    weights = np.full(points, step)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return weights


def _elastic_costs(source_fine: np.ndarray, target: SrvCurve, nodes: np.ndarray, subsamples: int,
                   dk: int, dl: int) -> np.ndarray:
    """
    Trapezoidal costs of all segments with step (dk, dl).

    Entry [k, l] integrates |q_src - sqrt(dl/dk) q_tgt(linear map)|^2 over the
    fine nodes of [tau_k, tau_{k+dk}].
    """
    m = len(nodes) - 1
    fine_step = TWO_PI / (m * subsamples)
    points = dk * subsamples + 1
    slope = dl / dk
    offsets = np.arange(points) * fine_step
    starts = nodes[: m - dl + 1]
    positions = starts[:, None] + offsets[None, :] * slope
    moved = np.sqrt(slope) * target.evaluate(positions, "linear")
    rows = np.arange(m - dk + 1)[:, None] * subsamples + np.arange(points)[None, :]
    source = source_fine[rows]
    diff = source[:, None, :, :] - moved[None, :, :, :]
    return np.einsum("klpd,klpd,p->kl", diff, diff, _fine_weights(points, fine_step))


def _feature_costs(terms: FeatureTerms, nodes: np.ndarray, dk: int, dl: int) -> np.ndarray:
    """Feature contributions binned by theta0 in (tau_k, tau_{k+dk}]; theta0 = 0 falls in k = 0"""
    m = len(nodes) - 1
    costs = np.zeros((m - dk + 1, m - dl + 1))
    if not terms.active:
        return costs
    starts = nodes[: m - dl + 1]
    lower, upper = nodes[: m - dk + 1], nodes[dk:]
    slope = dl / dk
    for index, theta0 in enumerate(terms.theta0):
        binned = (lower < theta0) & (theta0 <= upper)
        if theta0 <= 0.0:
            binned[0] = True
        for k in np.flatnonzero(binned):
            phi = starts + (theta0 - nodes[k]) * slope
            costs[k] += terms.weighted(index, phi)
    return costs


class SegmentTables:
    """
    Costs of every admissible lattice segment.

    In symmetric mode the elastic cost is the average of matching q0 against
    q1 and q1 against q0 over the same segment, and the mirrored feature
    terms, evaluated through the inverse of the linear segment map, are added
    to the forward ones.
    """

    def __init__(self, c0: DiscreteCurve, c1: DiscreteCurve, grid: DpGrid, features: Optional[FeatureSpec] = None,
                 subsamples: Optional[int] = None, q0: Optional[SrvCurve] = None, q1: Optional[SrvCurve] = None):
        if c0.dim != c1.dim:
            raise InvalidCurve(f"Curves live in R^{c0.dim} and R^{c1.dim}")
        self.grid = grid
        self.features = features if features is not None else FeatureSpec.empty()
        self.symmetric = self.features.symmetric
        self.subsamples = subsamples or max(1, round((c0.n - (0 if c0.closed else 1)) / grid.size))
        self.q0 = q0 if q0 is not None else srvt(c0)
        self.q1 = q1 if q1 is not None else srvt(c1)

        nodes = grid.nodes
        fine = np.linspace(0.0, TWO_PI, grid.size * self.subsamples + 1)
        q0_fine = self.q0.evaluate(fine, "linear")
        q1_fine = self.q1.evaluate(fine, "linear") if self.symmetric else None
        terms = FeatureTerms(self.features, c0, c1)
        mirrored = terms.mirrored(c0, c1) if self.symmetric else None

        self.elastic: Dict[Offset, np.ndarray] = {}
        self.feature: Dict[Offset, np.ndarray] = {}
        for dk, dl in grid.offsets:
            if dk > grid.size or dl > grid.size:
                continue
            elastic = _elastic_costs(q0_fine, self.q1, nodes, self.subsamples, dk, dl)
            feature = _feature_costs(terms, nodes, dk, dl)
            if self.symmetric:
                reverse = _elastic_costs(q1_fine, self.q0, nodes, self.subsamples, dl, dk).T
                elastic = 0.5 * (elastic + reverse)
                feature = feature + _feature_costs(mirrored, nodes, dl, dk).T
            self.elastic[(dk, dl)] = elastic
            self.feature[(dk, dl)] = feature
        logger.debug(f"Segment tables for {len(self.elastic)} offsets, {self.subsamples} subsamples per cell")

    def total(self, offset: Offset) -> np.ndarray:
        return self.elastic[offset] + self.feature[offset]

    def segment(self, k: int, l: int, i: int, j: int) -> Tuple[float, float]:
        """(elastic, feature) cost of the lattice segment (k, l) -> (i, j)"""
        offset = (i - k, j - l)
        if offset not in self.elastic:
            raise InvalidCurve(f"Segment {(k, l)} -> {(i, j)} is not admissible under the mask")
        return float(self.elastic[offset][k, l]), float(self.feature[offset][k, l])


@dataclass
class DpResult:
    """Optimal piecewise-linear warp with its energy split into elastic and feature parts"""
    warp: Warp
    energy: float
    elastic_energy: float
    feature_energy: float
    path: List[Tuple[int, int]]
    grid: DpGrid
    value_table: Optional[np.ndarray] = field(default=None, repr=False)

    def __iter__(self) -> Iterator:
        yield self.warp
        yield self.energy


def segment_energy(q0: SrvCurve, c1: DiscreteCurve, k: float, l: float, i: float, j: float,
                   features: Optional[FeatureSpec] = None, grid: Optional[DpGrid] = None,
                   c0: Optional[DiscreteCurve] = None, subsamples: Optional[int] = None) -> float:
    """
    Cost E(k, l; i, j) of one lattice segment given by its corner parameters.

    Args:
        q0: SRV function of the first curve
        c1: Second curve
        k, l: Start of the segment in [0, 2*pi]^2, on the grid
        i, j: End of the segment, with k < i and l < j
        features: Feature terms binned into this segment
        grid: Lattice, defaults to the standard size
        c0: First curve for position-space terms, reconstructed from q0 otherwise
    """
    grid = grid or DpGrid.create()
    ki, li, ii, ji = (grid.index_of(v) for v in (k, l, i, j))
    if ii <= ki or ji <= li:
        raise InvalidCurve("Segments must increase in both coordinates")
    c0 = c0 if c0 is not None else srvt_inverse(q0)
    local = DpGrid.create(grid.size, offsets=[(ii - ki, ji - li)])
    tables = SegmentTables(c0, c1, local, features, subsamples=subsamples, q0=q0)
    elastic, feature = tables.segment(ki, li, ii, ji)
    return elastic + feature


def _fill(tables: SegmentTables, grid: DpGrid) -> Tuple[np.ndarray, np.ndarray]:
    size = grid.size
    values = np.full((size + 1, size + 1), np.inf)
    choice = np.full((size + 1, size + 1), -1, dtype=int)
    values[0, 0] = 0.0
    totals = {offset: tables.total(offset) for offset in tables.elastic}
    for i in range(1, size + 1):
        for index, (dk, dl) in enumerate(grid.offsets):
            if dk > i or (dk, dl) not in totals:
                continue
            k = i - dk
            candidate = values[k, : size + 1 - dl] + totals[(dk, dl)][k]
            row = values[i, dl:]
            better = candidate < row
            row[better] = candidate[better]
            choice[i, dl:][better] = index
    return values, choice


def _backtrack(choice: np.ndarray, grid: DpGrid) -> List[Tuple[int, int]]:
    i = j = grid.size
    path = [(i, j)]
    while (i, j) != (0, 0):
        dk, dl = grid.offsets[choice[i, j]]
        i, j = i - dk, j - dl
        path.append((i, j))
    return path[::-1]


def dp_match(c0: DiscreteCurve, c1: DiscreteCurve, grid: Optional[DpGrid] = None,
             features: Optional[FeatureSpec] = None, subsamples: Optional[int] = None) -> DpResult:
    """
    Minimize the discrete matching energy over masked lattice paths.

    Args:
        c0: First curve
        c1: Second curve of the same dimension
        grid: Lattice and slope mask
        features: Feature pairs, weight and symmetric switch
        subsamples: Quadrature nodes per lattice cell, derived from c0's grid by default

    Returns:
        DpResult; unpacks as (warp, energy)

    Raises:
        InfeasibleMask: if the mask admits no path to (M, M)
        InfeasibleHardBounds: if every admissible path violates a hard bound
    """
    grid = grid or DpGrid.create()
    if not _reachable(grid):
        raise InfeasibleMask(f"No lattice path reaches ({grid.size}, {grid.size}) with offsets {list(grid.offsets)}")

    tables = SegmentTables(c0, c1, grid, features, subsamples)
    values, choice = _fill(tables, grid)
    energy = float(values[grid.size, grid.size])
    if not np.isfinite(energy):
        raise InfeasibleHardBounds("Every admissible warp violates a hard feature bound")

    path = _backtrack(choice, grid)
    elastic = feature = 0.0
    for (k, l), (i, j) in zip(path[:-1], path[1:]):
        seg_elastic, seg_feature = tables.segment(k, l, i, j)
        elastic += seg_elastic
        feature += seg_feature

    nodes = grid.nodes
    vertices = np.array([[nodes[k], nodes[l]] for k, l in path])
    warp = Warp.from_vertices(vertices, c0.params, c0.topology)
    logger.info(f"DP match on {grid.size}x{grid.size} lattice: energy {energy:.6g} over {len(path) - 1} segments")
    return DpResult(warp, energy, elastic, feature, path, grid, value_table=values)


def lattice_paths(grid: DpGrid) -> Iterator[List[Tuple[int, int]]]:
    """All masked lattice paths from (0, 0) to (M, M)"""
    size = grid.size

    def extend(path):
        i, j = path[-1]
        if (i, j) == (size, size):
            yield list(path)
            return
        for dk, dl in grid.offsets:
            if i + dk <= size and j + dl <= size:
                path.append((i + dk, j + dl))
                yield from extend(path)
                path.pop()

    yield from extend([(0, 0)])


def brute_force_match(c0: DiscreteCurve, c1: DiscreteCurve, grid: DpGrid,
                      features: Optional[FeatureSpec] = None, subsamples: Optional[int] = None
                      ) -> Tuple[float, List[Tuple[int, int]]]:
    """Exhaustive minimum over lattice paths, summed in path order like the dynamic program"""
    tables = SegmentTables(c0, c1, grid, features, subsamples)
    totals = {offset: tables.total(offset) for offset in tables.elastic}
    best, best_path = np.inf, []
    for path in lattice_paths(grid):
        energy = 0.0
        for (k, l), (i, j) in zip(path[:-1], path[1:]):
            energy = energy + totals[(i - k, j - l)][k, l]
        if energy < best:
            best, best_path = float(energy), path
    return best, best_path
