"""
Similarity of curves with feature points.

The matcher looks for the reparametrization phi of the second curve that
minimizes the elastic distance from c0 to c1 o phi plus the weighted feature
terms, then builds the geodesic between c0 and c1 o phi. Geodesics are
reparametrization invariant but not horizontal in general, so the
minimizing path is a "ballistic" one: it may move points along the curve
while it deforms the shape. No diagnostics of this are computed.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.config import FeaturePair, FeatureSpec, MatchMethod, RunConfig
from app.curve_core import TWO_PI, DiscreteCurve, apply_warp, resample, srvt
from app.errors import InfeasibleHardBounds, InvalidCurve, InvalidWarp, MethodUnavailable
from app.features import FeatureTerms
from app.orchestration.optimizer_orchestrator import MatchProblem, OptimizerOrchestrator
from app.reparam_dp import DpGrid, dp_match
from app.reparam_grad import MatchingObjective
from app.srvt_geometry import (
    GeodesicPath,
    geodesic_closed_srv,
    geodesic_open_srv,
    path_energies,
    srv_path,
    star_action,
)
from app.warps import Warp

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


ReferenceMap = Union[Warp, Callable[[np.ndarray], np.ndarray], Tuple[Sequence[float], Sequence[float]]]

REFERENCE_SAMPLES = 4097
TOL_INVARIANCE = 1e-3


def _pull_back(reference: Optional[ReferenceMap], value: float) -> float:
    """Curve parameter whose reference value is ``value``"""
    if reference is None:
        params = values = np.array([0.0, TWO_PI])
    elif isinstance(reference, Warp):
        params, values = reference.graph()
    elif callable(reference):
        params = np.linspace(0.0, TWO_PI, REFERENCE_SAMPLES)
        values = np.asarray(reference(params), dtype=float)
    else:
        params, values = (np.asarray(part, dtype=float) for part in reference)
    if np.any(np.diff(values) < 0.0):
        raise InvalidWarp("Reference parametrizations must be non-decreasing")
    tol = 1e-12 * max(1.0, abs(values[-1]))
    if value < values[0] - tol or value > values[-1] + tol:
        raise InfeasibleHardBounds(
            f"Reference value {value:.6g} lies outside [{values[0]:.6g}, {values[-1]:.6g}]"
        )
    return float(np.clip(np.interp(value, values, params), 0.0, TWO_PI))


@dataclass
class MatchResult:
    """
    Optimal warp with its energies.

    ``feature_energy`` is the unweighted feature term, so that
    total = elastic_energy + lambda * feature_energy. Hard bounds are
    constraints and do not enter feature_energy.
    """
    warp: Warp
    elastic_energy: float
    feature_energy: float
    weight: float
    geodesic: GeodesicPath
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return self.elastic_energy + self.weight * self.feature_energy

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "warp": self.warp.to_dict(),
            "elastic_energy": self.elastic_energy,
            "feature_energy": self.feature_energy,
            "lambda": self.weight,
            "total": self.total,
            "geodesic_energy": self.geodesic.energy,
            "diagnostics": self.diagnostics,
        }
        if self.warp.psi is not None:
            data["psi"] = self.warp.psi.tolist()
        return data


class Matcher:
    """
    Main orchestration layer for curve matching.
    Coordinates the optimizer plans, energy evaluation and geodesic
    construction for open, closed and symmetric problems.
    """

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or RunConfig()
        self.optimizer = OptimizerOrchestrator(self.config)

    def _problem(self, c0: DiscreteCurve, c1: DiscreteCurve, features: Optional[FeatureSpec]) -> MatchProblem:
        if c0.topology != c1.topology:
            raise InvalidCurve(f"Cannot match a {c0.topology} curve with a {c1.topology} curve")
        if c0.dim != c1.dim:
            raise InvalidCurve(f"Curves live in R^{c0.dim} and R^{c1.dim}")
        if c1.n != c0.n:
            logger.info(f"Resampling the second curve from {c1.n} to {c0.n} points")
            c1 = resample(c1, c0.n, self.config.curve.interpolation)
        features = features if features is not None else self.config.features
        return MatchProblem(c0, c1, srvt(c0), srvt(c1), features)

    def match(self, c0: DiscreteCurve, c1: DiscreteCurve, features: Optional[FeatureSpec] = None,
              method: Optional[MatchMethod] = None) -> MatchResult:
        """Dispatch on topology and the symmetric switch"""
        features = features if features is not None else self.config.features
        if features.symmetric:
            return self.match_symmetric(c0, c1, features, method=method or "dp")
        if c0.closed:
            return self.match_closed(c0, c1, features, method)
        return self.match_open(c0, c1, features, method)

    def _feature_energy(self, problem: MatchProblem, warp: Warp) -> Tuple[float, int]:
        """Unweighted non-hard feature term at phi(theta0) and the number of violated hard bounds"""
        terms = FeatureTerms(problem.features, problem.c0, problem.c1)
        energy, violations = 0.0, 0
        for index, pair in enumerate(terms.pairs):
            value = float(terms.values(index, warp(pair.theta0)))
            if pair.kind == "hard":
                violations += int(np.isinf(value))
            else:
                energy += value
        return energy, violations

    def _elastic_open(self, problem: MatchProblem, warp: Warp) -> float:
        objective = MatchingObjective(problem.q0, problem.c1, FeatureSpec.empty(), q1=problem.q1)
        factor = np.sqrt(np.maximum(warp.derivative_at(objective.params), 0.0))
        elastic, _ = objective.energy_parts(factor, warp.at(objective.params))
        return elastic

    def _geodesic(self, problem: MatchProblem, warp: Warp) -> GeodesicPath:
        moved = star_action(problem.q1, warp)
        if problem.topology == "closed":
            geometry = self.config.geometry
            return geodesic_closed_srv(problem.q0, moved, geometry.t_steps, geometry.tol_close,
                                       geometry.max_projection_iters, self.config.curve.inverse)
        return geodesic_open_srv(problem.q0, moved, self.config.geometry.t_steps, self.config.geometry.tol_anti,
                                 self.config.curve.inverse)

    def _closed_energy(self, problem: MatchProblem, warp: Warp, geodesic: GeodesicPath) -> float:
        """Projected path energy to c1 o phi with closed_distance_steps snapshots"""
        geometry = self.config.geometry
        if geometry.closed_distance_steps == geometry.t_steps:
            return geodesic.energy
        path = geodesic_closed_srv(problem.q0, star_action(problem.q1, warp), geometry.closed_distance_steps,
                                   geometry.tol_close, geometry.max_projection_iters, self.config.curve.inverse)
        return path.energy

    def _assemble(self, problem: MatchProblem, warp: Warp, diagnostics: Dict[str, Any]) -> MatchResult:
        geodesic = self._geodesic(problem, warp)
        if problem.topology == "closed":
            elastic = self._closed_energy(problem, warp, geodesic)
        else:
            elastic = self._elastic_open(problem, warp)
        feature, violations = self._feature_energy(problem, warp)
        diagnostics = dict(diagnostics, hard_violations=violations)
        return MatchResult(warp, elastic, feature, problem.features.weight, geodesic, diagnostics)

    def _run(self, problem: MatchProblem, method: MatchMethod) -> MatchResult:
        steps = self.optimizer.execute_plan(method, problem)
        best: Optional[MatchResult] = None
        for step in steps:
            if step["status"] != "success":
                continue
            candidate = self._assemble(problem, step["warp"], {})
            logger.info(f"Step {step['name']}: total energy {candidate.total:.6g}")
            if best is None or candidate.total < best.total:
                best = candidate
                best.diagnostics["selected"] = step["name"]
        best.diagnostics["method"] = method
        best.diagnostics["steps"] = [
            {key: value for key, value in step.items() if key != "warp"} for step in steps
        ]
        return best

    def match_open(self, c0: DiscreteCurve, c1: DiscreteCurve, features: Optional[FeatureSpec] = None,
                   method: Optional[MatchMethod] = None) -> MatchResult:
        """
        Match two open curves

        Args:
            c0: First curve
            c1: Second curve, reparametrized by the result warp
            features: Feature pairs and weight, defaults to the configured ones
            method: dp, grad or dp+grad, defaults to the configured method

        Returns:
            MatchResult with the geodesic from c0 to c1 o phi
        """
        problem = self._problem(c0, c1, features)
        if problem.topology != "open":
            raise InvalidCurve("match_open needs open curves")
        return self._run(problem, method or self.config.match.method)

    def match_closed(self, c0: DiscreteCurve, c1: DiscreteCurve, features: Optional[FeatureSpec] = None,
                     method: Optional[MatchMethod] = None) -> MatchResult:
        """
        Match two closed curves at a fixed seam.

        The optimizers minimize the SRV distance to c1 o phi without the
        closure constraint; the reported elastic energy is the energy of the
        projected path to c1 o phi sampled at closed_distance_steps snapshots.
        """
        problem = self._problem(c0, c1, features)
        if problem.topology != "closed":
            raise InvalidCurve("match_closed needs closed curves")
        return self._run(problem, method or self.config.match.method)

    def match_symmetric(self, c0: DiscreteCurve, c1: DiscreteCurve, features: Optional[FeatureSpec] = None,
                        method: MatchMethod = "dp") -> MatchResult:
        """
        Symmetric matching by dynamic programming.

        Raises:
            MethodUnavailable: if gradient refinement is requested
        """
        if method != "dp":
            raise MethodUnavailable("Symmetric matching supports only the dp method")
        features = features if features is not None else self.config.features
        features = features.model_copy(update={"symmetric": True})
        problem = self._problem(c0, c1, features)
        grid = DpGrid.create(self.config.dp.grid_size, self.config.dp.window)
        result = dp_match(problem.c0, problem.c1, grid, features, self.config.dp.subsamples)

        forward, violations = self._feature_energy(problem, result.warp)
        mirrored_problem = MatchProblem(problem.c1, problem.c0, problem.q1, problem.q0, features.mirrored())
        backward, mirrored_violations = self._feature_energy(mirrored_problem, result.warp.inverse())
        diagnostics = {
            "method": "dp",
            "symmetric": True,
            "dp_energy": result.energy,
            "segments": len(result.path) - 1,
            "hard_violations": violations + mirrored_violations,
        }
        geodesic = self._geodesic(problem, result.warp)
        return MatchResult(result.warp, result.elastic_energy, forward + backward, features.weight,
                           geodesic, diagnostics)

    def feature_term_reference(self, c0_ref: Optional[ReferenceMap], c1_ref: Optional[ReferenceMap],
                               features: FeatureSpec) -> FeatureSpec:
        """
        Parameter-space feature terms from reference parametrizations.

        ``c0_ref`` and ``c1_ref`` map the curve parameters onto a common
        reference parameter (time for animations). Each may be a Warp, a
        monotone callable on [0, 2*pi] or a sampled map ``(params, values)``;
        a missing reference is the identity. Pairs given in reference values
        become quadratic pairs in curve parameters. Hard pairs keep their kind.

        Raises:
            InfeasibleHardBounds: if a reference value lies outside the image
                of its reference map, where the term is +inf for every warp
        """
        pairs: List[FeaturePair] = []
        for pair in features.pairs:
            theta0 = _pull_back(c0_ref, pair.theta0)
            theta1 = _pull_back(c1_ref, pair.theta1)
            kind = pair.kind if pair.kind == "hard" else "quadratic"
            pairs.append(pair.model_copy(update={"theta0": theta0, "theta1": theta1, "kind": kind}))
        return features.model_copy(update={"pairs": pairs})

    def invariance_check(self, c0: DiscreteCurve, c1: DiscreteCurve, features: Optional[FeatureSpec],
                         psi_test: Warp, method: Optional[MatchMethod] = None) -> Dict[str, Any]:
        """
        Compare energies before and after reparametrizing by psi_test.

        Path part: the straight SRV path from c0 to c1 is evaluated with the
        path energy plus lambda * |c(1, theta0) - c1(theta1)|^2, and again
        after composing every snapshot with psi_test and moving theta0 to
        psi_test^{-1}(theta0). The SRV distance of (c0, c1) is compared with
        that of (c0 o psi_test, c1 o psi_test).

        Match part: the optimal match energy of (c0, theta0) against
        (c1, theta1) is compared with that of (c0 o psi_test,
        psi_test^{-1}(theta0)) against (c1, theta1).

        Returns:
            Report with both evaluations, ``path_discrepancy``,
            ``match_discrepancy`` and their maximum ``max_discrepancy``
        """
        features = features if features is not None else self.config.features
        problem = self._problem(c0, c1, features)
        c1 = problem.c1
        steps = self.config.geometry.t_steps
        times = np.linspace(0.0, 1.0, steps)
        energy = float(np.sum(path_energies(srv_path(problem.q0, problem.q1, steps), times)))

        inverse = psi_test.inverse()
        warped_c0 = apply_warp(c0, psi_test, "cubic")
        warped_c1 = apply_warp(c1, psi_test, "cubic")
        warped_q0, warped_q1 = srvt(warped_c0), srvt(warped_c1)
        warped_energy = float(np.sum(path_energies(srv_path(warped_q0, warped_q1, steps), times)))

        theta0 = np.array([pair.theta0 for pair in features.pairs], dtype=float)
        theta1 = np.array([pair.theta1 for pair in features.pairs], dtype=float)
        moved_theta0 = np.clip(inverse(theta0), 0.0, TWO_PI)
        feature_term = warped_feature_term = 0.0
        if features.pairs:
            targets = c1.evaluate(theta1, "linear")
            feature_term = features.weight * float(np.sum((c1.evaluate(theta0, "linear") - targets) ** 2))
            warped_terminal = warped_c1.evaluate(moved_theta0, "linear")
            warped_feature_term = features.weight * float(np.sum((warped_terminal - targets) ** 2))

        distance = float(np.sqrt(problem.q0.with_values(problem.q0.values - problem.q1.values).norm_squared()))
        warped_distance = float(np.sqrt(warped_q0.with_values(warped_q0.values - warped_q1.values).norm_squared()))

        moved_features = features.model_copy(update={"pairs": [
            pair.model_copy(update={"theta0": float(value)}) for pair, value in zip(features.pairs, moved_theta0)
        ]})
        matched = self.match(c0, c1, features, method)
        matched_warped = self.match(warped_c0, c1, moved_features, method)

        report: Dict[str, Any] = {
            "path_energy": energy + feature_term,
            "path_energy_warped": warped_energy + warped_feature_term,
            "distance": distance,
            "distance_warped": warped_distance,
            "match_energy": matched.total,
            "match_energy_warped": matched_warped.total,
            "method": matched.diagnostics.get("method", "dp"),
        }
        report["path_discrepancy"] = max(
            abs(report["path_energy"] - report["path_energy_warped"]),
            abs(distance - warped_distance),
        )
        report["match_discrepancy"] = abs(matched.total - matched_warped.total)
        report["max_discrepancy"] = max(report["path_discrepancy"], report["match_discrepancy"])
        logger.info(f"Invariance check: path discrepancy {report['path_discrepancy']:.3g}, "
                    f"match discrepancy {report['match_discrepancy']:.3g}")
        return report
