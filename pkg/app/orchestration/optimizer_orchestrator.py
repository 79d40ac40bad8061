import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

from app.config import FeatureSpec, RunConfig
from app.curve_core import DiscreteCurve, SrvCurve
from app.errors import MethodUnavailable, NumericalError
from app.reparam_dp import DpGrid, dp_match
from app.reparam_grad import PsiField, descend, warp_to_psi
from app.warps import Warp

logger = logging.getLogger(__name__)


@dataclass
class MatchProblem:
    """Curves, their SRV functions and the feature setup of one matching run"""
    c0: DiscreteCurve
    c1: DiscreteCurve
    q0: SrvCurve
    q1: SrvCurve
    features: FeatureSpec

    @property
    def topology(self) -> str:
        return self.c0.topology


class OptimizerOrchestrator:
    """
    Orchestrates reparametrization searches.
    Maps method names to optimizers, runs multi-step plans such as dp+grad
    with warm starts, and recovers from failed refinement steps.
    """

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or RunConfig()
        self.optimizer_map: Dict[str, Callable[[MatchProblem, Optional[Warp]], Dict[str, Any]]] = {
            "dp": self._run_dp,
            "grad": self._run_grad,
        }

    def get_available_methods(self) -> List[str]:
        return list(self.optimizer_map) + ["+".join(self.optimizer_map)]

    def plan(self, method: str) -> List[str]:
        """Split a method name into optimizer steps"""
        steps = method.split("+")
        unknown = [step for step in steps if step not in self.optimizer_map]
        if unknown or not steps:
            raise MethodUnavailable(f"Unknown method {method!r}; available: {self.get_available_methods()}")
        return steps

    def _grid(self) -> DpGrid:
        return DpGrid.create(self.config.dp.grid_size, self.config.dp.window)

    def _run_dp(self, problem: MatchProblem, previous: Optional[Warp]) -> Dict[str, Any]:
        result = dp_match(problem.c0, problem.c1, self._grid(), problem.features, self.config.dp.subsamples)
        return {
            "warp": result.warp,
            "energy": result.energy,
            "elastic_energy": result.elastic_energy,
            "feature_energy": result.feature_energy,
            "segments": len(result.path) - 1,
        }

    def _run_grad(self, problem: MatchProblem, previous: Optional[Warp]) -> Dict[str, Any]:
        features = problem.features
        if features.symmetric:
            raise MethodUnavailable("Gradient descent does not handle symmetric feature terms; use method 'dp'")
        if not features.differentiable:
            raise MethodUnavailable("Gradient descent needs differentiable feature terms (no hard bounds)")

        options = self.config.gradient
        if previous is None and options.init == "dp":
            previous = self._run_dp(problem, None)["warp"]
        init = warp_to_psi(previous) if previous is not None else PsiField.identity(problem.q0.n, problem.topology)

        result = descend(problem.q0, problem.c1, features, init, options, c0=problem.c0)
        return {
            "warp": result.warp,
            "energy": result.energy,
            "iterations": result.trace.iterations,
            "converged": result.trace.converged,
            "energies": result.trace.energies,
        }

    def execute_step(self, name: str, problem: MatchProblem, previous: Optional[Warp] = None) -> Dict[str, Any]:
        """
        Run one optimizer

        Args:
            name: Optimizer name
            problem: Matching problem
            previous: Warp from the preceding step, used as warm start

        Returns:
            Step result with status, warp and energy
        """
        logger.info(f"Running {name} on {problem.topology} curves ({len(problem.features.pairs)} feature pairs)")
        result = self.optimizer_map[name](problem, previous)
        result.update({"name": name, "status": "success"})
        return result

    def execute_plan(self, method: str, problem: MatchProblem) -> List[Dict[str, Any]]:
        """
        Execute a multi-step optimization plan

        Args:
            method: dp, grad or dp+grad
            problem: Matching problem

        Returns:
            Results of all executed steps; a refinement step that fails or
            cannot handle the features is recorded with status "error" or
            "skipped" and the earlier results are kept
        """
        step_results: List[Dict[str, Any]] = []
        previous = None
        for name in self.plan(method):
            try:
                result = self.execute_step(name, problem, previous)
            except MethodUnavailable as e:
                if not step_results:
                    raise
                logger.warning(f"Skipping {name}: {str(e)}")
                step_results.append({"name": name, "status": "skipped", "error": str(e)})
                break
            except NumericalError as e:
                if not step_results:
                    raise
                logger.error(f"Error in step {name}: {str(e)}", exc_info=True)
                step_results.append({"name": name, "status": "error", "error": str(e)})
                break
            step_results.append(result)
            previous = result["warp"]
        return step_results
