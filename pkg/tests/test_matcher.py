import numpy as np
import pytest

from app.config import FeaturePair, FeatureSpec, RunConfig
from app.curve_core import TWO_PI, apply_warp, srvt, uniform_grid
from app.errors import InfeasibleHardBounds, InvalidCurve, MethodUnavailable
from app.features import max_parametric_deviation
from app.fixtures import hand_features, wave_features
from app.orchestration.matcher import TOL_INVARIANCE, Matcher
from app.reparam_grad import warp_energy
from app.warps import Warp
from conftest import sampled


def make_matcher(method="dp", grid_size=24, **sections):
    settings = {"dp": {"grid_size": grid_size}, "match": {"method": method},
                "geometry": {"t_steps": 8, "closed_distance_steps": 8}}
    settings.update(sections)
    return Matcher(RunConfig.validate_mapping(settings))


def deviation(result, features):
    return max_parametric_deviation(features.pairs, [float(result.warp(pair.theta0)) for pair in features.pairs])


def test_result_decomposes_the_total(sinusoid, bump):
    features = FeatureSpec(**{"lambda": 2.0, "pairs": [FeaturePair(theta0=2.0, theta1=2.4)]})
    result = make_matcher().match(sinusoid, bump, features)
    assert result.total == pytest.approx(result.elastic_energy + 2.0 * result.feature_energy)
    assert result.feature_energy == pytest.approx((float(result.warp(2.0)) - 2.4) ** 2)
    data = result.to_dict()
    assert data["lambda"] == 2.0
    assert data["diagnostics"]["selected"] == "dp"
    assert data["diagnostics"]["hard_violations"] == 0
    assert len(result.geodesic.steps) == 8


def test_weight_sweep_trades_elastic_for_feature_energy(waves):
    c0, c1 = waves
    matcher = make_matcher()
    energies = []
    for weight in (0.0, 0.1, 1.0, 10.0, 100.0, 1e6):
        features = wave_features([0, 5], [0, 3], weight=weight)
        result = matcher.match(c0, c1, features)
        energies.append(result.feature_energy)
    assert all(later <= earlier + 1e-9 for earlier, later in zip(energies[:-1], energies[1:]))
    assert deviation(result, features) < 1e-2


def test_features_pull_the_warp_towards_their_pairs(waves):
    c0, c1 = waves
    matcher = make_matcher()
    # the two pairings cannot both hold for one increasing warp
    improved = []
    for first in ([2], [4]):
        features = wave_features(first, [2], weight=10.0)
        free = matcher.match(c0, c1, features.with_weight(0.0))
        guided = matcher.match(c0, c1, features)
        assert guided.feature_energy <= free.feature_energy + 1e-9
        improved.append(guided.feature_energy < free.feature_energy)
    assert any(improved)


def test_wrong_wave_features_cost_more(waves):
    c0, c1 = waves
    matcher = make_matcher()
    correct = matcher.match(c0, c1, wave_features([0, 5], [0, 3], weight=10.0))
    wrong = matcher.match(c0, c1, wave_features([1, 4], [0, 3], weight=10.0))
    assert wrong.total > correct.total


def test_hand_outlines_with_correct_and_wrong_fingertips(hands):
    c0, c1 = hands
    matcher = make_matcher(grid_size=32)
    correct_features = hand_features([1, 3], [1, 3], weight=10.0)
    free = matcher.match(c0, c1, correct_features.with_weight(0.0))
    correct = matcher.match(c0, c1, correct_features)
    wrong = matcher.match(c0, c1, hand_features([0], [1.5], weight=10.0))
    assert correct.feature_energy <= free.feature_energy + 1e-9
    assert wrong.total > correct.total
    assert correct.elastic_energy == pytest.approx(correct.geodesic.energy)
    assert correct.geodesic.closure_defects is not None


@pytest.mark.parametrize("curve,truth", [
    (lambda t: np.column_stack([t, 0.4 * np.cos(t)]), lambda t: t - 0.3 * np.sin(t)),
    (lambda t: np.column_stack([t, 0.5 * np.sin(t)]), lambda t: t + 0.2 * np.sin(t)),
    (lambda t: np.column_stack([t, 0.3 * np.sin(2.0 * t) + 0.2 * np.cos(t)]), lambda t: t - 0.1 * np.sin(2.0 * t)),
    (lambda t: np.column_stack([np.cos(t / 2.0), np.sin(t / 2.0)]), lambda t: t - 0.25 * np.sin(t)),
    (lambda t: np.column_stack([t, 0.3 * np.cos(t), 0.2 * np.sin(t)]), lambda t: t + 0.15 * np.sin(t)),
])
def test_recovers_a_known_warp(curve, truth):
    n = 129
    c1 = sampled(curve, n)
    target = Warp.from_function(truth, n)
    c0 = apply_warp(c1, target, "cubic")
    identity = warp_energy(srvt(c0), c1, Warp.identity(uniform_grid(n)))
    result = make_matcher("dp+grad", grid_size=32).match(c0, c1, FeatureSpec.empty())
    assert result.elastic_energy < 1e-3 * identity
    assert result.warp.sup_distance(target) < 0.05 * TWO_PI


def test_refinement_never_loses_to_its_start(sinusoid, bump):
    features = FeatureSpec(**{"lambda": 0.5, "pairs": [FeaturePair(theta0=3.0, theta1=3.3)]})
    dp = make_matcher("dp", grid_size=16).match(sinusoid, bump, features)
    refined = make_matcher("dp+grad", grid_size=16, gradient={"max_iters": 50}).match(sinusoid, bump, features)
    assert refined.total <= dp.total + 1e-12
    assert [step["name"] for step in refined.diagnostics["steps"]] == ["dp", "grad"]


def test_gradient_step_is_skipped_for_hard_bounds(sinusoid, bump):
    features = FeatureSpec(pairs=[FeaturePair(theta0=3.0, theta1=3.0, kind="hard", bound=10.0)])
    result = make_matcher("dp+grad", grid_size=16).match(sinusoid, bump, features)
    assert result.diagnostics["selected"] == "dp"
    assert result.diagnostics["steps"][1]["status"] == "skipped"
    assert result.diagnostics["hard_violations"] == 0
    with pytest.raises(MethodUnavailable):
        make_matcher("grad").match(sinusoid, bump, features)


def test_infeasible_hard_bounds(sinusoid):
    far = sinusoid.translated([100.0, 0.0])
    features = FeatureSpec(pairs=[FeaturePair(theta0=1.0, theta1=1.0, kind="hard", bound=0.1)])
    with pytest.raises(InfeasibleHardBounds):
        make_matcher(grid_size=8).match(sinusoid, far, features)


def test_symmetric_matching(sinusoid, bump):
    features = FeatureSpec(**{"lambda": 1.0, "symmetric": True, "pairs": [FeaturePair(theta0=2.0, theta1=2.5)]})
    matcher = make_matcher(grid_size=16)
    forward = matcher.match(sinusoid, bump, features)
    backward = matcher.match(bump, sinusoid, features.mirrored())
    assert forward.diagnostics["symmetric"]
    assert abs(forward.diagnostics["dp_energy"] - backward.diagnostics["dp_energy"]) < 1e-10
    with pytest.raises(MethodUnavailable):
        matcher.match(sinusoid, bump, features, method="grad")


def test_rejects_mismatched_curves(sinusoid, circle):
    matcher = make_matcher(grid_size=8)
    with pytest.raises(InvalidCurve):
        matcher.match(sinusoid, circle)
    with pytest.raises(InvalidCurve):
        matcher.match(sinusoid, sampled(lambda t: np.column_stack([t, t, t]), 512))
    with pytest.raises(InvalidCurve):
        matcher.match_closed(sinusoid, sinusoid)


def test_second_curve_is_resampled(sinusoid):
    other = sampled(lambda t: np.column_stack([t, 0.4 * np.cos(t)]), 129)
    result = make_matcher(grid_size=16).match(sinusoid, other, FeatureSpec.empty())
    assert result.warp.n == sinusoid.n


def test_feature_terms_from_reference_parametrizations():
    matcher = Matcher()
    features = FeatureSpec(**{"lambda": 3.0, "pairs": [
        FeaturePair(theta0=1.0, theta1=1.0, kind="huber"),
        FeaturePair(theta0=0.5, theta1=0.5, kind="hard", bound=0.2),
    ]})
    halved = lambda theta: theta / 2.0  # noqa: E731
    converted = matcher.feature_term_reference(halved, ([0.0, TWO_PI], [0.0, np.pi]), features)
    assert converted.weight == 3.0
    assert converted.pairs[0].kind == "quadratic"
    assert converted.pairs[0].theta0 == pytest.approx(2.0, rel=1e-6)
    assert converted.pairs[0].theta1 == pytest.approx(2.0)
    assert converted.pairs[1].kind == "hard"
    assert matcher.feature_term_reference(None, None, features).pairs[0].theta0 == pytest.approx(1.0)
    with pytest.raises(InfeasibleHardBounds):
        matcher.feature_term_reference(halved, None, FeatureSpec(pairs=[FeaturePair(theta0=5.0, theta1=1.0)]))


def test_invariance_check_path_part():
    c0 = sampled(lambda t: np.column_stack([t, 0.5 * np.sin(t)]), 512)
    c1 = sampled(lambda t: np.column_stack([t, 0.4 * np.cos(t)]), 512)
    features = FeatureSpec(**{"lambda": 1.0, "pairs": [FeaturePair(theta0=2.0, theta1=2.5)]})
    psi_test = Warp.from_function(lambda t: t - 0.3 * np.sin(t), c0.n)
    report = make_matcher().invariance_check(c0, c1, features, psi_test)
    assert set(report) >= {"path_energy", "path_energy_warped", "distance", "distance_warped",
                           "match_energy", "match_energy_warped", "path_discrepancy", "match_discrepancy",
                           "max_discrepancy"}
    assert report["distance"] > 0.1
    assert report["path_discrepancy"] < TOL_INVARIANCE
    assert report["max_discrepancy"] == max(report["path_discrepancy"], report["match_discrepancy"])


def test_identity_test_warp_has_no_discrepancy(sinusoid, bump):
    features = FeatureSpec(**{"lambda": 1.0, "pairs": [FeaturePair(theta0=2.0, theta1=2.5)]})
    report = make_matcher(grid_size=16).invariance_check(sinusoid, bump, features, Warp.identity(sinusoid.params))
    assert report["max_discrepancy"] < 1e-9


@pytest.mark.parametrize("method,grid_size", [("grad", 24), ("dp+grad", 64)])
def test_match_energy_is_independent_of_the_representative(method, grid_size):
    n = 129
    c0 = sampled(lambda t: np.column_stack([t, 0.5 * np.sin(t)]), n)
    c1 = apply_warp(c0, Warp.from_function(lambda t: t + 0.2 * np.sin(t), n), "cubic")
    features = FeatureSpec(**{"lambda": 1.0, "pairs": [FeaturePair(theta0=2.0, theta1=2.5)]})
    psi_test = Warp.from_function(lambda t: t - 0.3 * np.sin(t), n)
    report = make_matcher(method, grid_size=grid_size).invariance_check(c0, c1, features, psi_test)
    assert report["method"] == method
    assert report["match_discrepancy"] < TOL_INVARIANCE
    assert report["max_discrepancy"] >= report["match_discrepancy"]


def test_feature_terms_from_a_reference_warp():
    reference = Warp.from_vertices([[0.0, 0.0], [np.pi, np.pi / 2.0], [TWO_PI, TWO_PI]], uniform_grid(65))
    features = FeatureSpec(pairs=[FeaturePair(theta0=1.0, theta1=1.0)])
    converted = Matcher().feature_term_reference(reference, None, features)
    assert converted.pairs[0].theta0 == pytest.approx(2.0)
    assert converted.pairs[0].theta1 == pytest.approx(1.0)


def test_closed_energy_uses_its_own_step_count(hands):
    c0, c1 = hands
    features = FeatureSpec.empty()
    coarse = make_matcher(grid_size=16).match(c0, c1, features)
    fine = make_matcher(grid_size=16, geometry={"t_steps": 8, "closed_distance_steps": 32}).match(c0, c1, features)
    assert len(fine.geodesic.steps) == 8
    assert fine.geodesic.energy == pytest.approx(coarse.geodesic.energy)
    assert fine.elastic_energy == pytest.approx(coarse.elastic_energy, rel=0.05)
