import numpy as np
import pytest

from app.curve_core import DiscreteCurve, SrvCurve, srvt, srvt_inverse
from app.errors import InvalidCurve, NotConnectable, RegularityViolation
from app.fixtures import SPREAD_FINGER_ANGLES, SPREAD_FINGER_LENGTHS, hand_outline
from app.srvt_geometry import (
    TangentField,
    check_connectable,
    closed_basis,
    closure_defect,
    distance_closed,
    distance_open,
    elastic_metric,
    geodesic_closed,
    geodesic_open,
    normal_basis_values,
    project_to_closed,
    star_action,
)
from app.warps import Warp
from conftest import sampled


def test_open_geodesic_energy_is_squared_distance(sinusoid, bump):
    path = geodesic_open(sinusoid, bump, t_steps=64)
    assert path.energy == pytest.approx(distance_open(sinusoid, bump) ** 2, rel=1e-2)
    np.testing.assert_allclose(path.steps[0].samples, sinusoid.samples - sinusoid.samples[0], atol=1e-8)
    np.testing.assert_allclose(path.steps[-1].samples, bump.samples - bump.samples[0], atol=1e-8)
    assert len(path.steps) == 64
    assert path.length == pytest.approx(distance_open(sinusoid, bump), rel=1e-2)


def test_geodesic_between_identical_curves_is_constant(sinusoid):
    path = geodesic_open(sinusoid, sinusoid, t_steps=5)
    assert path.energy == pytest.approx(0.0, abs=1e-20)
    for step in path.steps:
        np.testing.assert_allclose(step.samples, path.steps[0].samples, atol=1e-12)


def test_anti_parallel_curves_are_not_connectable(line):
    reversed_line = line.with_samples(-line.samples)
    with pytest.raises(NotConnectable):
        geodesic_open(line, reversed_line, t_steps=4)
    with pytest.raises(NotConnectable):
        check_connectable(srvt(line), srvt(reversed_line))


def test_geodesic_requires_matching_grids(sinusoid, circle):
    with pytest.raises(InvalidCurve):
        geodesic_open(sinusoid, circle)
    with pytest.raises(InvalidCurve):
        geodesic_open(sinusoid, sampled(lambda t: np.column_stack([t, t]), 64))
    with pytest.raises(InvalidCurve):
        geodesic_open(sinusoid, sinusoid, t_steps=1)


def test_elastic_metric_scaling_direction(sinusoid):
    field = TangentField(sinusoid.samples, sinusoid)
    length = float(np.sum(sinusoid.weights * sinusoid.speeds))
    assert elastic_metric(sinusoid, field, field) == pytest.approx(0.25 * length, rel=1e-10)


def test_elastic_metric_pulls_back_the_srv_norm():
    n = 1025
    line = sampled(lambda t: np.column_stack([t, np.zeros_like(t)]), n)
    normal = TangentField(np.column_stack([np.zeros(n), np.sin(line.params)]), line)
    # a = 1, b = 1/2: the variation of the SRV function along h is (0, cos) here
    assert elastic_metric(line, normal, normal) == pytest.approx(np.pi, rel=1e-4)
    eps = 1e-6
    moved = line.with_samples(line.samples + eps * normal.vectors)
    variation = (srvt(moved).values - srvt(line).values) / eps
    srv_norm = float(np.sum(line.weights * np.sum(variation ** 2, axis=1)))
    assert elastic_metric(line, normal, normal) == pytest.approx(srv_norm, rel=1e-4)


def test_elastic_metric_needs_a_regular_curve():
    samples = np.zeros((16, 2))
    samples[8:, 0] = np.arange(8)
    curve = DiscreteCurve(samples, allow_degenerate=True)
    field = TangentField(np.ones((16, 2)), curve)
    with pytest.raises(RegularityViolation):
        elastic_metric(curve, field, field)


def test_star_action_is_an_isometry(sinusoid):
    warp = Warp.from_function(lambda t: t - 0.4 * np.sin(t), sinusoid.n,
                              derivative=lambda t: 1.0 - 0.4 * np.cos(t))
    q = srvt(sinusoid)
    assert star_action(q, warp).norm_squared() == pytest.approx(q.norm_squared(), rel=1e-4)


def test_star_action_composes(sinusoid):
    first = Warp.from_function(lambda t: t - 0.3 * np.sin(t), sinusoid.n, derivative=lambda t: 1.0 - 0.3 * np.cos(t))
    second = Warp.from_function(lambda t: t + 0.2 * np.sin(t), sinusoid.n,
                                derivative=lambda t: 1.0 + 0.2 * np.cos(t))
    q = srvt(sinusoid)
    twice = star_action(star_action(q, first), second)
    once = star_action(q, first.compose(second))
    assert np.max(np.abs(twice.values - once.values)) < 1e-3


def test_simultaneous_warp_invariance_converges_at_second_order():
    def curves(n):
        c0 = sampled(lambda t: np.column_stack([t, 0.5 * np.sin(t)]), n)
        c1 = sampled(lambda t: np.column_stack([t, 0.4 * np.cos(t)]), n)
        w0 = sampled(lambda t: np.column_stack([t - 0.3 * np.sin(t), 0.5 * np.sin(t - 0.3 * np.sin(t))]), n)
        s = lambda t: t - 0.3 * np.sin(t)  # noqa: E731
        w1 = sampled(lambda t: np.column_stack([s(t), 0.4 * np.cos(s(t))]), n)
        return abs(distance_open(c0, c1) - distance_open(w0, w1))

    coarse, fine = curves(256), curves(512)
    assert fine < 1e-4
    order = np.log2(coarse / fine)
    assert 1.5 < order < 2.5


def test_circle_is_already_closed(circle):
    q = srvt(circle)
    assert project_to_closed(q) is q
    assert np.linalg.norm(closure_defect(q)) < 1e-12


@pytest.mark.parametrize("amplitude,frequency", [(0.05, 1), (0.1, 2), (0.05, 3), (0.2, 1), (0.1, 5)])
def test_projection_closes_perturbed_curves(amplitude, frequency):
    q = srvt(hand_outline(256))
    theta = q.params
    bent = q.with_values(q.values + amplitude * np.column_stack([np.cos(frequency * theta),
                                                                 np.sin(frequency * theta + 1.0)]))
    scale = srvt_inverse(bent, "trapezoid").diameter
    assert np.linalg.norm(closure_defect(bent)) > 1e-8 * scale
    closed = project_to_closed(bent, tol_close=1e-8, max_iter=50, scale=scale)
    assert np.linalg.norm(closure_defect(closed)) < 1e-8 * scale
    again = project_to_closed(closed, tol_close=1e-8, max_iter=50, scale=scale)
    np.testing.assert_array_equal(again.values, closed.values)


def test_closed_basis():
    q = srvt(hand_outline(64))
    basis = closed_basis(q)
    assert len(basis) == 2
    assert basis[0].vectors.shape == (64, 2)
    with pytest.raises(RegularityViolation):
        closed_basis(q.with_values(np.zeros((64, 2))))


def test_closed_geodesic_snapshots_are_closed():
    c0 = hand_outline(128)
    c1 = hand_outline(128, SPREAD_FINGER_ANGLES, SPREAD_FINGER_LENGTHS)
    path = geodesic_closed(c0, c1, t_steps=6)
    assert len(path.closure_defects) == 6
    for step, defect in zip(path.steps, path.closure_defects):
        assert defect < 1.01e-8 * step.diameter
    assert distance_closed(c0, c1, t_steps=6) == pytest.approx(np.sqrt(path.energy))
    assert distance_closed(c0, c0, t_steps=3) == pytest.approx(0.0, abs=1e-10)
    assert path.to_dict()["closure_defects"] == path.closure_defects.tolist()


def test_closed_geodesic_rejects_open_curves(sinusoid):
    with pytest.raises(InvalidCurve):
        geodesic_closed(sinusoid, sinusoid)


def test_closed_basis_of_a_constant_srv_function():
    q = SrvCurve(np.tile([1.0, 0.0], (16, 1)), topology="closed")
    first, second = closed_basis(q)
    np.testing.assert_allclose(first.vectors, np.tile([2.0, 0.0], (16, 1)))
    np.testing.assert_allclose(second.vectors, np.tile([0.0, 1.0], (16, 1)))


def test_closed_basis_scales_with_degree_one():
    values = srvt(hand_outline(64)).values
    np.testing.assert_allclose(normal_basis_values(2.5 * values), 2.5 * normal_basis_values(values), rtol=1e-12)


def test_closed_basis_spans_the_normal_space(rng):
    q = srvt(hand_outline(64))
    weights, basis = q.weights, normal_basis_values(q.values)
    w = rng.normal(size=q.values.shape)
    gram = np.einsum("k,ikd,jkd->ij", weights, basis, basis)
    coefficients = np.linalg.solve(gram, np.einsum("k,ikd,kd->i", weights, basis, w))
    tangent = w - np.einsum("i,ikd->kd", coefficients, basis)

    def derivative(direction, eps=1e-5):
        plus = closure_defect(q.values + eps * direction, weights)
        minus = closure_defect(q.values - eps * direction, weights)
        return (plus - minus) / (2.0 * eps)

    np.testing.assert_allclose(derivative(tangent), 0.0, atol=1e-7)
    np.testing.assert_allclose(derivative(w), np.einsum("k,ikd,kd->i", weights, basis, w), rtol=1e-6, atol=1e-9)


def test_projection_defect_drops_at_every_step():
    q = srvt(hand_outline(256))
    theta = q.params
    bent = q.with_values(q.values + 0.2 * np.column_stack([np.cos(theta), np.sin(theta + 1.0)]))
    history = []
    project_to_closed(bent, tol_close=1e-10, max_iter=50, history=history)
    assert len(history) >= 2
    assert all(later < earlier for earlier, later in zip(history, history[1:]))


def test_closed_distance_converges_in_the_step_count(hands):
    coarse = distance_closed(*hands, t_steps=8)
    fine = distance_closed(*hands, t_steps=32)
    assert coarse > 0.0
    assert coarse == pytest.approx(fine, rel=0.05)


def test_closed_distance_is_rotation_invariant(hands):
    c, s = np.cos(0.7), np.sin(0.7)
    rotation = np.array([[c, -s], [s, c]])
    rotated = [h.with_samples(h.samples @ rotation.T) for h in hands]
    assert distance_closed(*rotated, t_steps=6) == pytest.approx(distance_closed(*hands, t_steps=6), rel=1e-6)


def test_projected_path_is_no_shorter_than_its_chord(hands):
    path = geodesic_closed(*hands, t_steps=8)
    start, end = path.srv_steps[0], path.srv_steps[-1]
    chord = start.with_values(end.values - start.values).norm_squared()
    assert chord > 0.0
    assert path.energy >= chord * (1.0 - 1e-9)
