from dataclasses import replace

import numpy as np
import pytest

from app.animation.bvh import (
    JointSpaceCurve,
    animation_from_dict,
    animation_to_dict,
    format_bvh,
    load_animation,
    parse_bvh,
    save_animation,
)
from app.animation.gait import (
    count_height_peaks,
    detect_knee_crossings,
    foot_trajectories,
    knee_features,
    swap_sides,
)
from app.animation.interpolation import Interpolator, interpolate, invert_timing, sweep
from app.animation.skeleton import Joint, Skeleton, forward_kinematics
from app.config import AnimationSettings, FeatureSpec, RunConfig
from app.errors import ConfigError, InsufficientCrossings, InvalidCurve, ParseError, UnsupportedChannel
from app.fixtures import gait_animation, gait_phase
from app.warps import Warp

FRAME = 1.0 / 30.0

ARM_BVH = """HIERARCHY
ROOT Shoulder
{
	OFFSET 0 0 0
	CHANNELS 4 Xposition Yposition Zposition Zrotation
	JOINT Elbow
	{
		OFFSET 1 0 0
		CHANNELS 3 Zrotation Xrotation Yrotation
		End Site
		{
			OFFSET 1 0 0
		}
	}
}
MOTION
Frames: 3
Frame Time: 0.5
0 0 0 10 20 30 40
0 0 0 10 20 30 40
0 0 0 10 20 30 40
"""


def arm():
    return Skeleton([
        Joint("Shoulder", -1, (0.0, 0.0, 0.0), ("Zrotation",)),
        Joint("Elbow", 0, (1.0, 0.0, 0.0), ("Zrotation", "Xrotation", "Yrotation")),
        Joint("Hand", 1, (1.0, 0.0, 0.0), end_site=True),
    ])


def rotation(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == "x":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == "y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def test_forward_kinematics_bends_the_elbow():
    positions = forward_kinematics(arm(), [0.0, np.pi / 2, 0.0, 0.0])
    np.testing.assert_allclose(positions[1], [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(positions[2], [1.0, 1.0, 0.0], atol=1e-12)


def test_euler_channels_compose_in_file_order():
    z, x, y = 0.3, -0.7, 1.1
    positions = forward_kinematics(arm(), [0.0, z, x, y])
    expected = np.array([1.0, 0.0, 0.0]) + rotation("z", z) @ rotation("x", x) @ rotation("y", y) @ [1.0, 0.0, 0.0]
    np.testing.assert_allclose(positions[2], expected, atol=1e-12)
    frames = forward_kinematics(arm(), np.zeros((4, 4)), translation=[0.0, 2.0, 0.0])
    assert frames.shape == (4, 3, 3)
    np.testing.assert_allclose(frames[:, 2], [[2.0, 2.0, 0.0]] * 4)


def test_skeleton_validation():
    with pytest.raises(InvalidCurve):
        Skeleton([Joint("A", -1, (0, 0, 0)), Joint("B", -1, (0, 0, 0))])
    with pytest.raises(UnsupportedChannel):
        Skeleton([Joint("A", -1, (0, 0, 0)), Joint("B", 0, (0, 0, 0), ("Xposition",))])
    with pytest.raises(InvalidCurve):
        forward_kinematics(arm(), [0.0, 0.0])


def test_parse_constant_bvh():
    animation = parse_bvh(ARM_BVH)
    assert animation.n_frames == 3
    assert animation.frame_rate == pytest.approx(2.0)
    assert animation.skeleton.names == ["Shoulder", "Elbow", "Elbow_End"]
    np.testing.assert_allclose(animation.rotations[0], np.deg2rad([10.0, 20.0, 30.0, 40.0]))
    np.testing.assert_allclose(animation.translations[:, 0], 0.0)
    assert animation.curve.degenerate


def test_bvh_roundtrip(tmp_path):
    animation = gait_animation((1.0, 2.5), 3.5)
    restored = parse_bvh(format_bvh(animation))
    np.testing.assert_allclose(restored.channels, animation.channels, atol=1e-9)
    assert restored.frame_rate == pytest.approx(animation.frame_rate)
    for suffix in ("bvh", "json"):
        path = str(tmp_path / f"walk.{suffix}")
        save_animation(animation, path)
        np.testing.assert_allclose(load_animation(path).channels, animation.channels, atol=1e-9)


def test_json_frame_rate_falls_back_to_the_setting():
    document = animation_to_dict(gait_animation((1.0, 2.5), 3.5))
    del document["frame_rate"]
    assert animation_from_dict(document, frame_rate=24.0).frame_rate == pytest.approx(24.0)
    with pytest.raises(ParseError):
        animation_from_dict(document)
    document["frame_rate"] = 60.0
    assert animation_from_dict(document, frame_rate=24.0).frame_rate == pytest.approx(60.0)


def test_angles_are_unrolled():
    text = ARM_BVH.replace("0 0 0 10 20 30 40\n0 0 0 10 20 30 40\n0 0 0 10 20 30 40",
                           "0 0 0 359 0 0 0\n0 0 0 1 0 0 0\n0 0 0 179 0 0 0")
    animation = parse_bvh(text)
    np.testing.assert_allclose(np.rad2deg(animation.rotations[:, 0]), [359.0, 361.0, 539.0], atol=1e-9)
    np.testing.assert_allclose(np.rad2deg(animation.wrapped()[:, 0]), [-1.0, 1.0, 179.0], atol=1e-9)


@pytest.mark.parametrize("broken,line", [
    (ARM_BVH.replace("MOTION", "NOTION"), 16),
    (ARM_BVH.replace("Frames: 3", "Frames: 4"), 21),
    (ARM_BVH.replace("0 0 0 10 20 30 40\n0 0", "0 0 0 10 20 30\n0 0", 1), 19),
    (ARM_BVH.replace("Frame Time: 0.5", "Frame Time: fast"), 18),
])
def test_parse_errors_carry_line_numbers(broken, line):
    with pytest.raises(ParseError) as info:
        parse_bvh(broken, "arm.bvh")
    assert info.value.line == line
    assert info.value.path == "arm.bvh"


def test_unsupported_channels():
    with pytest.raises(UnsupportedChannel):
        parse_bvh(ARM_BVH.replace("CHANNELS 3 Zrotation Xrotation Yrotation", "CHANNELS 3 Zrotation Xrotation Xscale"))
    with pytest.raises(UnsupportedChannel):
        parse_bvh(ARM_BVH.replace("CHANNELS 3 Zrotation Xrotation Yrotation", "CHANNELS 3 Zrotation Xrotation Xposition"))


def test_knee_crossings_follow_the_gait_phase():
    animation = gait_animation()
    crossings = detect_knee_crossings(animation, 3, forward_axis="z")
    np.testing.assert_allclose(crossings, [1.0, 2.0, 3.0], atol=0.01)
    assert len(detect_knee_crossings(animation, None, forward_axis="z")) == 3
    with pytest.raises(InsufficientCrossings):
        detect_knee_crossings(animation, 5, forward_axis="z")
    with pytest.raises(ConfigError):
        detect_knee_crossings(animation, 3)


def test_swapping_sides_reverses_the_crossings():
    animation = gait_animation()
    down = detect_knee_crossings(animation, None, forward_axis="z", direction="down")
    swapped = detect_knee_crossings(swap_sides(animation), None, forward_axis="z")
    np.testing.assert_allclose(swapped, down, atol=1e-9)


@pytest.mark.parametrize("times,duration,heights", [
    ((1.0, 2.0, 3.0), 4.0, None),
    ((1.0, 2.5), 3.5, None),
    ((0.75, 1.75, 2.75), 3.5, [1.0, 1.0, 1.6, 1.6]),
])
def test_foot_peaks_count_the_steps(times, duration, heights):
    animation = gait_animation(times, duration, step_heights=heights)
    left, right = foot_trajectories(animation)
    assert left.shape == (animation.n_frames, 3)
    assert count_height_peaks(left) + count_height_peaks(right) == gait_phase(times, duration).step_count


def test_knee_features_map_times_to_parameters():
    walk2, walk3 = gait_animation((1.0, 2.5), 3.5), gait_animation((0.75, 1.75, 2.75), 3.5)
    features = knee_features(walk2, walk3, 2, AnimationSettings(forward_axis="z"), weight=100.0)
    assert features.weight == 100.0
    np.testing.assert_allclose([pair.theta0 for pair in features.pairs], walk2.params_at([1.0, 2.5]), atol=0.02)
    np.testing.assert_allclose([pair.theta1 for pair in features.pairs], walk3.params_at([0.75, 1.75]), atol=0.02)


def test_linear_blend_of_an_animation_with_itself():
    animation = gait_animation()
    blended = interpolate(animation, animation, None, "linear-euler", 0.3)
    np.testing.assert_allclose(blended.channels, animation.channels, atol=1e-12)
    assert blended.duration == pytest.approx(animation.duration)


def test_reparametrized_blend_of_an_animation_with_itself():
    animation = gait_animation()
    config = RunConfig.validate_mapping({"dp": {"grid_size": 30}, "match": {"method": "dp"}})
    interpolator = Interpolator(config)
    plain = interpolator.prepare(animation, animation, "elastic-noreparam").at(0.4)
    matched = interpolator.prepare(animation, animation, "elastic-reparam").at(0.4)
    np.testing.assert_allclose(matched.channels, plain.channels, atol=1e-8)
    np.testing.assert_allclose(plain.channels, animation.channels, atol=1e-6)


def test_sweep_starts_and_ends_at_the_inputs():
    walk2, walk3 = gait_animation((1.0, 2.5), 3.5), gait_animation((0.75, 1.75, 2.75), 3.5)
    blends = sweep(walk2, walk3, None, "elastic-noreparam", 2)
    assert [s for s, _ in blends] == [0.0, 0.5, 1.0]
    np.testing.assert_allclose(blends[0][1].channels, walk2.channels, atol=1e-6)
    np.testing.assert_allclose(blends[-1][1].channels, walk3.channels, atol=1e-6)
    with pytest.raises(ConfigError):
        sweep(walk2, walk3, None, "elastic-noreparam", 0)


def test_interpolation_input_errors():
    walk = gait_animation()
    interpolator = Interpolator()
    with pytest.raises(ConfigError):
        interpolator.prepare(walk, walk, "cubic-euler")
    with pytest.raises(ConfigError):
        interpolator.prepare(walk, walk, "elastic-features", FeatureSpec.empty())
    with pytest.raises(ConfigError):
        interpolator.prepare(walk, walk, "linear-euler").at(1.5)
    other = JointSpaceCurve(arm(), 30.0, np.zeros((5, 4)))
    with pytest.raises(InvalidCurve):
        interpolator.prepare(walk, other, "linear-euler")


def crossing_structure_holds(animation, expected):
    crossings = detect_knee_crossings(animation, None, forward_axis="z")
    if len(crossings) not in (2, 3):
        return False
    return bool(np.all(np.abs(crossings[:2] - expected) <= 2 * FRAME))


def test_feature_blend_keeps_the_gait_alternating():
    walk2, walk3 = gait_animation((1.0, 2.5), 3.5), gait_animation((0.75, 1.75, 2.75), 3.5)
    config = RunConfig.validate_mapping({
        "dp": {"grid_size": 35},
        "gradient": {"max_iters": 300},
        "animation": {"forward_axis": "z"},
    })
    features = knee_features(walk2, walk3, 2, config.animation, weight=100.0)
    expected = 0.5 * (np.array([1.0, 2.5]) + np.array([0.75, 1.75]))

    elastic = interpolate(walk2, walk3, features, "elastic-features", 0.5, config)
    linear = interpolate(walk2, walk3, features, "linear-euler", 0.5, config)
    assert crossing_structure_holds(elastic, expected)
    assert not crossing_structure_holds(linear, expected)


def test_timing_inversion_resolves_flat_runs_to_their_start():
    theta = invert_timing(np.array([0.0, 1.0, 1.0, 1.0, 2.0]), np.array([0.0, 0.1, 0.2, 0.3, 0.4]),
                          np.array([0.5, 1.0, 1.5]))
    np.testing.assert_allclose(theta, [0.05, 0.1, 0.25])


def test_retiming_with_a_flat_warp():
    walk2, walk3 = gait_animation((1.0, 2.5), 3.5), gait_animation((0.75, 1.75, 2.75), 3.5)
    prepared = Interpolator().prepare(walk2, walk3, "elastic-noreparam")
    flat = Warp.from_vertices([[0.0, 0.0], [2.0, 1.0], [4.0, 1.0], [2.0 * np.pi, 2.0 * np.pi]], prepared.warp.params)
    result = replace(prepared, warp=flat).at(1.0)
    assert np.all(np.isfinite(result.channels))
    assert result.n_frames == walk2.n_frames
    assert result.duration == pytest.approx(walk3.duration)
