"""
Gait features of walking animations.

A knee crossing is the moment the left knee moves forward past the right
knee: an upward zero crossing of (left - right) knee position projected on
the configured forward axis. Crossing times are interpolated linearly
between frames.
"""
import logging
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.signal import find_peaks

from app.animation.bvh import JointSpaceCurve
from app.animation.skeleton import forward_kinematics
from app.config import AnimationSettings, FeaturePair, FeatureSpec
from app.errors import ConfigError, InsufficientCrossings

logger = logging.getLogger(__name__)

CrossingDirection = Literal["up", "down"]


def axis_vector(axis: Optional[str]) -> np.ndarray:
    """Unit vector for "x", "-z" and so on"""
    if axis is None:
        raise ConfigError("Knee-crossing detection needs an explicit forward axis (animation.forward_axis)")
    sign = -1.0 if axis.startswith("-") else 1.0
    letter = axis.lstrip("+-").lower()
    if letter not in ("x", "y", "z"):
        raise ConfigError(f"Unknown axis {axis!r}")
    vector = np.zeros(3)
    vector["xyz".index(letter)] = sign
    return vector


def joint_positions(animation: JointSpaceCurve) -> np.ndarray:
    """World positions of every joint in every frame, shape (F, J, 3)"""
    poses, translations = animation.skeleton.split_channels(animation.channels)
    return forward_kinematics(animation.skeleton, poses, translations)


def knee_signal(animation: JointSpaceCurve, left_knee: str, right_knee: str, forward_axis: str) -> np.ndarray:
    """Forward offset of the left knee ahead of the right knee per frame"""
    positions = joint_positions(animation)
    skeleton = animation.skeleton
    forward = axis_vector(forward_axis)
    left = positions[:, skeleton.index_of(left_knee)] @ forward
    right = positions[:, skeleton.index_of(right_knee)] @ forward
    return left - right


def zero_crossings(signal: np.ndarray, times: np.ndarray, direction: CrossingDirection = "up") -> np.ndarray:
    """Linearly interpolated times where ``signal`` crosses zero in the given direction"""
    before, after = signal[:-1], signal[1:]
    if direction == "up":
        hits = np.flatnonzero((before < 0.0) & (after >= 0.0))
    else:
        hits = np.flatnonzero((before > 0.0) & (after <= 0.0))
    fraction = before[hits] / (before[hits] - after[hits])
    return times[hits] + fraction * (times[hits + 1] - times[hits])


def detect_knee_crossings(animation: JointSpaceCurve, count: Optional[int], left_knee: str = "LeftLeg",
                          right_knee: str = "RightLeg", forward_axis: Optional[str] = None,
                          direction: CrossingDirection = "up") -> np.ndarray:
    """
    Times (seconds) at which the left knee passes the right knee

    Args:
        animation: Walking animation
        count: Number of crossings to return, all of them when None
        left_knee: Name of the left knee joint
        right_knee: Name of the right knee joint
        forward_axis: Walking direction such as "z" or "-x"
        direction: "up" for left overtaking right, "down" for the reverse

    Returns:
        The first ``count`` crossing times

    Raises:
        InsufficientCrossings: if fewer than ``count`` crossings exist
    """
    signal = knee_signal(animation, left_knee, right_knee, forward_axis)
    crossings = zero_crossings(signal, animation.times, direction)
    logger.debug(f"Found {len(crossings)} {direction}ward knee crossings")
    if count is None:
        return crossings
    if len(crossings) < count:
        raise InsufficientCrossings(f"Requested {count} knee crossings, the animation has {len(crossings)}")
    return crossings[:count]


def foot_trajectories(animation: JointSpaceCurve, left_foot: str = "LeftFoot",
                      right_foot: str = "RightFoot") -> Tuple[np.ndarray, np.ndarray]:
    """World positions (F, 3) of the left and right foot"""
    positions = joint_positions(animation)
    skeleton = animation.skeleton
    return positions[:, skeleton.index_of(left_foot)], positions[:, skeleton.index_of(right_foot)]


def count_height_peaks(trajectory: np.ndarray, up_axis: int = 1, prominence: Optional[float] = None) -> int:
    """Number of local height maxima of a foot trajectory"""
    height = np.asarray(trajectory)[:, up_axis]
    if prominence is None:
        prominence = 0.1 * float(np.ptp(height))
    if prominence <= 0.0:
        return 0
    peaks, _ = find_peaks(height, prominence=prominence)
    return len(peaks)


def swap_sides(animation: JointSpaceCurve, left: str = "Left", right: str = "Right") -> JointSpaceCurve:
    """Exchange the channel data of left and right joints (names paired by prefix)"""
    skeleton = animation.skeleton
    names = skeleton.names
    channels = animation.channels.copy()
    columns: List[List[int]] = [[] for _ in names]
    for column, (joint, _) in enumerate(skeleton.channel_layout):
        columns[joint].append(column)
    for index, name in enumerate(names):
        if not name.startswith(left):
            continue
        partner = right + name[len(left):]
        if partner in names:
            other = names.index(partner)
            channels[:, columns[index]] = animation.channels[:, columns[other]]
            channels[:, columns[other]] = animation.channels[:, columns[index]]
    return JointSpaceCurve(skeleton, animation.frame_rate, channels, animation.translation_weight)


def knee_features(anim0: JointSpaceCurve, anim1: JointSpaceCurve, count: int, settings: AnimationSettings,
                  weight: float = 1.0) -> FeatureSpec:
    """
    Feature pairs from the first ``count`` knee crossings of both animations.

    Crossing times map to curve parameters through each animation's affine
    time map.
    """
    times = [
        detect_knee_crossings(anim, count, settings.left_knee, settings.right_knee, settings.forward_axis)
        for anim in (anim0, anim1)
    ]
    logger.info(f"Knee crossings: {np.round(times[0], 4).tolist()} and {np.round(times[1], 4).tolist()}")
    theta0 = np.clip(anim0.params_at(times[0]), 0.0, 2.0 * np.pi)
    theta1 = np.clip(anim1.params_at(times[1]), 0.0, 2.0 * np.pi)
    pairs = [FeaturePair(theta0=float(a), theta1=float(b)) for a, b in zip(theta0, theta1)]
    return FeatureSpec(**{"lambda": weight, "pairs": pairs})
