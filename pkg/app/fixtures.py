"""
Synthetic demo data: wave curves, hand outlines and walking animations.

The waves reproduce the matching of an open curve with three maxima and
three minima against one with two of each. The hands are closed outlines
with five radial fingers. The walking animations have prescribed knee
crossing times, so feature detection and interpolation can be checked
against known answers.
"""
import logging
import os
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import PchipInterpolator

from app.animation.bvh import DEFAULT_TRANSLATION_WEIGHT, JointSpaceCurve, save_animation
from app.animation.skeleton import Joint, Skeleton
from app.config import FeaturePair, FeatureSpec
from app.curve_core import TWO_PI, DiscreteCurve, uniform_grid
from app.errors import InvalidCurve
from app.io import save_curve, save_feature_spec

logger = logging.getLogger(__name__)

HAND_FINGER_ANGLES = (0.75, 1.25, 1.6, 1.95, 2.35)
HAND_FINGER_LENGTHS = (0.7, 1.1, 1.25, 1.1, 0.85)
SPREAD_FINGER_ANGLES = (0.55, 1.15, 1.6, 2.05, 2.55)
SPREAD_FINGER_LENGTHS = (0.9, 1.0, 1.1, 1.0, 0.9)


def wave_extrema(n_extrema: int) -> np.ndarray:
    """Parameters of the interior extrema of ``wave_curve(n_extrema)``"""
    return (2 * np.arange(n_extrema) + 1) * np.pi / n_extrema


def wave_curve(n_extrema: int, n: int = 256, amplitude: float = 1.0) -> DiscreteCurve:
    """Open planar curve (theta, A sin(m theta / 2)) with m interior extrema"""
    if n_extrema < 1:
        raise InvalidCurve("A wave needs at least one extremum")
    theta = uniform_grid(n, "open")
    return DiscreteCurve(np.column_stack([theta, amplitude * np.sin(n_extrema * theta / 2.0)]))


def wave_features(first: Sequence[int], second: Sequence[int], n0: int = 6, n1: int = 4,
                  weight: float = 1.0) -> FeatureSpec:
    """Pairs extremum ``first[i]`` of the n0-wave with extremum ``second[i]`` of the n1-wave"""
    theta0, theta1 = wave_extrema(n0), wave_extrema(n1)
    pairs = [FeaturePair(theta0=float(theta0[i]), theta1=float(theta1[j])) for i, j in zip(first, second)]
    return FeatureSpec(**{"lambda": weight, "pairs": pairs})


def hand_outline(n: int = 256, finger_angles: Sequence[float] = HAND_FINGER_ANGLES,
                 finger_lengths: Sequence[float] = HAND_FINGER_LENGTHS, width: float = 0.09) -> DiscreteCurve:
    """
    Closed hand-like outline in polar form.

    The radius is 1 plus a narrow Gaussian bump per finger, so fingertip k
    sits at parameter ``finger_angles[k]``.
    """
    if len(finger_angles) != len(finger_lengths):
        raise InvalidCurve("Need one length per finger")
    theta = uniform_grid(n, "closed")
    radius = np.ones_like(theta)
    for angle, length in zip(finger_angles, finger_lengths):
        distance = np.angle(np.exp(1j * (theta - angle)))
        radius += length * np.exp(-0.5 * (distance / width) ** 2)
    return DiscreteCurve(np.column_stack([radius * np.cos(theta), radius * np.sin(theta)]), topology="closed")


def hand_features(first: Sequence[int], second: Sequence[int],
                  angles0: Sequence[float] = HAND_FINGER_ANGLES, angles1: Sequence[float] = SPREAD_FINGER_ANGLES,
                  weight: float = 1.0) -> FeatureSpec:
    """Fingertip pairs; an index of the form k + 0.5 means midway between fingers k and k + 1"""

    def tip(angles: Sequence[float], index: float) -> float:
        low = int(np.floor(index))
        if index == low:
            return float(angles[low])
        return float(0.5 * (angles[low] + angles[low + 1]))

    pairs = [FeaturePair(theta0=tip(angles0, i), theta1=tip(angles1, j)) for i, j in zip(first, second)]
    return FeatureSpec(**{"lambda": weight, "pairs": pairs})


@dataclass
class GaitPhase:
    """Monotone gait phase p(t); the left knee passes the right one at p = 2*pi*k"""
    times: np.ndarray
    phases: np.ndarray

    def __call__(self, t) -> np.ndarray:
        return PchipInterpolator(self.times, self.phases)(t)

    @property
    def step_count(self) -> int:
        """Foot-height peaks strictly inside the animation (one per multiple of pi)"""
        first = int(np.floor(self.phases[0] / np.pi)) + 1
        last = int(np.ceil(self.phases[-1] / np.pi)) - 1
        return max(0, last - first + 1)

    @property
    def first_step(self) -> int:
        return int(np.floor(self.phases[0] / np.pi)) + 1


def gait_phase(crossing_times: Sequence[float], duration: float) -> GaitPhase:
    times = np.asarray(crossing_times, dtype=float)
    if len(times) == 0 or times[0] <= 0.0 or times[-1] >= duration or np.any(np.diff(times) <= 0.0):
        raise InvalidCurve("Crossing times must increase strictly inside (0, duration)")
    rate = TWO_PI / (np.mean(np.diff(times)) if len(times) > 1 else times[0])
    phases = TWO_PI * np.arange(1, len(times) + 1)
    start = phases[0] - rate * times[0]
    end = phases[-1] + rate * (duration - times[-1])
    return GaitPhase(np.concatenate([[0.0], times, [duration]]), np.concatenate([[start], phases, [end]]))


def gait_skeleton(thigh: float = 0.45, shin: float = 0.45, hip_width: float = 0.1) -> Skeleton:
    """Hips with upper leg, knee and foot per side (CMU joint names)"""
    joints = [Joint("Hips", -1, (0.0, 0.0, 0.0),
                    ("Xposition", "Yposition", "Zposition", "Zrotation", "Xrotation", "Yrotation"))]
    for side, sign in (("Left", 1.0), ("Right", -1.0)):
        start = len(joints)
        joints.extend([
            Joint(f"{side}UpLeg", 0, (sign * hip_width, 0.0, 0.0), ("Zrotation", "Xrotation", "Yrotation")),
            Joint(f"{side}Leg", start, (0.0, -thigh, 0.0), ("Xrotation",)),
            Joint(f"{side}Foot", start + 1, (0.0, -shin, 0.0), ("Xrotation",)),
            Joint(f"{side}Foot_End", start + 2, (0.0, 0.0, 0.1), (), end_site=True),
        ])
    return Skeleton(joints)


def gait_animation(crossing_times: Sequence[float] = (1.0, 2.0, 3.0), duration: float = 4.0,
                   frame_rate: float = 30.0, hip_amplitude: float = 0.4, knee_amplitude: float = 1.0,
                   speed: float = 1.0, step_heights: Optional[Sequence[float]] = None,
                   translation_weight: float = DEFAULT_TRANSLATION_WEIGHT) -> JointSpaceCurve:
    """
    Synthetic walk whose left knee passes the right knee at ``crossing_times``.

    Hips swing by -/+ A sin(p) on the left/right, the swinging leg flexes its
    knee by K max(0, +/-cos p)^2 and the root moves forward along +z.
    ``step_heights`` scales the knee flexion of individual steps (one entry
    per foot-height peak, in order), giving obstacle-stepping variants.
    """
    phase = gait_phase(crossing_times, duration)
    times = np.arange(int(round(duration * frame_rate)) + 1) / frame_rate
    p = phase(times)
    skeleton = gait_skeleton()

    nearest = np.rint(p / np.pi).astype(int)
    heights = np.ones_like(p)
    if step_heights is not None:
        for offset, height in enumerate(step_heights):
            heights[nearest == phase.first_step + offset] = height

    hip = hip_amplitude * np.sin(p)
    flex_left = knee_amplitude * heights * np.maximum(0.0, np.cos(p)) ** 2
    flex_right = knee_amplitude * heights * np.maximum(0.0, -np.cos(p)) ** 2

    channels = np.zeros((len(times), skeleton.channel_count))
    columns: Dict[Tuple[str, str], int] = {
        (skeleton.joints[joint].name, channel): column
        for column, (joint, channel) in enumerate(skeleton.channel_layout)
    }
    channels[:, columns[("Hips", "Yposition")]] = 0.9
    channels[:, columns[("Hips", "Zposition")]] = speed * times
    channels[:, columns[("LeftUpLeg", "Xrotation")]] = -hip
    channels[:, columns[("RightUpLeg", "Xrotation")]] = hip
    channels[:, columns[("LeftLeg", "Xrotation")]] = flex_left
    channels[:, columns[("RightLeg", "Xrotation")]] = flex_right
    return JointSpaceCurve(skeleton, frame_rate, channels, translation_weight)


def write_fixtures(directory: str, n: int = 256) -> Dict[str, str]:
    """Write the demo curves, feature files and walks; returns name -> path"""
    os.makedirs(directory, exist_ok=True)
    written: Dict[str, str] = {}

    def target(name: str) -> str:
        path = os.path.join(directory, name)
        written[name] = path
        return path

    save_curve(wave_curve(6, n), target("waves0.json"))
    save_curve(wave_curve(4, n), target("waves1.json"))
    save_feature_spec(wave_features([0, 5], [0, 3]), target("waves_features.json"))
    save_curve(hand_outline(n), target("hand0.json"))
    save_curve(hand_outline(n, SPREAD_FINGER_ANGLES, SPREAD_FINGER_LENGTHS), target("hand1.json"))
    save_feature_spec(hand_features([1, 3], [1, 3]), target("hand_features.json"))
    save_feature_spec(hand_features([0], [1.5]), target("hand_features_wrong.json"))
    save_animation(gait_animation((1.0, 2.5), 3.5), target("walk2.json"))
    save_animation(gait_animation((0.75, 1.75, 2.75), 3.5), target("walk3.json"))
    save_animation(gait_animation((0.75, 1.75, 2.75), 3.5, step_heights=[1.0, 1.0, 1.6, 1.6]),
                   target("walk3_obstacle.json"))
    logger.info(f"Wrote {len(written)} fixture files to {directory}")
    return written
