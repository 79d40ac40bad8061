"""
Animation files and joint-space curves.

Two formats are read and written: a BVH subset (HIERARCHY and MOTION
sections with ROOT, JOINT, OFFSET, CHANNELS and End Site; rotation channels
in degrees plus root translation) and a native JSON format
``{"skeleton": ..., "frame_rate": ..., "frames": ...}`` holding the same
channel rows with angles in radians.

Loaded angles are unrolled per channel, adding multiples of 2*pi so that
consecutive frames differ by less than pi. Frame times are mapped affinely
onto the curve parameter range [0, 2*pi].
"""
import json
import logging
import os
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.animation.skeleton import POSITION_CHANNELS, ROTATION_CHANNELS, Joint, Skeleton
from app.curve_core import TWO_PI, DiscreteCurve
from app.errors import InvalidCurve, ParseError, UnsupportedChannel

logger = logging.getLogger(__name__)

DEFAULT_TRANSLATION_WEIGHT = 0.1


@dataclass
class JointSpaceCurve:
    """
    An animation seen as an open curve in joint space.

    Args:
        skeleton: Joint hierarchy
        frame_rate: Frames per second
        channels: Motion rows (F, C) in channel-layout order; rotations in
            radians and unrolled, root positions in length units
        translation_weight: Scale applied to root-translation coordinates
            when the animation is turned into a curve
    """
    skeleton: Skeleton
    frame_rate: float
    channels: np.ndarray
    translation_weight: float = DEFAULT_TRANSLATION_WEIGHT

    def __post_init__(self):
        self.channels = np.atleast_2d(np.asarray(self.channels, dtype=float))
        if self.channels.shape[1] != self.skeleton.channel_count:
            raise InvalidCurve(
                f"Animation rows have {self.channels.shape[1]} values, "
                f"skeleton declares {self.skeleton.channel_count} channels"
            )
        if self.channels.shape[0] < 2:
            raise InvalidCurve("An animation needs at least two frames")
        if self.frame_rate <= 0.0:
            raise InvalidCurve(f"Frame rate must be positive, got {self.frame_rate}")

    @property
    def n_frames(self) -> int:
        return self.channels.shape[0]

    @property
    def frame_time(self) -> float:
        return 1.0 / self.frame_rate

    @property
    def duration(self) -> float:
        return (self.n_frames - 1) * self.frame_time

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_time

    @property
    def rotations(self) -> np.ndarray:
        return self.channels[:, self.skeleton.rotation_columns]

    @property
    def translations(self) -> np.ndarray:
        return self.skeleton.split_channels(self.channels)[1]

    def params_at(self, times) -> np.ndarray:
        """Curve parameters of physical times"""
        return TWO_PI * np.asarray(times, dtype=float) / self.duration

    def times_at(self, params) -> np.ndarray:
        return np.asarray(params, dtype=float) * self.duration / TWO_PI

    @property
    def curve(self) -> DiscreteCurve:
        samples = self.channels.copy()
        samples[:, self.skeleton.translation_columns] *= self.translation_weight
        return DiscreteCurve(samples, topology="open", allow_degenerate=True)

    def with_curve(self, curve: DiscreteCurve, frame_rate: Optional[float] = None) -> "JointSpaceCurve":
        """Animation on this skeleton whose frames are the samples of ``curve``"""
        channels = np.array(curve.samples, dtype=float)
        channels[:, self.skeleton.translation_columns] /= self.translation_weight
        return JointSpaceCurve(self.skeleton, frame_rate or self.frame_rate, channels, self.translation_weight)

    def wrapped(self) -> np.ndarray:
        """Rotation channels reduced to [-pi, pi)"""
        return (self.rotations + np.pi) % TWO_PI - np.pi

    def __repr__(self) -> str:
        return (f"JointSpaceCurve(frames={self.n_frames}, dof={self.skeleton.dof_total}, "
                f"frame_rate={self.frame_rate:g})")


def unroll(channels: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Unroll rotation columns so that consecutive frames differ by less than pi"""
    channels = np.array(channels, dtype=float)
    columns = skeleton.rotation_columns
    if len(columns):
        channels[:, columns] = np.unwrap(channels[:, columns], axis=0)
    return channels


def _lines(text: str) -> List[Tuple[int, List[str]]]:
    return [(number, line.split()) for number, line in enumerate(text.splitlines(), 1) if line.strip()]


def _floats(words: List[str], path: Optional[str], number: int) -> List[float]:
    try:
        return [float(word) for word in words]
    except ValueError as e:
        raise ParseError(f"Expected numbers, got {' '.join(words)!r}", path, number) from e


def parse_bvh(text: str, path: Optional[str] = None,
              translation_weight: float = DEFAULT_TRANSLATION_WEIGHT) -> JointSpaceCurve:
    """
    Parse BVH text into an unrolled joint-space curve.

    Raises:
        ParseError: on malformed structure or motion rows, with the line number
        UnsupportedChannel: for scale channels or translation below the root
    """
    lines = _lines(text)
    if not lines or lines[0][1] != ["HIERARCHY"]:
        raise ParseError("File must start with HIERARCHY", path, lines[0][0] if lines else 1)

    names: List[str] = []
    parents: List[int] = []
    offsets: List[Tuple[float, float, float]] = []
    channels: List[Tuple[str, ...]] = []
    end_sites: List[bool] = []
    stack: List[int] = []
    pending: Optional[int] = None

    ptr = 1
    while ptr < len(lines) and lines[ptr][1][0] != "MOTION":
        number, words = lines[ptr]
        head = words[0]
        if head in ("ROOT", "JOINT") or words == ["End", "Site"]:
            if pending is not None:
                raise ParseError(f"Expected '{{' after {names[pending]!r}", path, number)
            if head == "ROOT" and (names or stack):
                raise ParseError("Only one ROOT is supported", path, number)
            if head != "ROOT" and not stack:
                raise ParseError(f"{head} outside of a ROOT block", path, number)
            end_site = head == "End"
            parent = stack[-1] if stack else -1
            name = f"{names[parent]}_End" if end_site else " ".join(words[1:])
            if not name:
                raise ParseError(f"{head} without a name", path, number)
            names.append(name)
            parents.append(parent)
            offsets.append((0.0, 0.0, 0.0))
            channels.append(())
            end_sites.append(end_site)
            pending = len(names) - 1
        elif head == "{":
            if pending is None:
                raise ParseError("Unexpected '{'", path, number)
            stack.append(pending)
            pending = None
        elif head == "}":
            if not stack:
                raise ParseError("Unbalanced '}'", path, number)
            stack.pop()
        elif head == "OFFSET":
            if not stack or len(words) != 4:
                raise ParseError("OFFSET needs three values inside a joint block", path, number)
            offsets[stack[-1]] = tuple(_floats(words[1:], path, number))
        elif head == "CHANNELS":
            if not stack or len(words) < 2:
                raise ParseError("CHANNELS outside of a joint block", path, number)
            count = int(_floats(words[1:2], path, number)[0])
            declared = tuple(words[2:])
            if count != len(declared):
                raise ParseError(f"CHANNELS declares {count} channels but lists {len(declared)}", path, number)
            for channel in declared:
                if channel not in ROTATION_CHANNELS + POSITION_CHANNELS:
                    raise UnsupportedChannel(f"{path or '<bvh>'}:{number}: unsupported channel {channel!r}")
                if channel in POSITION_CHANNELS and stack[-1] != 0:
                    raise UnsupportedChannel(
                        f"{path or '<bvh>'}:{number}: translation channel {channel!r} below the root"
                    )
            if end_sites[stack[-1]] and declared:
                raise ParseError("End Site cannot have channels", path, number)
            channels[stack[-1]] = declared
        else:
            raise ParseError(f"Unknown keyword {head!r}", path, number)
        ptr += 1

    if ptr >= len(lines):
        raise ParseError("Missing MOTION section", path, lines[-1][0])
    if stack or pending is not None:
        raise ParseError("Unclosed joint block before MOTION", path, lines[ptr][0])
    if not names:
        raise ParseError("HIERARCHY declares no joints", path, lines[ptr][0])

    skeleton = Skeleton([
        Joint(name, parent, offset, channel, end_site)
        for name, parent, offset, channel, end_site in zip(names, parents, offsets, channels, end_sites)
    ])
    frames, frame_time, rows = _parse_motion(lines[ptr + 1:], skeleton.channel_count, path,
                                             lines[ptr][0])
    data = np.array(rows, dtype=float).reshape(frames, skeleton.channel_count)
    data[:, skeleton.rotation_columns] = np.deg2rad(data[:, skeleton.rotation_columns])
    logger.debug(f"Parsed BVH with {len(names)} joints and {frames} frames")
    return JointSpaceCurve(skeleton, 1.0 / frame_time, unroll(data, skeleton), translation_weight)


def _parse_motion(lines: List[Tuple[int, List[str]]], width: int, path: Optional[str],
                  motion_line: int) -> Tuple[int, float, List[List[float]]]:
    if len(lines) < 2:
        raise ParseError("MOTION needs 'Frames:' and 'Frame Time:' lines", path, motion_line)
    number, words = lines[0]
    if words[0] != "Frames:" or len(words) != 2:
        raise ParseError("Expected 'Frames: <count>'", path, number)
    frames = int(_floats(words[1:], path, number)[0])
    number, words = lines[1]
    if words[:2] != ["Frame", "Time:"] or len(words) != 3:
        raise ParseError("Expected 'Frame Time: <seconds>'", path, number)
    frame_time = _floats(words[2:], path, number)[0]
    if frame_time <= 0.0:
        raise ParseError("Frame time must be positive", path, number)

    rows = []
    for number, words in lines[2:]:
        values = _floats(words, path, number)
        if len(values) != width:
            raise ParseError(f"Frame has {len(values)} values, expected {width}", path, number)
        rows.append(values)
    if len(rows) != frames:
        raise ParseError(f"Header announces {frames} frames, found {len(rows)}", path,
                         lines[-1][0])
    return frames, frame_time, rows


def format_bvh(animation: JointSpaceCurve) -> str:
    """BVH text with full-precision values; unrolled angles are written as is"""
    skeleton = animation.skeleton
    children: List[List[int]] = [[] for _ in skeleton.joints]
    for index, joint in enumerate(skeleton.joints[1:], 1):
        children[joint.parent].append(index)

    out = ["HIERARCHY"]

    def write_joint(index: int, depth: int) -> None:
        joint = skeleton.joints[index]
        indent = "\t" * depth
        if joint.end_site:
            out.append(f"{indent}End Site")
        else:
            out.append(f"{indent}{'ROOT' if index == 0 else 'JOINT'} {joint.name}")
        out.append(f"{indent}{{")
        out.append(f"{indent}\tOFFSET " + " ".join(f"{value:.17g}" for value in joint.offset))
        if not joint.end_site:
            out.append(f"{indent}\tCHANNELS {len(joint.channels)}" +
                       "".join(f" {channel}" for channel in joint.channels))
        for child in children[index]:
            write_joint(child, depth + 1)
        out.append(f"{indent}}}")

    write_joint(0, 0)
    data = animation.channels.copy()
    data[:, skeleton.rotation_columns] = np.rad2deg(data[:, skeleton.rotation_columns])
    out.append("MOTION")
    out.append(f"Frames: {animation.n_frames}")
    out.append(f"Frame Time: {animation.frame_time:.17g}")
    out.extend(" ".join(f"{value:.17g}" for value in row) for row in data)
    return "\n".join(out) + "\n"


def animation_to_dict(animation: JointSpaceCurve) -> dict:
    return {
        "skeleton": animation.skeleton.to_dict(),
        "frame_rate": animation.frame_rate,
        "angle_unit": "radians",
        "frames": animation.channels.tolist(),
    }


def animation_from_dict(data: dict, path: Optional[str] = None,
                        translation_weight: float = DEFAULT_TRANSLATION_WEIGHT,
                        frame_rate: Optional[float] = None) -> JointSpaceCurve:
    """Native JSON document to an animation; ``frame_rate`` stands in when the document has none"""
    try:
        skeleton = Skeleton.from_dict(data["skeleton"])
        frames = np.array(data["frames"], dtype=float)
        rate = data.get("frame_rate", frame_rate)
        if rate is None:
            raise KeyError("frame_rate")
        frame_rate = float(rate)
        unit = data.get("angle_unit", "radians")
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Invalid animation document: {str(e)}", path) from e
    if unit not in ("radians", "degrees"):
        raise ParseError(f"Unknown angle unit {unit!r}", path)
    if frames.ndim != 2:
        raise ParseError("'frames' must be a list of channel rows", path)
    if unit == "degrees":
        frames[:, skeleton.rotation_columns] = np.deg2rad(frames[:, skeleton.rotation_columns])
    return JointSpaceCurve(skeleton, frame_rate, unroll(frames, skeleton), translation_weight)


def load_animation(path: str, translation_weight: float = DEFAULT_TRANSLATION_WEIGHT,
                   frame_rate: Optional[float] = None) -> JointSpaceCurve:
    """
    Load a .bvh or native .json animation

    Args:
        path: Animation file
        translation_weight: Scale of the root-translation curve coordinates
        frame_rate: Fallback for JSON documents without a frame rate

    Returns:
        Unrolled joint-space curve
    """
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ParseError(f"Cannot read animation: {str(e)}", path) from e
    if os.path.splitext(path)[1].lower() == ".bvh":
        return parse_bvh(text, path, translation_weight)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", path, e.lineno) from e
    return animation_from_dict(data, path, translation_weight, frame_rate)


def save_animation(animation: JointSpaceCurve, path: str) -> None:
    """Write BVH for a .bvh suffix, native JSON otherwise"""
    if os.path.splitext(path)[1].lower() == ".bvh":
        text = format_bvh(animation)
    else:
        text = json.dumps(animation_to_dict(animation), indent=2) + "\n"
    with open(path, "w") as f:
        f.write(text)
    logger.info(f"Wrote animation with {animation.n_frames} frames to {path}")
