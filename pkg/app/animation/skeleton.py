"""
Skeleton hierarchy and forward kinematics.

Joints are stored parents-first. Each joint owns an ordered list of channels;
rotation channels are intrinsic Euler rotations applied in the listed order
(Zrotation Xrotation Yrotation is the rotation Rz @ Rx @ Ry acting on column
vectors). Position channels are accepted on the root only.
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from app.errors import InvalidCurve, UnsupportedChannel

logger = logging.getLogger(__name__)

ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")
POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
AXIS_INDEX = {"X": 0, "Y": 1, "Z": 2}


@dataclass(frozen=True)
class Joint:
    """One bone of the hierarchy; end sites carry no channels"""
    name: str
    parent: int
    offset: Tuple[float, float, float]
    channels: Tuple[str, ...] = ()
    end_site: bool = False

    @property
    def rotation_channels(self) -> Tuple[str, ...]:
        return tuple(channel for channel in self.channels if channel in ROTATION_CHANNELS)

    @property
    def euler_order(self) -> str:
        """Intrinsic scipy sequence, e.g. "ZXY" """
        return "".join(channel[0] for channel in self.rotation_channels)


@dataclass
class Skeleton:
    """
    Tree of joints with exactly one root.

    Args:
        joints: Joints in parents-first order; ``parent`` indexes this list

    Raises:
        InvalidCurve: if the hierarchy is not a tree rooted at joint 0
        UnsupportedChannel: for channels other than Euler rotations and root
            translation
    """
    joints: List[Joint] = field(default_factory=list)

    def __post_init__(self):
        if not self.joints:
            raise InvalidCurve("Skeleton has no joints")
        roots = [index for index, joint in enumerate(self.joints) if joint.parent < 0]
        if roots != [0]:
            raise InvalidCurve(f"Skeleton needs exactly one root at index 0, found {roots}")
        for index, joint in enumerate(self.joints):
            if index > 0 and not 0 <= joint.parent < index:
                raise InvalidCurve(f"Joint {joint.name!r} must follow its parent")
            for channel in joint.channels:
                if channel in POSITION_CHANNELS and index == 0:
                    continue
                if channel not in ROTATION_CHANNELS:
                    raise UnsupportedChannel(f"Channel {channel!r} on joint {joint.name!r} is not supported")
            if len(set(joint.channels)) != len(joint.channels):
                raise UnsupportedChannel(f"Joint {joint.name!r} repeats a channel")

    @property
    def names(self) -> List[str]:
        return [joint.name for joint in self.joints]

    @property
    def parents(self) -> np.ndarray:
        return np.array([joint.parent for joint in self.joints], dtype=int)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([joint.offset for joint in self.joints], dtype=float)

    @property
    def root(self) -> Joint:
        return self.joints[0]

    @cached_property
    def channel_layout(self) -> List[Tuple[int, str]]:
        """(joint index, channel) per motion column, in file order"""
        return [(index, channel) for index, joint in enumerate(self.joints) for channel in joint.channels]

    @cached_property
    def rotation_columns(self) -> np.ndarray:
        return np.array([column for column, (_, channel) in enumerate(self.channel_layout)
                         if channel in ROTATION_CHANNELS], dtype=int)

    @cached_property
    def translation_columns(self) -> np.ndarray:
        return np.array([column for column, (_, channel) in enumerate(self.channel_layout)
                         if channel in POSITION_CHANNELS], dtype=int)

    @property
    def channel_count(self) -> int:
        return len(self.channel_layout)

    @property
    def dof_total(self) -> int:
        """Number of rotational degrees of freedom d"""
        return len(self.rotation_columns)

    @cached_property
    def pose_slices(self) -> List[List[int]]:
        """Indices into a rotation pose vector for each joint"""
        slices, start = [], 0
        for joint in self.joints:
            count = len(joint.rotation_channels)
            slices.append(list(range(start, start + count)))
            start += count
        return slices

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InvalidCurve(f"Skeleton has no joint named {name!r}") from None

    def split_channels(self, frames: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Rotation poses (F, d) and root translations (F, 3) from motion rows (F, C)"""
        frames = np.atleast_2d(np.asarray(frames, dtype=float))
        translation = np.zeros((frames.shape[0], 3))
        for column in self.translation_columns:
            _, channel = self.channel_layout[column]
            translation[:, AXIS_INDEX[channel[0]]] = frames[:, column]
        return frames[:, self.rotation_columns], translation

    def same_topology(self, other: "Skeleton") -> bool:
        return self.parents.tolist() == other.parents.tolist() and self.channel_layout == other.channel_layout

    def to_dict(self) -> Dict[str, object]:
        return {
            "joints": [
                {
                    "name": joint.name,
                    "parent": joint.parent,
                    "offset": list(joint.offset),
                    "channels": list(joint.channels),
                    "end_site": joint.end_site,
                }
                for joint in self.joints
            ]
        }

    @classmethod
    def from_dict(cls, data: Dict[str, object]) -> "Skeleton":
        joints = [
            Joint(
                name=str(item["name"]),
                parent=int(item["parent"]),
                offset=tuple(float(value) for value in item["offset"]),
                channels=tuple(item.get("channels", ())),
                end_site=bool(item.get("end_site", False)),
            )
            for item in data["joints"]
        ]
        return cls(joints)


def forward_kinematics(skeleton: Skeleton, pose: Sequence[float],
                       translation: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    World positions of all joints.

    Args:
        skeleton: Joint hierarchy
        pose: Rotation angles in radians, shape (d,) or (F, d) in channel order
        translation: Root translation, shape (3,) or (F, 3)

    Returns:
        Joint positions, shape (J, 3) or (F, J, 3)
    """
    pose = np.asarray(pose, dtype=float)
    single = pose.ndim == 1
    poses = np.atleast_2d(pose)
    if poses.shape[1] != skeleton.dof_total:
        raise InvalidCurve(f"Pose has {poses.shape[1]} angles, skeleton has {skeleton.dof_total} DOF")
    frames = poses.shape[0]
    if translation is None:
        translation = np.zeros((frames, 3))
    translation = np.broadcast_to(np.atleast_2d(np.asarray(translation, dtype=float)), (frames, 3))

    positions = np.zeros((frames, len(skeleton.joints), 3))
    orientations: List[Rotation] = []
    for index, joint in enumerate(skeleton.joints):
        columns = skeleton.pose_slices[index]
        if columns:
            local = Rotation.from_euler(joint.euler_order, poses[:, columns])
        else:
            local = Rotation.identity(frames)
        offset = np.asarray(joint.offset, dtype=float)
        if joint.parent < 0:
            positions[:, index] = offset + translation
            orientations.append(local)
        else:
            parent = orientations[joint.parent]
            positions[:, index] = positions[:, joint.parent] + parent.apply(offset)
            orientations.append(parent * local)
    return positions[0] if single else positions
