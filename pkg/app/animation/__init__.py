from app.animation.bvh import JointSpaceCurve, load_animation, parse_bvh, save_animation
from app.animation.gait import detect_knee_crossings, foot_trajectories, knee_features
from app.animation.interpolation import SCHEMES, Interpolator, interpolate, sweep
from app.animation.skeleton import Joint, Skeleton, forward_kinematics

__all__ = [
    "SCHEMES",
    "Interpolator",
    "Joint",
    "JointSpaceCurve",
    "Skeleton",
    "detect_knee_crossings",
    "foot_trajectories",
    "forward_kinematics",
    "interpolate",
    "knee_features",
    "load_animation",
    "parse_bvh",
    "save_animation",
    "sweep",
]
