"""
Interpolation between two animations.

Four schemes are available:

- ``linear-euler``: blend the Euler angles frame by frame after resampling
  both animations to the same number of uniformly timed frames
- ``elastic-noreparam``: point at time s on the SRV geodesic without a warp
- ``elastic-reparam``: match the curves with lambda = 0, then take the
  geodesic point
- ``elastic-features``: match with feature pairs (usually knee crossings),
  then take the geodesic point

The elastic schemes also blend the timing. The output frame at physical time
tau shows the geodesic point at theta with
tau = (1 - s) * t0(theta) + s * t1(phi(theta)), so matched events land on
blended times and the output lasts (1 - s) * D0 + s * D1.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from app.animation.bvh import JointSpaceCurve
from app.config import FeatureSpec, InterpolationScheme, RunConfig
from app.curve_core import DiscreteCurve, SrvCurve, interpolant, resample, srvt, srvt_inverse, uniform_grid
from app.errors import ConfigError, InvalidCurve
from app.orchestration.matcher import Matcher
from app.srvt_geometry import check_connectable, star_action
from app.warps import Warp

logger = logging.getLogger(__name__)

SCHEMES: Tuple[str, ...] = ("linear-euler", "elastic-noreparam", "elastic-reparam", "elastic-features")


def invert_timing(blended: np.ndarray, params: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """
    Parameters at which the non-decreasing timing ``blended`` reaches ``targets``.

    Flat runs, which a warp with flat segments produces at s = 1, resolve to
    the first parameter of the run.
    """
    blended = np.maximum.accumulate(np.asarray(blended, dtype=float))
    keep = np.concatenate([[True], np.diff(blended) > 0.0])
    return np.interp(targets, blended[keep], np.asarray(params, dtype=float)[keep])


@dataclass
class Blend:
    """Everything needed to evaluate one interpolation scheme at any s"""
    scheme: str
    anim0: JointSpaceCurve
    anim1: JointSpaceCurve
    samples0: np.ndarray
    samples1: np.ndarray
    warp: Warp
    q0: Optional[SrvCurve] = None
    q1: Optional[SrvCurve] = None
    inverse_method: str = "stencil"
    interpolation: str = "linear"

    @property
    def n(self) -> int:
        return self.samples0.shape[0]

    def duration(self, s: float) -> float:
        return (1.0 - s) * self.anim0.duration + s * self.anim1.duration

    def _frames(self, s: float) -> np.ndarray:
        if self.scheme == "linear-euler":
            return (1.0 - s) * self.samples0 + s * self.samples1
        values = (1.0 - s) * self.q0.values + s * self.q1.values
        shape = srvt_inverse(self.q0.with_values(values), self.inverse_method).samples
        return shape + (1.0 - s) * self.samples0[0] + s * self.samples1[0]

    def _retimed(self, frames: np.ndarray, s: float) -> np.ndarray:
        params = uniform_grid(self.n, "open")
        blended = (1.0 - s) * self.anim0.times_at(params) + s * self.anim1.times_at(self.warp.at(params))
        targets = np.linspace(0.0, blended[-1], self.n)
        theta = invert_timing(blended, params, targets)
        return interpolant(params, frames, "open", self.interpolation)(theta)

    def at(self, s: float, retime: bool = True) -> JointSpaceCurve:
        """
        Interpolated animation at blend parameter s

        Args:
            s: Blend parameter in [0, 1]
            retime: Blend the timing for the elastic schemes

        Returns:
            Animation on anim0's skeleton
        """
        if not 0.0 <= s <= 1.0:
            raise ConfigError(f"Blend parameter must lie in [0, 1], got {s}")
        frames = self._frames(s)
        if retime and self.scheme != "linear-euler":
            frames = self._retimed(frames, s)
        duration = self.duration(s)
        curve = DiscreteCurve(frames, topology="open", allow_degenerate=True)
        frame_rate = (self.n - 1) / duration if duration > 0.0 else self.anim0.frame_rate
        return self.anim0.with_curve(curve, frame_rate)


class Interpolator:
    """
    Builds blends between animations.
    Matching runs once per pair; the blend can then be sampled at any s.
    """

    def __init__(self, config: Optional[RunConfig] = None):
        self.config = config or RunConfig()
        self.matcher = Matcher(self.config)

    def prepare(self, anim0: JointSpaceCurve, anim1: JointSpaceCurve, scheme: InterpolationScheme,
                features: Optional[FeatureSpec] = None) -> Blend:
        """
        Resample both animations to a common frame count and match them as the scheme requires

        Raises:
            InvalidCurve: if the skeletons differ in topology or channels
            ConfigError: for an unknown scheme or elastic-features without pairs
        """
        if scheme not in SCHEMES:
            raise ConfigError(f"Unknown interpolation scheme {scheme!r}; available: {list(SCHEMES)}")
        if not anim0.skeleton.same_topology(anim1.skeleton):
            raise InvalidCurve("Animations must share the skeleton topology and channel layout")
        n = max(anim0.n_frames, anim1.n_frames)
        kind = self.config.curve.interpolation
        c0 = resample(anim0.curve, n, kind)
        c1 = resample(anim1.curve, n, kind)
        settings = dict(inverse_method=self.config.curve.inverse, interpolation=kind)
        identity = Warp.identity(c0.params)
        if scheme == "linear-euler":
            return Blend(scheme, anim0, anim1, c0.samples, c1.samples, identity, **settings)

        q0, q1 = srvt(c0), srvt(c1)
        warp = identity
        if scheme != "elastic-noreparam":
            if scheme == "elastic-reparam":
                features = FeatureSpec.empty()
            else:
                features = features if features is not None else self.config.features
                if not features.pairs:
                    raise ConfigError("elastic-features needs feature pairs (give times or --auto-knee)")
            result = self.matcher.match_open(c0, c1, features)
            warp = result.warp
            logger.info(f"{scheme}: matched with total energy {result.total:.6g}")
        moved = q1 if warp is identity else star_action(q1, warp)
        check_connectable(q0, moved, self.config.geometry.tol_anti)
        return Blend(scheme, anim0, anim1, c0.samples, c1.samples, warp, q0, moved, **settings)


def interpolate(anim0: JointSpaceCurve, anim1: JointSpaceCurve, features: Optional[FeatureSpec],
                scheme: InterpolationScheme, s: float, config: Optional[RunConfig] = None,
                retime: bool = True) -> JointSpaceCurve:
    """Interpolated animation at blend parameter s"""
    return Interpolator(config).prepare(anim0, anim1, scheme, features).at(s, retime)


def sweep(anim0: JointSpaceCurve, anim1: JointSpaceCurve, features: Optional[FeatureSpec],
          scheme: InterpolationScheme, steps: int, config: Optional[RunConfig] = None,
          retime: bool = True) -> List[Tuple[float, JointSpaceCurve]]:
    """Blends at s = 0, 1/steps, ..., 1 from a single matching run"""
    if steps < 1:
        raise ConfigError("A sweep needs at least one step")
    blend = Interpolator(config).prepare(anim0, anim1, scheme, features)
    return [(float(s), blend.at(float(s), retime)) for s in np.linspace(0.0, 1.0, steps + 1)]
