"""SVG figures for matches, geodesics and foot trajectories"""
import logging
from typing import Dict, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")  # Use non-interactive backend
import matplotlib.pyplot as plt
import numpy as np

from app.config import FeatureSpec
from app.curve_core import DiscreteCurve
from app.srvt_geometry import GeodesicPath

logger = logging.getLogger(__name__)

plt.rcParams["svg.hashsalt"] = "elastic-feature-matching"
MARKERS = ("o", "s", "^", "D", "v", "P", "X", "*")


def _planar(samples: np.ndarray, params: np.ndarray) -> np.ndarray:
    """First two coordinates; scalar curves are drawn as graphs over the parameter"""
    if samples.shape[1] >= 2:
        return samples[:, :2]
    return np.column_stack([params, samples[:, 0]])


def _closed_loop(curve: DiscreteCurve) -> np.ndarray:
    points = _planar(curve.samples, curve.params)
    return np.vstack([points, points[:1]]) if curve.closed else points


def _save(figure, path: str) -> None:
    figure.savefig(path, format="svg", metadata={"Date": None})
    plt.close(figure)
    logger.info(f"Wrote figure {path}")


def plot_correspondence(c0: DiscreteCurve, c1: DiscreteCurve, features: Optional[FeatureSpec], path: str,
                        warp=None) -> None:
    """
    Both curves side by side with matching markers on the feature pairs.

    With a warp, grey chords join c0(theta) to c1(phi(theta)) at a few
    parameters to show the correspondence.
    """
    figure, ax = plt.subplots(figsize=(8, 4))
    first = _closed_loop(c0)
    second = _closed_loop(c1)
    gap = 0.3 * max(np.ptp(first[:, 0]), np.ptp(second[:, 0]), 1e-9)
    shift = np.array([first[:, 0].max() - second[:, 0].min() + gap, 0.0])
    ax.plot(first[:, 0], first[:, 1], color="tab:blue", lw=1.5)
    ax.plot(second[:, 0] + shift[0], second[:, 1], color="tab:orange", lw=1.5)

    if warp is not None:
        theta = np.linspace(0.0, c0.params[-1], 12)
        start = _planar(c0.evaluate(theta), theta)
        end = _planar(c1.evaluate(warp(theta)), warp(theta)) + shift
        for a, b in zip(start, end):
            ax.plot([a[0], b[0]], [a[1], b[1]], color="0.8", lw=0.5)

    if features is not None:
        for index, pair in enumerate(features.pairs):
            marker = MARKERS[index % len(MARKERS)]
            theta0, theta1 = np.array([pair.theta0]), np.array([pair.theta1])
            a = _planar(c0.evaluate(theta0), theta0)[0]
            b = _planar(c1.evaluate(theta1), theta1)[0] + shift
            ax.plot(*a, marker=marker, color="k", ms=7)
            ax.plot(*b, marker=marker, color="k", ms=7)
    ax.set_aspect("equal")
    ax.axis("off")
    _save(figure, path)


def plot_filmstrip(geodesic: GeodesicPath, path: str, columns: int = 8) -> None:
    """Evenly chosen snapshots of a geodesic placed left to right"""
    count = min(columns, len(geodesic.steps))
    indices = np.unique(np.linspace(0, len(geodesic.steps) - 1, count).round().astype(int))
    figure, ax = plt.subplots(figsize=(2.0 * len(indices), 2.5))
    offset = 0.0
    for index in indices:
        points = _closed_loop(geodesic.steps[index])
        points = points - points.min(axis=0)
        colors = plt.cm.viridis(np.linspace(0.0, 1.0, len(points)))
        ax.scatter(points[:, 0] + offset, points[:, 1], c=colors, s=2)
        ax.plot(points[:, 0] + offset, points[:, 1], color="0.3", lw=0.8)
        ax.text(offset, -0.1 * max(np.ptp(points[:, 1]), 1e-9), f"t={geodesic.times[index]:.2f}", fontsize=7)
        offset += 1.2 * max(np.ptp(points[:, 0]), np.ptp(points[:, 1]), 1e-9)
    ax.set_aspect("equal")
    ax.axis("off")
    _save(figure, path)


def plot_trajectories(trajectories: Dict[str, Tuple[np.ndarray, np.ndarray]], path: str,
                      forward: int = 2, up: int = 1, labels: Optional[Sequence[str]] = None) -> None:
    """
    Foot trajectories projected on the forward/up plane, one row per animation

    Args:
        trajectories: name -> (left foot (F, 3), right foot (F, 3))
        path: SVG output
        forward: Coordinate index of the walking direction
        up: Coordinate index of the vertical axis
        labels: Row titles, the dictionary keys by default
    """
    names = list(trajectories)
    labels = list(labels) if labels is not None else names
    figure, axes = plt.subplots(len(names), 1, figsize=(8, 1.6 * len(names)), squeeze=False)
    for ax, name, label in zip(axes[:, 0], names, labels):
        left, right = trajectories[name]
        ax.plot(left[:, forward], left[:, up], color="tab:blue", lw=1.0, label="left")
        ax.plot(right[:, forward], right[:, up], color="tab:red", lw=1.0, label="right")
        ax.set_title(label, fontsize=8, loc="left")
        ax.tick_params(labelsize=6)
    axes[0, 0].legend(fontsize=6, loc="upper right")
    figure.tight_layout()
    _save(figure, path)
