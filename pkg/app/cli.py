"""
Command-line interface.

Subcommands: match, geodesic, animate, check and fixtures. Exit status is 0
on success, 1 for input errors (bad files, bad configuration) and 2 for
numerical failures (no geodesic, infeasible constraints, too few knee
crossings). Messages go to standard error.
"""
import logging
import os
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import numpy as np
from pydantic import ValidationError

from app.animation.bvh import JointSpaceCurve, load_animation, save_animation
from app.animation.gait import foot_trajectories, knee_features
from app.animation.interpolation import SCHEMES, Interpolator
from app.config import FeaturePair, FeatureSpec, RunConfig
from app.errors import ConfigError, InputError, NotConnectable, NumericalError
from app.fixtures import write_fixtures
from app.io import load_curve, load_feature_spec, save_trajectories, write_json
from app.orchestration.matcher import Matcher
from app.plotting import plot_correspondence, plot_filmstrip, plot_trajectories
from app.srvt_geometry import distance_closed, distance_open, geodesic_closed, geodesic_open
from app.warps import Warp

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def _fail(ctx: click.Context, code: int, message: str) -> None:
    click.echo(f"Error: {message}", err=True)
    ctx.exit(code)


def _guarded(ctx: click.Context, action: Callable[[], None]) -> None:
    """Run a subcommand body and map package errors onto exit codes"""
    try:
        action()
    except NotConnectable as e:
        _fail(ctx, 2, f"No geodesic exists: {str(e)}. Open curves are connectable only if their SRV "
                      f"functions are never anti-parallel (q0(theta) != -c q1(theta) for all c > 0).")
    except NumericalError as e:
        logger.debug("Numerical failure", exc_info=True)
        _fail(ctx, 2, str(e))
    except InputError as e:
        logger.debug("Input error", exc_info=True)
        _fail(ctx, 1, str(e))
    except ValidationError as e:
        _fail(ctx, 1, f"Invalid input: {str(e)}")


def _config(ctx: click.Context, overrides: Dict[str, Any]) -> RunConfig:
    """Configuration with precedence CLI flags > config file > defaults"""
    base: RunConfig = ctx.obj["config"]
    return base.with_overrides(overrides)


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON or YAML run configuration (defaults to $ELASTIC_MATCH_CONFIG).")
@click.option("--verbose", is_flag=True, help="Log optimizer traces.")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], verbose: bool) -> None:
    """Elastic curve matching with feature points."""
    logging.getLogger().setLevel(logging.DEBUG if verbose else logging.WARNING)
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = RunConfig.from_file(config_path) if config_path else RunConfig.from_env()
    except InputError as e:
        _fail(ctx, 1, str(e))


def _features(config: RunConfig, path: Optional[str], weight: Optional[float],
              symmetric: bool) -> FeatureSpec:
    features = load_feature_spec(path) if path else config.features
    if weight is not None:
        features = features.with_weight(weight)
    if symmetric:
        features = features.model_copy(update={"symmetric": True})
    return features


@cli.command()
@click.argument("curve0", type=click.Path())
@click.argument("curve1", type=click.Path())
@click.option("--features", "features_path", type=click.Path(), default=None, help="FeatureSpec JSON.")
@click.option("--lambda", "weight", type=float, default=None, help="Feature weight.")
@click.option("--method", type=click.Choice(["dp", "grad", "dp+grad"]), default=None)
@click.option("--symmetric", is_flag=True, help="Symmetric dynamic-programming matching.")
@click.option("--grid-size", type=int, default=None, help="DP lattice size M.")
@click.option("--window", type=int, default=None, help="DP slope window W.")
@click.option("--steps", type=int, default=None, help="Geodesic snapshots.")
@click.option("--output", "-o", type=click.Path(), default="match.json", show_default=True)
@click.option("--svg", type=click.Path(), default=None, help="Correspondence figure.")
@click.pass_context
def match(ctx, curve0, curve1, features_path, weight, method, symmetric, grid_size, window, steps, output, svg):
    """Find the optimal reparametrization of CURVE1 onto CURVE0."""

    def action() -> None:
        config = _config(ctx, {
            "match": {"method": method},
            "dp": {"grid_size": grid_size, "window": window},
            "geometry": {"t_steps": steps},
        })
        c0, c1 = load_curve(curve0), load_curve(curve1)
        features = _features(config, features_path, weight, symmetric)
        result = Matcher(config).match(c0, c1, features, method)
        write_json(result.to_dict(), output)
        click.echo(f"✓ total energy {result.total:.10g} "
                   f"(elastic {result.elastic_energy:.10g}, features {result.feature_energy:.10g})")
        if svg:
            plot_correspondence(c0, c1, features, svg, warp=result.warp)

    _guarded(ctx, action)


@cli.command()
@click.argument("curve0", type=click.Path())
@click.argument("curve1", type=click.Path())
@click.option("--steps", type=int, default=None, help="Number of snapshots T.")
@click.option("--output", "-o", type=click.Path(), default="geodesic.json", show_default=True)
@click.option("--svg", type=click.Path(), default=None, help="Filmstrip figure.")
@click.pass_context
def geodesic(ctx, curve0, curve1, steps, output, svg):
    """Geodesic path between two curves (open or closed)."""

    def action() -> None:
        config = _config(ctx, {"geometry": {"t_steps": steps}})
        geometry = config.geometry
        c0, c1 = load_curve(curve0), load_curve(curve1)
        if c0.topology != c1.topology:
            raise InputError(f"Cannot connect a {c0.topology} curve with a {c1.topology} curve")
        if c0.closed:
            path = geodesic_closed(c0, c1, geometry.t_steps, geometry.tol_close, geometry.max_projection_iters,
                                   config.curve.inverse)
        else:
            path = geodesic_open(c0, c1, geometry.t_steps, geometry.tol_anti, config.curve.inverse)
        data = path.to_dict()
        if not c0.closed:
            data["distance"] = distance_open(c0, c1)
        elif geometry.closed_distance_steps == geometry.t_steps:
            data["distance"] = float(np.sqrt(path.energy))
        else:
            data["distance"] = distance_closed(c0, c1, geometry.closed_distance_steps, geometry.tol_close,
                                               geometry.max_projection_iters)
        write_json(data, output)
        click.echo(f"✓ path energy {path.energy:.10g} over {len(path.steps)} snapshots, "
                   f"distance {data['distance']:.10g}")
        if svg:
            plot_filmstrip(path, svg)

    _guarded(ctx, action)


def _parse_feature_times(text: str) -> List[Tuple[float, float]]:
    pairs = []
    for item in text.split(","):
        try:
            t0, t1 = (float(value) for value in item.split(":"))
        except ValueError as e:
            raise ConfigError(f"Feature times must look like '1.0:1.2,2.0:2.3', got {item!r}") from e
        pairs.append((t0, t1))
    return pairs


def _time_features(anim0: JointSpaceCurve, anim1: JointSpaceCurve, pairs: List[Tuple[float, float]],
                   weight: float) -> FeatureSpec:
    for t0, t1 in pairs:
        if not (0.0 <= t0 <= anim0.duration and 0.0 <= t1 <= anim1.duration):
            raise ConfigError(f"Feature times ({t0}, {t1}) lie outside the animations")
    features = [
        FeaturePair(theta0=float(anim0.params_at(t0)), theta1=float(anim1.params_at(t1)))
        for t0, t1 in pairs
    ]
    return FeatureSpec(**{"lambda": weight, "pairs": features})


@cli.command()
@click.argument("anim0", type=click.Path())
@click.argument("anim1", type=click.Path())
@click.option("--scheme", type=click.Choice(list(SCHEMES) + ["all"]), default=None,
              help="Interpolation scheme, or all four.")
@click.option("--s", "blend", type=float, default=None, help="Blend parameter in [0, 1].")
@click.option("--sweep", type=int, default=None, help="Write blends s = 0, 1/k, ..., 1.")
@click.option("--feature-times", type=str, default=None, help="Pairs t0:t1 in seconds, comma separated.")
@click.option("--auto-knee", type=int, default=None, help="Use the first n knee crossings as features.")
@click.option("--forward-axis", type=click.Choice(["x", "y", "z", "-x", "-y", "-z"]), default=None)
@click.option("--lambda", "weight", type=float, default=None, help="Feature weight.")
@click.option("--format", "fmt", type=click.Choice(["json", "bvh"]), default=None,
              help="Output animation format, the input's by default.")
@click.option("--no-retime", is_flag=True, help="Keep the parameter timing of the first animation.")
@click.option("--output-dir", "-o", type=click.Path(file_okay=False), default="animate_out", show_default=True)
@click.pass_context
def animate(ctx, anim0, anim1, scheme, blend, sweep, feature_times, auto_knee, forward_axis, weight, fmt,
            no_retime, output_dir):
    """Interpolate between two animations and write foot trajectories."""

    def action() -> None:
        config = _config(ctx, {"animation": {
            "scheme": None if scheme == "all" else scheme,
            "blend": blend,
            "sweep": sweep,
            "auto_knee": auto_knee,
            "forward_axis": forward_axis,
        }})
        settings = config.animation
        first = load_animation(anim0, settings.translation_weight, settings.frame_rate)
        second = load_animation(anim1, settings.translation_weight, settings.frame_rate)
        lam = weight if weight is not None else config.features.weight

        features: Optional[FeatureSpec] = None
        if feature_times:
            features = _time_features(first, second, _parse_feature_times(feature_times), lam)
        elif settings.auto_knee:
            features = knee_features(first, second, settings.auto_knee, settings, lam)
        elif config.features.pairs:
            features = config.features

        schemes = list(SCHEMES) if scheme == "all" else [settings.scheme]
        blends = [settings.blend] if settings.sweep is None else list(np.linspace(0.0, 1.0, settings.sweep + 1))
        suffix = fmt or ("bvh" if anim0.lower().endswith(".bvh") else "json")
        os.makedirs(output_dir, exist_ok=True)

        trajectories = {"input 0": foot_trajectories(first, settings.left_foot, settings.right_foot)}
        interpolator = Interpolator(config)
        for name in schemes:
            if name == "elastic-features" and features is None:
                raise ConfigError("elastic-features needs --feature-times, --auto-knee or feature pairs in the config")
            prepared = interpolator.prepare(first, second, name, features)
            for s in blends:
                result = prepared.at(float(s), retime=not no_retime)
                stem = os.path.join(output_dir, f"{name}_s{float(s):.3f}")
                save_animation(result, f"{stem}.{suffix}")
                left, right = foot_trajectories(result, settings.left_foot, settings.right_foot)
                save_trajectories(f"{stem}_feet.csv", result.times, left, right)
                trajectories[f"{name} s={float(s):.2f}"] = (left, right)
                click.echo(f"✓ {name} s={float(s):.3f}: {result.n_frames} frames, {result.duration:.4g} s")
        trajectories["input 1"] = foot_trajectories(second, settings.left_foot, settings.right_foot)
        plot_trajectories(trajectories, os.path.join(output_dir, "trajectories.svg"))

    _guarded(ctx, action)


@cli.command()
@click.argument("curve0", type=click.Path())
@click.argument("curve1", type=click.Path())
@click.option("--features", "features_path", type=click.Path(), default=None, help="FeatureSpec JSON.")
@click.option("--lambda", "weight", type=float, default=None, help="Feature weight.")
@click.option("--amplitude", type=float, default=0.3, show_default=True,
              help="Test warp theta - a sin(theta), needs |a| < 1.")
@click.option("--method", type=click.Choice(["dp", "grad", "dp+grad"]), default=None)
@click.option("--output", "-o", type=click.Path(), default="invariance.json", show_default=True)
@click.pass_context
def check(ctx, curve0, curve1, features_path, weight, amplitude, method, output):
    """Reparametrization-invariance check of the matching energy."""

    def action() -> None:
        if not abs(amplitude) < 1.0:
            raise ConfigError("The test warp needs |amplitude| < 1")
        config = ctx.obj["config"]
        c0, c1 = load_curve(curve0), load_curve(curve1)
        features = _features(config, features_path, weight, False)
        psi_test = Warp.from_function(lambda theta: theta - amplitude * np.sin(theta), c0.n, c0.topology,
                                      derivative=lambda theta: 1.0 - amplitude * np.cos(theta))
        report = Matcher(config).invariance_check(c0, c1, features, psi_test, method)
        write_json(report, output)
        click.echo(f"✓ max discrepancy {report['max_discrepancy']:.3g}")

    _guarded(ctx, action)


@cli.command()
@click.argument("directory", type=click.Path(file_okay=False))
@click.option("--n", "samples", type=int, default=256, show_default=True, help="Curve samples.")
@click.pass_context
def fixtures(ctx, directory, samples):
    """Write the demo curves, feature files and walking animations."""

    def action() -> None:
        written = write_fixtures(directory, samples)
        for name in sorted(written):
            click.echo(f"✓ {written[name]}")

    _guarded(ctx, action)


def main() -> None:
    cli(obj={})


if __name__ == "__main__":
    main()
