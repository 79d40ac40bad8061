"""
Reading and writing curves, feature specs and results.

Curves are JSON documents ``{"topology", "dim", "params", "samples"}`` or CSV
tables whose first column is the parameter. Tables are written with 17
significant digits so repeated runs produce identical files.
"""
import json
import logging
import math
import os
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import ValidationError

from app.config import FeatureSpec
from app.curve_core import TWO_PI, GRID_TOL, DiscreteCurve, Topology
from app.errors import ParseError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


def _read_json(path: str) -> Any:
    try:
        with open(path) as f:
            return json.load(f)
    except OSError as e:
        raise ParseError(f"Cannot read file: {str(e)}", path) from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON: {e.msg}", path, e.lineno) from e


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars and arrays inside nested containers to plain Python; non-finite floats become None"""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(data: Dict[str, Any], path: str) -> None:
    """Write a JSON document, creating the parent directory"""
    data = to_jsonable(data)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, allow_nan=False)
        f.write("\n")
    logger.debug(f"Wrote {path}")


def curve_to_dict(curve: DiscreteCurve) -> Dict[str, Any]:
    return {
        "topology": curve.topology,
        "dim": curve.dim,
        "params": curve.params.tolist(),
        "samples": curve.samples.tolist(),
    }


def curve_from_dict(data: Dict[str, Any], path: Optional[str] = None, allow_degenerate: bool = False) -> DiscreteCurve:
    try:
        topology = data.get("topology", "open")
        samples = np.array(data["samples"], dtype=float)
        params = data.get("params")
    except (AttributeError, KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Invalid curve document: {str(e)}", path) from e
    if topology not in ("open", "closed"):
        raise ParseError(f"Unknown topology {topology!r}", path)
    if samples.ndim != 2:
        raise ParseError("'samples' must be a list of points", path)
    if "dim" in data and int(data["dim"]) != samples.shape[1]:
        raise ParseError(f"'dim' is {data['dim']} but points have {samples.shape[1]} coordinates", path)
    return DiscreteCurve(samples, params, topology, allow_degenerate=allow_degenerate)


def _infer_topology(params: np.ndarray) -> Topology:
    return "open" if abs(params[-1] - TWO_PI) <= GRID_TOL * TWO_PI else "closed"


def load_curve(path: str, allow_degenerate: bool = False) -> DiscreteCurve:
    """
    Load a curve from JSON or CSV (by suffix)

    Args:
        path: Curve file
        allow_degenerate: Accept zero-speed samples

    Returns:
        The curve

    Raises:
        ParseError: if the file cannot be read or is malformed
        InvalidCurve: if the grid is not uniform on [0, 2*pi]
    """
    if os.path.splitext(path)[1].lower() == ".csv":
        try:
            table = pd.read_csv(path, float_precision="round_trip")
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise ParseError(f"Cannot read curve table: {str(e)}", path) from e
        if table.shape[1] < 2:
            raise ParseError("A curve table needs a parameter column and at least one coordinate", path)
        try:
            values = table.to_numpy(dtype=float)
        except ValueError as e:
            raise ParseError(f"Non-numeric values in curve table: {str(e)}", path) from e
        params = values[:, 0]
        return DiscreteCurve(values[:, 1:], params, _infer_topology(params), allow_degenerate=allow_degenerate)
    return curve_from_dict(_read_json(path), path, allow_degenerate)


def save_curve(curve: DiscreteCurve, path: str) -> None:
    """Write a curve as CSV or JSON (by suffix)"""
    if os.path.splitext(path)[1].lower() == ".csv":
        columns = {"theta": curve.params}
        columns.update({f"x{axis}": curve.samples[:, axis] for axis in range(curve.dim)})
        pd.DataFrame(columns).to_csv(path, index=False, float_format=FLOAT_FORMAT)
    else:
        write_json(curve_to_dict(curve), path)


def load_feature_spec(path: str) -> FeatureSpec:
    try:
        return FeatureSpec.model_validate(_read_json(path))
    except ValidationError as e:
        raise ParseError(f"Invalid feature specification: {str(e)}", path) from e


def save_feature_spec(spec: FeatureSpec, path: str) -> None:
    write_json(spec.model_dump(by_alias=True, exclude_none=True), path)


def save_trajectories(path: str, times: Sequence[float], left: np.ndarray, right: np.ndarray) -> None:
    """Foot trajectories as a table with columns t, left_x .. right_z"""
    table = pd.DataFrame({"t": np.asarray(times, dtype=float)})
    for side, trajectory in (("left", left), ("right", right)):
        for axis, name in enumerate("xyz"):
            table[f"{side}_{name}"] = np.asarray(trajectory)[:, axis]
    table.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.debug(f"Wrote {len(table)} trajectory rows to {path}")


def load_trajectories(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, float_precision="round_trip")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise ParseError(f"Cannot read trajectory table: {str(e)}", path) from e
