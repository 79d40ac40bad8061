from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from typing import Any, Callable, Dict, List, Literal, Optional
from dotenv import load_dotenv
import json
import logging
import math
import os

import yaml

from app.errors import ConfigError, ParseError

logger = logging.getLogger(__name__)

load_dotenv()

TWO_PI = 2.0 * math.pi

CONFIG_ENV_VAR = "ELASTIC_MATCH_CONFIG"

MatchMethod = Literal["dp", "grad", "dp+grad"]
InterpolationScheme = Literal["linear-euler", "elastic-noreparam", "elastic-reparam", "elastic-features"]
FeatureKind = Literal["quadratic", "huber", "position", "hard", "callback"]


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class FeaturePair(StrictModel):
    """
    One index-paired feature (theta0 on the first curve, theta1 on the second).

    Parameter-space kinds (quadratic, huber) penalize phi(theta0) - theta1.
    Position-space kinds (position, hard, callback) compare
    c0(phi(theta0)) with c1(theta1).
    """
    theta0: float = Field(ge=0.0, le=TWO_PI)
    theta1: float = Field(ge=0.0, le=TWO_PI)
    kind: FeatureKind = "quadratic"
    bound: Optional[float] = Field(default=None, ge=0.0)
    scale: float = Field(default=1.0, gt=0.0)
    callback: Optional[Callable[..., Any]] = Field(default=None, exclude=True)
    derivative: Optional[Callable[..., Any]] = Field(default=None, exclude=True)

    @model_validator(mode="after")
    def _check_kind(self) -> "FeaturePair":
        if self.kind == "hard" and self.bound is None:
            raise ValueError("hard feature pairs need a bound")
        if self.kind == "callback" and self.callback is None:
            raise ValueError("callback feature pairs need a callable")
        return self

    @property
    def parametric(self) -> bool:
        return self.kind in ("quadratic", "huber")

    @property
    def differentiable(self) -> bool:
        if self.kind == "hard":
            return False
        if self.kind == "callback":
            return self.derivative is not None
        return True

    def mirrored(self) -> "FeaturePair":
        return self.model_copy(update={"theta0": self.theta1, "theta1": self.theta0})


class FeatureSpec(StrictModel):
    """Feature pairs plus their weight and the symmetrization switch"""
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    symmetric: bool = False
    pairs: List[FeaturePair] = Field(default_factory=list)

    @property
    def weight(self) -> float:
        return self.lambda_

    @property
    def differentiable(self) -> bool:
        return all(pair.differentiable for pair in self.pairs)

    def mirrored(self) -> "FeatureSpec":
        """Swap the roles of the two curves"""
        return self.model_copy(update={"pairs": [pair.mirrored() for pair in self.pairs]})

    def with_weight(self, weight: float) -> "FeatureSpec":
        return self.model_copy(update={"lambda_": float(weight)})

    @classmethod
    def empty(cls, weight: float = 0.0) -> "FeatureSpec":
        return cls(**{"lambda": weight})


class GradientOptions(StrictModel):
    max_iters: int = Field(default=2000, ge=0)
    tol_grad: float = Field(default=1e-6, gt=0.0)
    armijo_c: float = Field(default=1e-4, gt=0.0, lt=1.0)
    init: Literal["identity", "dp"] = "identity"
    initial_step: float = Field(default=1.0, gt=0.0)
    max_halvings: int = Field(default=40, ge=1)


class CurveSettings(StrictModel):
    interpolation: Literal["linear", "cubic"] = "linear"
    inverse: Literal["stencil", "trapezoid"] = "stencil"


class GeometrySettings(StrictModel):
    t_steps: int = Field(default=16, ge=2)
    closed_distance_steps: int = Field(default=16, ge=2)
    tol_anti: float = Field(default=1e-6, gt=0.0)
    tol_close: float = Field(default=1e-8, gt=0.0)
    max_projection_iters: int = Field(default=50, ge=1)


class DpSettings(StrictModel):
    grid_size: int = Field(default=128, ge=2)
    window: int = Field(default=6, ge=1)
    subsamples: Optional[int] = Field(default=None, ge=1)


class MatchSettings(StrictModel):
    method: MatchMethod = "dp+grad"


class AnimationSettings(StrictModel):
    scheme: InterpolationScheme = "elastic-features"
    blend: float = Field(default=0.5, ge=0.0, le=1.0)
    sweep: Optional[int] = Field(default=None, ge=1)
    auto_knee: Optional[int] = Field(default=None, ge=1)
    forward_axis: Optional[Literal["x", "y", "z", "-x", "-y", "-z"]] = None
    left_knee: str = "LeftLeg"
    right_knee: str = "RightLeg"
    left_foot: str = "LeftFoot"
    right_foot: str = "RightFoot"
    translation_weight: float = Field(default=0.1, gt=0.0)
    frame_rate: float = Field(default=30.0, gt=0.0)


class RunConfig(StrictModel):
    """
    Complete run configuration.

    Precedence is CLI flags > config file > defaults; unknown keys are
    rejected at every nesting level.
    """
    curve: CurveSettings = Field(default_factory=CurveSettings)
    geometry: GeometrySettings = Field(default_factory=GeometrySettings)
    dp: DpSettings = Field(default_factory=DpSettings)
    gradient: GradientOptions = Field(default_factory=GradientOptions)
    match: MatchSettings = Field(default_factory=MatchSettings)
    features: FeatureSpec = Field(default_factory=FeatureSpec)
    animation: AnimationSettings = Field(default_factory=AnimationSettings)

    @classmethod
    def from_file(cls, path: str) -> "RunConfig":
        """
        Load a configuration file.

        Args:
            path: JSON file, or YAML when the suffix is .yaml/.yml

        Returns:
            Validated configuration
        """
        try:
            with open(path) as f:
                if path.endswith((".yaml", ".yml")):
                    data = yaml.safe_load(f) or {}
                else:
                    data = json.load(f)
        except OSError as e:
            raise ConfigError(f"Failed to read config {path}: {str(e)}") from e
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ParseError(f"Failed to parse config: {str(e)}", path=path) from e
        return cls.validate_mapping(data, source=path)

    @classmethod
    def from_env(cls) -> "RunConfig":
        config_path = os.getenv(CONFIG_ENV_VAR)
        if not config_path:
            return cls()
        logger.info(f"Loading configuration from {config_path}")
        return cls.from_file(config_path)

    @classmethod
    def validate_mapping(cls, data: Any, source: str = "<mapping>") -> "RunConfig":
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"Invalid configuration in {source}: {str(e)}") from e

    def with_overrides(self, overrides: Dict[str, Any]) -> "RunConfig":
        """Deep-merge overrides (None values are skipped) and re-validate"""
        merged = _deep_merge(self.model_dump(by_alias=True), overrides)
        config = self.validate_mapping(merged, source="command line")
        # callbacks are not serializable and survive only through the original object
        if not overrides.get("features", {}).get("pairs"):
            features = config.features.model_copy(update={"pairs": self.features.pairs})
            config = config.model_copy(update={"features": features})
        return config


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
