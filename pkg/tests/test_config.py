import json

import pytest

from app.config import CONFIG_ENV_VAR, FeatureSpec, RunConfig
from app.errors import ConfigError, ParseError


def test_defaults():
    config = RunConfig()
    assert config.dp.grid_size == 128
    assert config.dp.window == 6
    assert config.match.method == "dp+grad"
    assert config.gradient.max_halvings == 40
    assert config.animation.forward_axis is None
    assert config.features.weight == 1.0


def test_from_json_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"dp": {"grid_size": 32}, "features": {"lambda": 5.0}}))
    config = RunConfig.from_file(str(path))
    assert config.dp.grid_size == 32
    assert config.dp.window == 6
    assert config.features.weight == 5.0


def test_from_yaml_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text("match:\n  method: dp\nanimation:\n  forward_axis: z\n")
    config = RunConfig.from_file(str(path))
    assert config.match.method == "dp"
    assert config.animation.forward_axis == "z"


def test_unknown_keys_are_rejected(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"dp": {"grid": 32}}))
    with pytest.raises(ConfigError):
        RunConfig.from_file(str(path))


def test_malformed_and_missing_files(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{not json")
    with pytest.raises(ParseError):
        RunConfig.from_file(str(path))
    with pytest.raises(ConfigError):
        RunConfig.from_file(str(tmp_path / "missing.json"))


def test_from_env(tmp_path, monkeypatch):
    assert RunConfig.from_env() == RunConfig()
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"geometry": {"t_steps": 40}}))
    monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
    assert RunConfig.from_env().geometry.t_steps == 40


def test_overrides_skip_none_and_revalidate():
    base = RunConfig.validate_mapping({"dp": {"grid_size": 64, "window": 4}})
    config = base.with_overrides({"dp": {"grid_size": 16, "window": None}})
    assert config.dp.grid_size == 16
    assert config.dp.window == 4
    with pytest.raises(ConfigError):
        base.with_overrides({"dp": {"grid_size": 1}})


def test_feature_spec_alias_and_weight():
    features = FeatureSpec.model_validate({"lambda": 2.0, "pairs": [{"theta0": 1.0, "theta1": 1.5}]})
    assert features.weight == 2.0
    assert features.with_weight(0.5).weight == 0.5
    assert features.model_dump(by_alias=True)["lambda"] == 2.0
    assert FeatureSpec.empty().pairs == []
