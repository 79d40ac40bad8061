import numpy as np
import pytest

from app.curve_core import DiscreteCurve, uniform_grid
from app.fixtures import SPREAD_FINGER_ANGLES, SPREAD_FINGER_LENGTHS, hand_outline, wave_curve


def sampled(func, n, topology="open"):
    """Curve whose samples are func evaluated on the uniform grid"""
    theta = uniform_grid(n, topology)
    return DiscreteCurve(func(theta), topology=topology)


def smooth_open(theta, coefficients):
    """Graph-like planar curve; x is increasing so the curve is regular"""
    y = sum(a * np.sin((j + 1) * theta / 2.0) for j, a in enumerate(coefficients))
    return np.column_stack([theta, y])


@pytest.fixture(autouse=True)
def _no_config_env(monkeypatch):
    monkeypatch.delenv("ELASTIC_MATCH_CONFIG", raising=False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def line():
    return sampled(lambda t: np.column_stack([t, 0.5 * t]), 512)


@pytest.fixture
def circle():
    return sampled(lambda t: np.column_stack([np.cos(t), np.sin(t)]), 512, "closed")


@pytest.fixture
def sinusoid():
    return sampled(lambda t: np.column_stack([t, 0.5 * np.sin(t)]), 512)


@pytest.fixture
def bump():
    return sampled(lambda t: np.column_stack([t, 0.3 * np.cos(t) + 0.2 * np.sin(2.0 * t)]), 512)


@pytest.fixture
def waves():
    return wave_curve(6, 241), wave_curve(4, 241)


@pytest.fixture
def hands():
    return hand_outline(128), hand_outline(128, SPREAD_FINGER_ANGLES, SPREAD_FINGER_LENGTHS)
