import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))
os.environ.setdefault("MMW_PROGRESS", "0")

from core.env import Env, EnvConfig  # noqa: E402
from core.links import ScriptedLinkModel  # noqa: E402
from core.scenario import build_scenario  # noqa: E402

ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow trend tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long trend-reproduction runs")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def toy_peaks(slots=10):
    """BS 1 fades to 1 dB on slots 4-7 and comes back strong; BS 2 is steady at 15 dB."""
    peak = np.empty((slots, 2))
    peak[:, 1] = 15.0
    for slot in range(1, slots + 1):
        peak[slot - 1, 0] = 20.0 if slot <= 3 else (1.0 if slot <= 7 else 25.0)
    return peak


@pytest.fixture
def toy_env():
    return Env(ScriptedLinkModel(toy_peaks()), EnvConfig())


@pytest.fixture
def small_config():
    """Descriptor with two explicit buildings and three BSs over a 20-slot walk."""
    return {
        "name": "test-street",
        "seed": 11,
        "world": {"bounds": [0.0, 0.0, 120.0, 60.0]},
        "street": {"y_center": 30.0, "width": 12.0},
        "buildings": {
            "boxes": [
                {"lo": [10.0, 0.0, 0.0], "hi": [50.0, 24.0, 20.0]},
                {"lo": [60.0, 36.0, 0.0], "hi": [110.0, 60.0, 15.0]},
            ]
        },
        "obstacles": {"density": 0.01},
        "base_stations": {"count": 3, "height": 6.0},
        "trajectory": {"polyline": [[5.0, 28.0], [115.0, 28.0]], "speed": 1.0, "slots": 20},
        "radio": {"codebook": {"azimuth_range": [-60.0, 60.0], "elevation_range": [-40.0, 0.0], "resolution": 10.0}},
    }


@pytest.fixture
def small_scenario(small_config):
    return build_scenario(small_config)
