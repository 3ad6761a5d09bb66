import os
import sys

import pytest

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "src"))

import worldgen  # noqa: E402
from harness import build_run_config  # noqa: E402
from world import parse_world  # noqa: E402

ENVS_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "envs")


@pytest.fixture
def envs_dir() -> str:
    return os.path.abspath(ENVS_DIR)


@pytest.fixture
def corridor_world():
    return parse_world(worldgen.corridor(10), name="corridor")


@pytest.fixture
def room_world():
    return parse_world(worldgen.room(9, 7), name="room")


@pytest.fixture
def quick_config():
    """Run config with small planner budgets and no log file."""
    def make(**sections):
        data = {
            "lcp": {"budget": 200},
            "logging": {"directory": None, "level": "WARNING"},
        }
        for key, value in sections.items():
            data.setdefault(key, {})
            if isinstance(value, dict):
                data[key].update(value)
            else:
                data[key] = value
        return build_run_config(data)
    return make
