import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from consensus_margins.config import load_config  # noqa: E402
from consensus_margins.margins import compute_margins  # noqa: E402
from consensus_margins.model import transformed_loops  # noqa: E402

EXAMPLES = Path(__file__).resolve().parents[1] / "src" / "consensus_margins" / "examples"

A = np.array([[-2.0, 2.0], [-1.0, 1.0]])
B = np.array([[1.0], [0.0]])
K = np.array([[-2.0, -0.5]])
X0 = np.array([[1.0, -1.0], [2.0, 0.5], [-1.5, 1.0]])


def example(name):
    return load_config(EXAMPLES / f"{name}.yaml")


@pytest.fixture(scope="session")
def three():
    return example("three_agent")


@pytest.fixture(scope="session")
def four():
    return example("four_agent_cycle")


@pytest.fixture(scope="session")
def five():
    return example("five_agent_cycle")


_cache = {}


def analysed(cfg):
    """Loops and margin report of a config, computed once per session."""
    if cfg.name not in _cache:
        loops = transformed_loops(cfg.model, cfg.graph)
        _cache[cfg.name] = (loops, compute_margins(cfg.model, loops, cfg.margin_config))
    return _cache[cfg.name]


@pytest.fixture(scope="session")
def three_report(three):
    return analysed(three)


@pytest.fixture(scope="session")
def five_report(five):
    return analysed(five)
