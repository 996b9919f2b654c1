import json
from pathlib import Path

import pytest

from mfgpen.io import load_config
from mfgpen.model.catalog import ConstantFunction, SaturatingCoupling
from mfgpen.model.coefficients import CoefficientSet, InitialLaw
from mfgpen.model.grid import TimeGrid
from mfgpen.solvers.field import PenaltyLadder, run_ladder

FULL_LADDER = (1.0, 10.0, 100.0, 1e3, 1e4, 1e5, 1e6)
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def grid():
    return TimeGrid.build(1.0, intervals=200, tail_nodes=40)


@pytest.fixture(scope="session")
def unit():
    """A = 0, B = Q = R = 1 with zero couplings; every quantity has a closed form."""
    return CoefficientSet.constant()


@pytest.fixture(scope="session")
def tanh_set():
    h = SaturatingCoupling(ConstantFunction(-0.2), 1.0)
    return CoefficientSet.constant(h=h, eps0=0.75)


@pytest.fixture(scope="session")
def mixed_set():
    """Every coupling family at once, with time-varying R."""
    return load_config(CONFIGS / "mixed.json").coefficients


@pytest.fixture(scope="session")
def uniform_law():
    return InitialLaw.uniform(0.0, 1.0, count=16, seed=0)


@pytest.fixture(scope="session")
def unit_ladder(unit, uniform_law, grid):
    return run_ladder(unit, PenaltyLadder(FULL_LADDER), uniform_law.mean, grid)


@pytest.fixture
def write_config(tmp_path):
    """Write a small-grid configuration and return its path."""

    def write(name="config.json", **overrides):
        doc = {
            "horizon": 1.0,
            "constants": {"K": 1.0, "delta": 1.0, "eps0": 1.0},
            "coefficients": {"A": 0.0, "B": 1.0, "Q": 1.0, "R": 1.0},
            "grid": {"intervals": 200, "tail_nodes": 40},
            "ladder": list(FULL_LADDER),
            "law": {"family": "uniform", "low": 0.0, "high": 1.0, "count": 16, "seed": 0},
            "output": str(tmp_path / "out"),
        }
        doc.update(overrides)
        path = tmp_path / name
        path.write_text(json.dumps(doc), encoding="utf-8")
        return path

    return write
