import numpy as np
import pytest

from mfgpen.errors import ConfigError
from mfgpen.model.grid import TimeGrid


def test_build_places_mandatory_nodes(grid):
    nodes = grid.nodes
    assert nodes[0] == 0.0 and nodes[-1] == 1.0
    assert np.all(np.diff(nodes) > 0)
    for t in (0.25, 0.5, 0.75, 1.0 - 1e-3):
        assert grid.node_index(t) is not None
    assert grid.eps_T == pytest.approx(1e-3)
    assert grid.cutoff == pytest.approx(1.0 - 1e-3)


def test_tail_is_graded_towards_t():
    g = TimeGrid.build(2.0, intervals=10, tail_nodes=20)
    tail = g.nodes[(g.nodes > 2.0 - 0.02) & (g.nodes < g.T)]
    gaps = g.T - tail
    assert gaps.min() == pytest.approx(2e-8, rel=1e-6)
    assert g.steps.min() < 1e-7


def test_extra_times_become_nodes():
    g = TimeGrid.build(1.0, intervals=7, tail_nodes=0, extra_times=[0.123])
    assert g.node_index(0.123) is not None


def test_evaluation_mask_stops_at_cutoff(grid):
    mask = grid.evaluation_mask()
    assert grid.nodes[mask].max() == pytest.approx(grid.cutoff)
    assert not mask[-1]


@pytest.mark.parametrize("nodes, eps_T", [
    ([0.0, 0.5, 0.4, 1.0], 0.01),
    ([0.0], 0.01),
    ([0.0, 0.5, 1.0], 0.2),
    ([0.0, 0.5, 1.0], 0.0),
])
def test_invalid_grids_are_rejected(nodes, eps_T):
    with pytest.raises(ConfigError):
        TimeGrid(nodes, eps_T)


def test_restrict_starts_at_the_requested_time(grid):
    sub = grid.restrict(0.5)
    assert sub.start == 0.5 and sub.T == grid.T
    off_node = grid.restrict(0.5012345)
    assert off_node.start == 0.5012345
    assert np.all(np.diff(off_node.nodes) > 0)
    with pytest.raises(ConfigError):
        grid.restrict(1.0)


def test_same_as(grid):
    assert grid.same_as(TimeGrid.build(1.0, intervals=200, tail_nodes=40))
    assert not grid.same_as(TimeGrid.build(1.0, intervals=100, tail_nodes=40))
