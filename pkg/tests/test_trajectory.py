import math

import numpy as np
import pytest

from mfgpen.config import Tolerances
from mfgpen.errors import ConfigError, LimitQualityError
from mfgpen.model.coefficients import InitialLaw
from mfgpen.solvers.closed_form import optimal_cost, state_ratio, terminal_state
from mfgpen.solvers.field import PenaltyLadder, run_ladder, solve_level
from mfgpen.solvers.trajectory import (build_constrained_solution, decay_bound_margins,
                                       evaluate_costs, rederive_adjoint, simulate_level)

SPREAD = InitialLaw([0.0, 1.0, 2.0])


@pytest.fixture(scope="module")
def level_two(unit, grid):
    level = solve_level(unit, 2.0, SPREAD.mean, grid)
    return level, simulate_level(unit, 2.0, SPREAD, level.riccati, level.flow, grid)


@pytest.fixture(scope="module")
def unit_limit(unit, unit_ladder, uniform_law, grid):
    return build_constrained_solution(unit, unit_ladder, uniform_law, grid)


def test_paths_are_affine_in_the_initial_value(level_two, grid):
    _, bundle = level_two
    G = state_ratio(grid.nodes, 2.0)
    np.testing.assert_allclose(bundle.X, np.outer(SPREAD.samples, G), atol=1e-8)
    assert bundle.terminal_state[1] == pytest.approx(0.25687, abs=1e-4)
    assert bundle.terminal_state[1] == pytest.approx(terminal_state(2.0), rel=1e-8)
    np.testing.assert_allclose(bundle.X_mean, bundle.nu, atol=1e-9)


def test_adjoint_and_control(level_two):
    level, bundle = level_two
    np.testing.assert_allclose(bundle.alpha, -bundle.Y)
    np.testing.assert_allclose(bundle.Y[:, -1], 2.0 * bundle.X[:, -1], atol=1e-9)
    np.testing.assert_allclose(bundle.Y, level.riccati.values * bundle.X, atol=1e-7)


def test_rederived_adjoint_matches(level_two, unit):
    _, bundle = level_two
    np.testing.assert_allclose(rederive_adjoint(bundle, unit), bundle.Y, atol=1e-6)


def test_cost_at_level_two(level_two, unit):
    _, bundle = level_two
    cost = evaluate_costs(bundle, unit)
    assert cost.per_sample[0] == pytest.approx(0.0, abs=1e-12)
    assert cost.per_sample[1] == pytest.approx(optimal_cost(2.0), rel=1e-4)
    assert cost.per_sample[1] == pytest.approx(0.547245, rel=1e-4)
    assert cost.per_sample[2] == pytest.approx(4.0 * cost.per_sample[1], rel=1e-6)


def test_terminal_state_at_large_level(unit, unit_ladder, uniform_law, grid):
    level = unit_ladder.level(1e4)
    bundle = simulate_level(unit, 1e4, uniform_law, level.riccati, level.flow, grid)
    expected = uniform_law.samples * terminal_state(1e4)
    np.testing.assert_allclose(bundle.terminal_state, expected, rtol=1e-5, atol=1e-12)
    assert terminal_state(1e4) == pytest.approx(8.509e-5, rel=1e-3)


def test_constrained_limit(unit_limit, uniform_law):
    assert unit_limit.is_limit and unit_limit.source_L == 1e6
    assert np.all(unit_limit.alpha[:, -1] == 0.0)
    assert np.max(np.abs(unit_limit.terminal_state)) <= unit_limit.tol_terminal
    assert unit_limit.decay_slope == pytest.approx(-1.0, abs=0.02)
    assert unit_limit.cauchy_gap < 1e-4
    assert unit_limit.warnings == ()
    assert unit_limit.summary()["L"] == "inf"
    np.testing.assert_allclose(unit_limit.terminal_state,
                               uniform_law.samples * terminal_state(1e6), rtol=1e-4, atol=1e-12)


def test_limit_cost_has_no_penalty(unit_limit, unit):
    cost = evaluate_costs(unit_limit, unit)
    assert np.all(cost.terminal == 0.0)
    assert cost.to_dict()["L"] == "inf"


def test_decay_bound_holds(unit_limit, unit, uniform_law):
    assert np.all(decay_bound_margins(unit_limit, unit, uniform_law.mean) >= 0)


def test_short_ladder_warns(unit, uniform_law, grid):
    ladder = run_ladder(unit, PenaltyLadder([1.0, 10.0, 100.0]), uniform_law.mean, grid)
    limit = build_constrained_solution(unit, ladder, uniform_law, grid)
    assert len(limit.warnings) == 1 and "below" in limit.warnings[0]
    assert limit.decay_slope is None
    strict = Tolerances(terminal_factor=1e-6)
    with pytest.raises(LimitQualityError) as info:
        build_constrained_solution(unit, ladder, uniform_law, grid, strict)
    assert info.value.worst_sample == int(np.argmax(uniform_law.samples))
    relaxed = build_constrained_solution(unit, ladder, uniform_law, grid, strict,
                                         enforce_terminal=False)
    assert math.isinf(relaxed.L)


def test_inputs_must_match(unit, grid, level_two):
    level, _ = level_two
    with pytest.raises(ConfigError):
        simulate_level(unit, 3.0, SPREAD, level.riccati, level.flow, grid)
    with pytest.raises(ConfigError):
        build_constrained_solution(unit, PenaltyLadder([1.0, 10.0]), SPREAD, grid)
