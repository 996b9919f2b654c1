import math

import numpy as np
import pytest

from mfgpen.errors import ConfigError, ConvergenceError, DomainError, LadderError
from mfgpen.solvers import field as field_module
from mfgpen.solvers.closed_form import riccati_coth
from mfgpen.solvers.field import (FieldProbe, PenaltyLadder, assemble_ladder,
                                  estimate_u_infinity, eval_uL, field_probes, run_ladder,
                                  solve_level)
from mfgpen.solvers.meanflow import restart_flow


@pytest.mark.parametrize("levels", [[], [10.0, 1.0], [1.0, 1.0], [-1.0, 2.0], [1.0, math.inf]])
def test_ladder_rejects_bad_levels(levels):
    with pytest.raises(ConfigError):
        PenaltyLadder(levels)


def test_solved_ladder_matches_closed_form(unit_ladder):
    assert unit_ladder.is_solved and len(unit_ladder) == 7
    for level in unit_ladder:
        assert level.P(0.0) == pytest.approx(riccati_coth(0.0, level.L), rel=1e-8)
        assert unit_ladder.checks[level.L].passed
    assert unit_ladder.previous(1.0) is None
    assert unit_ladder.previous(10.0).L == 1.0
    assert unit_ladder.largest.L == 1e6


def test_single_level_ladder_equals_direct_solve(unit, uniform_law, grid):
    ladder = run_ladder(unit, PenaltyLadder([2.0]), uniform_law.mean, grid)
    direct = solve_level(unit, 2.0, uniform_law.mean, grid)
    np.testing.assert_array_equal(ladder.level(2.0).riccati.values, direct.riccati.values)
    np.testing.assert_array_equal(ladder.level(2.0).flow.nu, direct.flow.nu)
    assert ladder.checks[2.0].riccati_monotone_margin is None


def test_threads_do_not_change_results(unit, uniform_law, grid):
    serial = run_ladder(unit, PenaltyLadder([1.0, 10.0, 100.0]), uniform_law.mean, grid)
    pooled = run_ladder(unit, PenaltyLadder([1.0, 10.0, 100.0]), uniform_law.mean, grid,
                        threads=3)
    for a, b in zip(serial, pooled):
        np.testing.assert_array_equal(a.riccati.values, b.riccati.values)
        np.testing.assert_array_equal(a.flow.nu, b.flow.nu)


def test_field_is_linear_in_x_without_couplings(unit_ladder):
    level = unit_ladder.level(10.0)
    assert eval_uL(level, 0.0, 0.0, 0.0) == 0.0
    assert eval_uL(level, 0.0, 1.0, 0.7) == pytest.approx(level.P(0.0))
    assert eval_uL(level, 0.5, 2.0, 0.3) == pytest.approx(2.0 * level.P(0.5))


def test_field_at_level_two(unit, grid):
    level = solve_level(unit, 2.0, 1.0, grid)
    assert eval_uL(level, 0.0, 1.0, 1.0) == pytest.approx(1.09449, abs=1e-5)


def test_field_outside_the_cutoff_is_rejected(unit_ladder):
    with pytest.raises(DomainError):
        eval_uL(unit_ladder.largest, 1.0, 1.0, 1.0)


def test_offset_restart_reproduces_the_flow(tanh_set, grid):
    level = solve_level(tanh_set, 10.0, 1.0, grid)
    assert level.phi(0.0, 1.0) == pytest.approx(float(level.flow.phi[0]), abs=1e-7)
    assert level.phi(0.0, 1.0) == level.phi(0.0, 1.0)
    assert eval_uL(level, 0.25, 0.0, 0.0) == 0.0


def test_failed_level_keeps_partial_results(unit, grid, monkeypatch):
    original = field_module.solve_level

    def flaky(c, L, mean0, g, tol):
        if L == 100.0:
            raise ConvergenceError("no bracket")
        return original(c, L, mean0, g, tol)

    monkeypatch.setattr(field_module, "solve_level", flaky)
    with pytest.raises(LadderError) as info:
        run_ladder(unit, PenaltyLadder([1.0, 10.0, 100.0, 1e3]), 0.5, grid)
    assert info.value.level == 100.0
    assert sorted(info.value.partial.solutions) == [1.0, 10.0]
    assert isinstance(info.value.cause, ConvergenceError)


def test_limit_estimate_on_initial_probes(unit_ladder, grid):
    probes = field_probes(grid, times=[0.0])
    limit = estimate_u_infinity(unit_ladder, probes, richardson=True)
    coth1 = 1.0 / math.tanh(1.0)
    for i, p in enumerate(limit.probes):
        assert limit.limit[i] == pytest.approx(coth1 * p.x, abs=2e-5)
        assert abs(limit.extrapolated[i] - coth1 * p.x) <= abs(limit.limit[i] - coth1 * p.x) + 1e-9
    assert limit.cauchy_gap <= 2e-5
    assert limit.monotone_margin >= -1e-8
    assert limit.P_inf[0.0] == pytest.approx(coth1, abs=1e-5)


def test_limit_estimate_flags_unproved_probes(unit_ladder, grid):
    limit = estimate_u_infinity(unit_ladder, field_probes(grid, times=[0.0, 0.5]))
    outside = limit.outside_proved_region()
    assert FieldProbe(0.0, 0.0, 1.0) in outside
    assert FieldProbe(0.0, 1.0, 1.0) not in outside
    regions = {d["region"] for d in limit.to_dict()["probes"]}
    assert regions == {"proved", "outside proved region"}


def test_limit_estimate_needs_three_levels(unit, uniform_law, grid):
    ladder = run_ladder(unit, PenaltyLadder([1.0, 10.0]), uniform_law.mean, grid)
    with pytest.raises(ConfigError):
        estimate_u_infinity(ladder)
    with pytest.raises(ConfigError):
        estimate_u_infinity(PenaltyLadder([1.0, 10.0, 100.0]))


def test_restarts_are_cached(tanh_set, grid):
    level = solve_level(tanh_set, 10.0, 1.0, grid)
    flow = level.restart(0.25, 0.5)
    assert level.restart(0.25, 0.5) is flow
    assert level.phi(0.25, 0.5) == float(flow.phi[0])
    cold = restart_flow(tanh_set, 10.0, 0.25, 0.5, level.riccati, grid)
    assert flow.phi[0] == pytest.approx(cold.phi[0], abs=1e-10)


def test_terminal_guess_is_exact_without_couplings(unit, unit_ladder):
    level = unit_ladder.level(10.0)
    flow = restart_flow(unit, 10.0, 0.5, 0.8, level.riccati, level.grid)
    assert level.terminal_guess(0.5, 0.8) == pytest.approx(float(flow.nu[-1]), rel=1e-8)


def test_assembled_ladder_recomputes_checks(unit, unit_ladder):
    levels = [unit_ladder.level(L) for L in (10.0, 100.0)]
    ladder = assemble_ladder(unit, levels, unit_ladder.mean0)
    assert ladder.levels == (10.0, 100.0) and ladder.is_solved
    assert ladder.checks[100.0].riccati_monotone_margin == pytest.approx(
        unit_ladder.checks[100.0].riccati_monotone_margin)
    with pytest.raises(ConfigError):
        assemble_ladder(unit, levels[::-1], unit_ladder.mean0)
