import math

import numpy as np
import pytest

from mfgpen.errors import DomainError, SingularityError
from mfgpen.model.catalog import AffineFunction, ConstantFunction
from mfgpen.model.coefficients import CoefficientSet
from mfgpen.solvers.closed_form import riccati_coth, state_ratio
from mfgpen.solvers.integrate import RK4
from mfgpen.solvers.riccati import (RiccatiPath, check_riccati_envelope, lower_envelope_hatP,
                                    solve_riccati, upper_envelope_barP)


def test_unit_level_is_constant(unit, grid):
    p = solve_riccati(unit, 1.0, grid)
    np.testing.assert_allclose(p.values, 1.0, atol=1e-12)


@pytest.mark.parametrize("L", [0.5, 2.0, 10.0, 1e3, 1e6])
def test_matches_closed_form(unit, grid, L):
    p = solve_riccati(unit, L, grid)
    np.testing.assert_allclose(p.values, riccati_coth(grid.nodes, L), rtol=1e-8)
    assert p.values[-1] == L
    assert p.reciprocal_from is None


def test_large_level_uses_reciprocal_window(unit, grid):
    p = solve_riccati(unit, 1e8, grid)
    assert p.reciprocal_from == pytest.approx(0.95)
    mask = grid.evaluation_mask()
    np.testing.assert_allclose(p.values[mask], riccati_coth(grid.nodes[mask], 1e8), rtol=1e-6)


def test_transition_is_the_closed_loop_state(unit, grid):
    p = solve_riccati(unit, 2.0, grid)
    np.testing.assert_allclose(p.transition(), state_ratio(grid.nodes, 2.0), rtol=1e-8)
    assert p.transition()[-1] == pytest.approx(0.25687, abs=1e-4)


def test_p0_golden_value(unit, grid):
    p = solve_riccati(unit, 2.0, grid)
    assert p.values[0] == pytest.approx(1.0 / math.tanh(1.0 + math.atanh(0.5)), rel=1e-9)
    assert p.values[0] == pytest.approx(1.09449, abs=1e-5)


def test_nonpositive_level_is_rejected(unit, grid):
    with pytest.raises(DomainError):
        solve_riccati(unit, 0.0, grid)


def test_monotone_in_level(unit, grid):
    paths = [solve_riccati(unit, L, grid) for L in (1.0, 10.0, 100.0)]
    for lower, upper in zip(paths, paths[1:]):
        assert np.all(upper.values >= lower.values - 1e-10)


def test_envelope_golden_values(unit):
    assert lower_envelope_hatP(unit, 1.0, 0.0) == pytest.approx(0.094486, abs=1e-6)
    assert upper_envelope_barP(unit, 10.0, 0.0) == pytest.approx(2.720187, abs=1e-5)
    assert lower_envelope_hatP(unit, 5.0, 1.0) == pytest.approx(5.0)
    assert upper_envelope_barP(unit, 5.0, 1.0) == pytest.approx(5.0)


def test_upper_envelope_domain(unit):
    with pytest.raises(DomainError):
        upper_envelope_barP(unit, 1.0, 0.0)


def test_envelope_check_passes_and_skips(unit, grid):
    report = check_riccati_envelope(solve_riccati(unit, 10.0, grid), unit)
    assert report.passed and report.upper_passed
    small = check_riccati_envelope(solve_riccati(unit, 2.0, grid), unit)
    assert small.passed
    assert small.upper_passed is None and small.skipped_reason == "small_L_domain"


def test_corrupted_path_violates_upper_envelope(unit, grid):
    p = solve_riccati(unit, 10.0, grid)
    corrupted = RiccatiPath(p.L, grid, p.values * 10.0, p.carrier)
    report = check_riccati_envelope(corrupted, unit)
    assert not report.passed
    assert report.worst_upper_margin < 0


def test_envelopes_hold_for_varying_coefficients(grid):
    c = CoefficientSet(ConstantFunction(-0.2), ConstantFunction(1.0), ConstantFunction(1.0),
                       AffineFunction(1.0, 0.5), K=1.5, delta=1.0)
    for L in (1.0, 10.0, 1e4):
        assert check_riccati_envelope(solve_riccati(c, L, grid), c).passed


def test_refinement_gives_up_at_a_blow_up():
    with pytest.raises(SingularityError):
        RK4(max_depth=5).march_refined(lambda t, y: y * y, np.array([0.0, 2.0]), 1.0)
