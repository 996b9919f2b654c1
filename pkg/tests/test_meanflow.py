import numpy as np
import pytest

from mfgpen.errors import ConfigError, DomainError
from mfgpen.model.grid import TimeGrid
from mfgpen.solvers.closed_form import state_ratio
from mfgpen.solvers.meanflow import (check_psi_envelope, lower_envelope_hatPsi, phi_decoupling,
                                     psi_envelopes, restart_flow, solve_mean_bvp)
from mfgpen.solvers.riccati import check_riccati_envelope, solve_riccati


@pytest.fixture(scope="module")
def tanh_flows(tanh_set, grid):
    p = solve_riccati(tanh_set, 10.0, grid)
    shooting = solve_mean_bvp(tanh_set, 10.0, 1.0, p, grid)
    picard = solve_mean_bvp(tanh_set, 10.0, 1.0, p, grid, method="picard")
    return p, shooting, picard


def test_zero_coupling_flow_is_closed_form(unit, grid):
    p = solve_riccati(unit, 2.0, grid)
    flow = solve_mean_bvp(unit, 2.0, 0.5, p, grid)
    np.testing.assert_allclose(flow.nu, 0.5 * state_ratio(grid.nodes, 2.0), atol=1e-8)
    np.testing.assert_allclose(flow.phi, 0.0, atol=1e-7)
    np.testing.assert_allclose(flow.psi, p.values, rtol=1e-7)
    np.testing.assert_allclose(flow.mu, -flow.m)
    assert flow.method == "shooting"
    assert flow.shooting_residual <= flow.tolerance()


def test_zero_mean_gives_zero_flow(tanh_set, grid):
    p = solve_riccati(tanh_set, 10.0, grid)
    flow = solve_mean_bvp(tanh_set, 10.0, 0.0, p, grid)
    assert np.all(flow.nu == 0.0) and np.all(flow.m == 0.0)
    assert flow.psi[-1] == 10.0


def test_shooting_meets_both_boundary_conditions(tanh_flows):
    _, flow, _ = tanh_flows
    assert flow.initial_residual <= 1e-9
    assert flow.shooting_residual <= flow.tolerance()
    assert flow.phi[-1] == pytest.approx(0.0, abs=1e-9)


def test_picard_agrees_with_shooting(tanh_flows):
    _, shooting, picard = tanh_flows
    assert picard.method == "picard" and picard.iterations > 1
    np.testing.assert_allclose(picard.nu, shooting.nu, atol=1e-7)
    np.testing.assert_allclose(picard.m, shooting.m, atol=1e-7)


def test_mean_state_decreases_with_level(tanh_set, grid):
    flows = [solve_mean_bvp(tanh_set, L, 1.0, solve_riccati(tanh_set, L, grid), grid)
             for L in (10.0, 100.0)]
    assert np.all(flows[1].nu <= flows[0].nu + 1e-9)


def test_slope_stays_inside_envelopes(tanh_set, tanh_flows):
    _, flow, _ = tanh_flows
    assert check_psi_envelope(flow, tanh_set).passed


def test_psi_envelope_golden_value(unit):
    assert lower_envelope_hatPsi(unit, 1.0, 0.0) == pytest.approx(0.058918, abs=1e-6)
    lower, upper = psi_envelopes(unit, 100.0, 1.0)
    assert lower == pytest.approx(100.0) and upper == pytest.approx(100.0)
    with pytest.raises(DomainError):
        psi_envelopes(unit, 1.0, 0.0)


def test_phi_vanishes_without_couplings_or_mass(unit, tanh_set, grid):
    p = solve_riccati(unit, 10.0, grid)
    assert phi_decoupling(unit, 10.0, 0.3, 2.0, p, grid) == 0.0
    q = solve_riccati(tanh_set, 10.0, grid)
    assert phi_decoupling(tanh_set, 10.0, 0.3, 0.0, q, grid) == 0.0
    with pytest.raises(DomainError):
        phi_decoupling(unit, 10.0, 1.0, 1.0, p, grid)


def test_restart_from_a_node_reproduces_the_flow(tanh_flows, tanh_set, grid):
    p, flow, _ = tanh_flows
    j = grid.node_index(0.5)
    restarted = restart_flow(tanh_set, 10.0, 0.5, float(flow.nu[j]), p, grid)
    np.testing.assert_allclose(restarted.nu, flow.nu[j:], atol=1e-7)
    value = phi_decoupling(tanh_set, 10.0, 0.5, float(flow.nu[j]), p, grid)
    assert value == pytest.approx(float(flow.phi[j]), abs=1e-7)


def test_inputs_are_validated(unit, grid):
    p = solve_riccati(unit, 2.0, grid)
    with pytest.raises(DomainError):
        solve_mean_bvp(unit, 2.0, -1.0, p, grid)
    with pytest.raises(ConfigError):
        solve_mean_bvp(unit, 3.0, 1.0, p, grid)
    other = TimeGrid.build(1.0, intervals=50, tail_nodes=10)
    with pytest.raises(ConfigError):
        solve_mean_bvp(unit, 2.0, 1.0, p, other)
    with pytest.raises(ConfigError):
        solve_mean_bvp(unit, 2.0, 1.0, p, grid, method="newton")


@pytest.mark.parametrize("name", ["unit", "tanh_set", "mixed_set"])
@pytest.mark.parametrize("L", [1.0, 10.0, 1e2, 1e3, 1e4])
def test_envelopes_hold_across_coefficient_sets(request, grid, name, L):
    c = request.getfixturevalue(name)
    p = solve_riccati(c, L, grid)
    riccati = check_riccati_envelope(p, c)
    assert riccati.passed, riccati.to_dict()
    flow = solve_mean_bvp(c, L, 1.0, p, grid)
    psi = check_psi_envelope(flow, c)
    assert psi.passed, psi.to_dict()


def test_warm_started_shooting_matches_a_cold_start(tanh_flows, tanh_set, grid):
    p, flow, _ = tanh_flows
    cold = restart_flow(tanh_set, 10.0, 0.25, 0.8, p, grid)
    for guess in (0.8 * float(flow.nu[-1]), 50.0):
        warm = restart_flow(tanh_set, 10.0, 0.25, 0.8, p, grid, guess=guess)
        assert warm.method == "shooting"
        assert warm.phi[0] == pytest.approx(cold.phi[0], abs=1e-10)
        assert warm.nu[-1] == pytest.approx(cold.nu[-1], rel=1e-10)
