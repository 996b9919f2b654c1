import math

import numpy as np
import pytest

from mfgpen.errors import CoefficientEvaluationError, ConfigError, DomainError
from mfgpen.model.catalog import (AffineFunction, ClippedCubicCoupling, ConstantFunction,
                                  LinearCoupling, SaturatingCoupling, TabulatedCoupling,
                                  build_coupling, build_time_function)
from mfgpen.model.coefficients import (CoefficientSet, InitialLaw, ProbeGrid,
                                       invert_population_response, validate_assumptions)


def test_zero_coupling_set_passes_every_clause(unit):
    report = validate_assumptions(unit)
    assert report.passed
    assert report.note == "sampled verification"
    assert report.probe_count == 101 * 101


def test_positive_drift_fails_only_the_sign_clause():
    c = CoefficientSet.constant(A=0.1)
    report = validate_assumptions(c)
    assert [f.name for f in report.failures()] == ["A_t <= 0"]
    assert report.clause("A_t <= 0").worst_margin == pytest.approx(-0.1)


def test_degenerate_response_map_fails():
    c = CoefficientSet.constant(h=LinearCoupling(ConstantFunction(-1.0)))
    report = validate_assumptions(c)
    assert not report.clause("|1+h'| >= eps0").passed


def test_negative_q_fails_strict_clause():
    report = validate_assumptions(CoefficientSet.constant(Q=0.0))
    assert not report.clause("Q_t > 0").passed


def test_law_nonnegativity_is_a_clause(unit):
    law = InitialLaw.point(0.5, count=4)
    report = validate_assumptions(unit, law=law)
    assert report.clause("xi >= 0").passed


def test_non_finite_coefficient_names_the_probe():
    c = CoefficientSet.constant(Q=float("nan"))
    with pytest.raises(CoefficientEvaluationError) as info:
        validate_assumptions(c)
    assert info.value.symbol == "Q"
    assert info.value.t == 0.0


def test_validation_is_deterministic(tanh_set):
    assert validate_assumptions(tanh_set).to_dict() == validate_assumptions(tanh_set).to_dict()


def test_default_probe_range_follows_the_law(unit):
    probes = ProbeGrid.default(unit, InitialLaw([0.0, 3.0]))
    assert probes.xs[0] == -6.0 and probes.xs[-1] == 6.0


@pytest.mark.parametrize("h, a, expected", [
    (None, 0.5, 0.5),
    (LinearCoupling(ConstantFunction(0.5)), 3.0, 2.0),
    (SaturatingCoupling(ConstantFunction(0.2), 1.0), 1.0, 0.86066),
])
def test_population_response_inverse(h, a, expected):
    c = CoefficientSet.constant(h=h) if h is not None else CoefficientSet.constant()
    assert invert_population_response(c, 0.3, a) == pytest.approx(expected, abs=1e-4)


def test_population_response_residual_is_tiny():
    c = CoefficientSet.constant(h=SaturatingCoupling(ConstantFunction(0.2), 1.0))
    m = invert_population_response(c, 0.0, 1.0)
    assert abs(m + 0.2 * math.tanh(m) - 1.0) <= 1e-12


@pytest.mark.parametrize("h", [
    SaturatingCoupling(ConstantFunction(-0.2), 1.0),
    ClippedCubicCoupling(ConstantFunction(0.3), 1.0),
    LinearCoupling(AffineFunction(-0.1, 0.05)),
])
def test_roundtrip_and_lipschitz(h):
    c = CoefficientSet.constant(h=h, eps0=0.75)
    ms = np.linspace(-3.0, 3.0, 61)
    for t in (0.0, 0.5, 1.0):
        a = ms + h.value(t, ms)
        back = np.array([invert_population_response(c, t, float(v)) for v in a])
        np.testing.assert_allclose(back, ms, atol=1e-10)
        vector = invert_population_response(c, t, a)
        np.testing.assert_allclose(vector, ms, atol=1e-10)
        slopes = np.abs(np.diff(back)) / np.abs(np.diff(a))
        assert np.all(slopes <= 1.0 / c.eps0 + 1e-8)


def test_initial_law_rejects_negative_samples():
    with pytest.raises(DomainError):
        InitialLaw([1.0, -0.5])


def test_initial_law_mean_must_match_samples():
    with pytest.raises(ConfigError):
        InitialLaw([1.0, 2.0], mean=2.0)
    assert InitialLaw([1.0, 2.0]).mean == 1.5
    assert InitialLaw(mean=0.7).count == 0


def test_seeded_laws_are_reproducible():
    a = InitialLaw.uniform(0.0, 1.0, count=8, seed=3)
    b = InitialLaw.uniform(0.0, 1.0, count=8, seed=3)
    np.testing.assert_array_equal(a.samples, b.samples)
    tn = InitialLaw.truncated_normal(1.0, 0.5, 0.0, 2.0, count=200, seed=1)
    assert tn.samples.min() >= 0.0 and tn.samples.max() <= 2.0


def test_constants_must_be_positive():
    with pytest.raises(ConfigError):
        CoefficientSet.constant(K=0.0)


def test_catalog_declarations():
    assert build_time_function(2.5)(0.3) == 2.5
    affine = build_time_function({"family": "affine", "a0": 1.0, "a1": 0.5})
    assert affine(1.0) == 1.5
    sat = build_coupling({"family": "saturating", "c": 2.0, "s": 0.5})
    assert sat.value(0.0, 10.0) == pytest.approx(2.0 * 0.5)
    assert sat.derivative(0.0, 0.0) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        build_coupling({"family": "quadratic", "c": 1.0})
    with pytest.raises(ConfigError):
        build_coupling({"family": "linear", "c": 1.0, "extra": 1})


def test_tabulated_coupling_derivative():
    xs = np.linspace(-2.0, 2.0, 41)
    times = np.array([0.0, 1.0])
    values = np.vstack([0.3 * xs, 0.3 * xs])
    g = TabulatedCoupling(times, xs, values)
    assert g.value(0.5, 1.0) == pytest.approx(0.3)
    assert g.derivative(0.5, 0.7) == pytest.approx(0.3, rel=1e-6)


def test_saturating_slope_is_finite_far_out():
    sat = SaturatingCoupling(ConstantFunction(-0.2), 1.0)
    x = np.array([-1e3, -40.0, 0.0, 40.0, 1e3])
    with np.errstate(all="raise"):
        slope = sat.derivative(0.0, x)
    assert np.all(np.isfinite(slope))
    assert slope[0] == 0.0 and slope[-1] == 0.0
    assert slope[2] == pytest.approx(-0.2)
