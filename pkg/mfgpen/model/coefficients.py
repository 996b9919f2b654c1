"""Model data of the penalized extended mean field game.

The state of a representative agent follows

    dX = [A X + B alpha + f(t, nu) + b(t, mu)] dt,    X_0 = xi,

and the agent minimizes

    1/2 E int [Q (X + l(t, nu))^2 + R (alpha + h(t, mu))^2] dt  (+ 1/2 L X_T^2),

where nu and mu are the population means of states and controls.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import CoefficientEvaluationError, ConfigError, DomainError, NumericError
from .catalog import ConstantFunction, CouplingFunction, TimeFunction, ZeroCoupling

logger = logging.getLogger(__name__)

RHO_TOL = 1e-12
RHO_MAX_ITER = 200
SAMPLED_NOTE = "sampled verification"


class CoefficientSet:
    """The coefficients (A, B, Q, R, f, b, l, h) and the constants of the model.

    Attributes:
        A, B, Q, R: Deterministic functions of time.
        f, b, l, h: Couplings of (t, x) with x-derivatives.
        K: Common bound on coefficients and coupling derivatives.
        delta: Lower bound with R >= delta and |B| >= delta.
        eps0: Lower bound with |1 + h'| >= eps0.
        T: Horizon.
    """

    SYMBOLS = ("A", "B", "Q", "R", "f", "b", "l", "h")

    def __init__(self,
                 A: TimeFunction, B: TimeFunction, Q: TimeFunction, R: TimeFunction,
                 f: Optional[CouplingFunction] = None, b: Optional[CouplingFunction] = None,
                 l: Optional[CouplingFunction] = None, h: Optional[CouplingFunction] = None,
                 K: float = 1.0, delta: float = 1.0, eps0: float = 1.0, T: float = 1.0):
        """Initialize a CoefficientSet.

        Raises:
            ConfigError: If a constant is not a positive finite number.
        """
        for name, value in (("K", K), ("delta", delta), ("eps0", eps0), ("T", T)):
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"must be a positive finite number, got {value!r}", field=name)
        self.A, self.B, self.Q, self.R = A, B, Q, R
        self.f = f or ZeroCoupling()
        self.b = b or ZeroCoupling()
        self.l = l or ZeroCoupling()
        self.h = h or ZeroCoupling()
        self.K = float(K)
        self.delta = float(delta)
        self.eps0 = float(eps0)
        self.T = float(T)

    @classmethod
    def constant(cls, A: float = 0.0, B: float = 1.0, Q: float = 1.0, R: float = 1.0,
                 **kwargs) -> "CoefficientSet":
        """Constant A, B, Q, R; couplings default to zero."""
        return cls(ConstantFunction(A), ConstantFunction(B),
                   ConstantFunction(Q), ConstantFunction(R), **kwargs)

    def has_couplings(self) -> bool:
        return not all(isinstance(g, ZeroCoupling) for g in (self.f, self.b, self.l, self.h))

    def rho(self, t, a):
        """Shorthand for :func:`invert_population_response`."""
        return invert_population_response(self, t, a)

    def mean_control(self, t, m):
        """Mean control mu = rho(t, -R^-1 B m) from the mean adjoint m."""
        return invert_population_response(self, t, -self.B(t) * m / self.R(t))

    def gain(self, t, mu):
        """Quadratic coefficient B^2/R + (B/R)(b' - B h')/(1 + h') of the slope equation."""
        B, R = self.B(t), self.R(t)
        hp = self.h.derivative(t, mu)
        bp = self.b.derivative(t, mu)
        return B * B / R + (B / R) * (bp - B * hp) / (1.0 + hp)

    def __repr__(self) -> str:
        parts = ", ".join(f"{s}={getattr(self, s)!r}" for s in self.SYMBOLS)
        return (f"CoefficientSet({parts}, K={self.K}, delta={self.delta}, "
                f"eps0={self.eps0}, T={self.T})")


class InitialLaw:
    """Finite sample of the nonnegative initial condition xi.

    Attributes:
        samples: Draws of xi (may be empty when only the mean is declared).
        mean: E[xi]; the arithmetic sample mean whenever samples are given.
        seed: Seed used to draw the samples, if any.
    """

    def __init__(self, samples: Sequence[float] = (), mean: Optional[float] = None,
                 seed: Optional[int] = None):
        samples = np.asarray(samples, dtype=float).ravel()
        if samples.size and not np.all(np.isfinite(samples)):
            raise DomainError("initial samples must be finite (xi is bounded)")
        if np.any(samples < 0):
            raise DomainError(f"initial samples must be nonnegative, min is {samples.min()!r}")
        if samples.size:
            sample_mean = float(samples.mean())
            if mean is not None and not math.isclose(mean, sample_mean, rel_tol=1e-12,
                                                     abs_tol=1e-15):
                raise ConfigError(f"declared mean {mean!r} differs from the sample mean "
                                  f"{sample_mean!r}", field="law.mean")
            mean = sample_mean
        if mean is None:
            raise ConfigError("either samples or a mean is required", field="law")
        if mean < 0:
            raise DomainError("E[xi] must be nonnegative")
        self.samples = samples
        self.samples.setflags(write=False)
        self.mean = float(mean)
        self.seed = seed

    @classmethod
    def point(cls, value: float, count: int = 64) -> "InitialLaw":
        return cls(np.full(count, float(value)))

    @classmethod
    def uniform(cls, low: float, high: float, count: int = 64, seed: int = 0) -> "InitialLaw":
        if not 0 <= low <= high:
            raise ConfigError("uniform law needs 0 <= low <= high", field="law")
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(low, high, size=count), seed=seed)

    @classmethod
    def truncated_normal(cls, mean: float, std: float, low: float, high: float,
                         count: int = 64, seed: int = 0) -> "InitialLaw":
        from scipy.stats import truncnorm

        if not (0 <= low < high and std > 0):
            raise ConfigError("truncated normal law needs 0 <= low < high and std > 0",
                              field="law")
        a, b = (low - mean) / std, (high - mean) / std
        rng = np.random.default_rng(seed)
        draws = truncnorm.rvs(a, b, loc=mean, scale=std, size=count, random_state=rng)
        return cls(draws, seed=seed)

    @property
    def count(self) -> int:
        return int(self.samples.size)

    def bound(self) -> float:
        return float(self.samples.max()) if self.samples.size else self.mean


@dataclass(frozen=True)
class ProbeGrid:
    """Tensor grid of (t, x) points on which Assumption (H) is sampled."""
    times: np.ndarray
    xs: np.ndarray

    @classmethod
    def default(cls, c: CoefficientSet, law: Optional[InitialLaw] = None,
                count: int = 101) -> "ProbeGrid":
        """101 x 101 points on [0, T] x [-X, X] with X = max(1, 2 max xi)."""
        x_bar = max(1.0, 2.0 * law.bound()) if law is not None else 1.0
        return cls(np.linspace(0.0, c.T, count), np.linspace(-x_bar, x_bar, count))


@dataclass
class ClauseResult:
    """Outcome of one clause of the standing assumption.

    ``margin`` is nonnegative where the clause holds; ``worst_*`` locate the
    smallest margin over the probes.
    """
    name: str
    passed: bool
    worst_margin: float
    worst_t: Optional[float] = None
    worst_x: Optional[float] = None

    def to_dict(self) -> Dict:
        return {"name": self.name, "passed": self.passed, "worst_margin": self.worst_margin,
                "worst_t": self.worst_t, "worst_x": self.worst_x}


@dataclass
class ValidationReport:
    clauses: List[ClauseResult]
    note: str = SAMPLED_NOTE
    probe_count: int = 0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failures(self) -> List[ClauseResult]:
        return [c for c in self.clauses if not c.passed]

    def clause(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> Dict:
        return {"passed": self.passed, "note": self.note, "probe_count": self.probe_count,
                "clauses": [c.to_dict() for c in self.clauses]}


def _evaluate(symbol: str, fn, tt, xx=None):
    with np.errstate(all="ignore"):
        values = np.asarray(fn(tt) if xx is None else fn(tt, xx), dtype=float)
    values = np.broadcast_to(values, np.shape(tt) if xx is None else np.broadcast(tt, xx).shape)
    bad = ~np.isfinite(values)
    if bad.any():
        idx = np.unravel_index(np.argmax(bad), values.shape)
        t_bad = float(np.broadcast_to(tt, values.shape)[idx])
        x_bad = None if xx is None else float(np.broadcast_to(xx, values.shape)[idx])
        raise CoefficientEvaluationError(symbol, t_bad, x_bad)
    return values


def _clause(name: str, margin: np.ndarray, tt, xx=None, slack: float = 1e-12,
            strict: bool = False) -> ClauseResult:
    margin = np.asarray(margin, dtype=float)
    idx = np.unravel_index(np.argmin(margin), margin.shape)
    worst = float(margin[idx])
    t_w = float(np.broadcast_to(tt, margin.shape)[idx])
    x_w = None if xx is None else float(np.broadcast_to(xx, margin.shape)[idx])
    passed = worst > 0 if strict else worst >= -slack
    return ClauseResult(name, bool(passed), worst, t_w, x_w)


def validate_assumptions(c: CoefficientSet, probes: Optional[ProbeGrid] = None,
                         law: Optional[InitialLaw] = None) -> ValidationReport:
    """Sample every clause of the standing assumption on a probe grid.

    Args:
        c: Coefficient set to validate.
        probes: (t, x) probe grid; defaults to :meth:`ProbeGrid.default`.
        law: Initial law; when given its nonnegativity is checked too.

    Returns:
        ValidationReport with one entry per clause; the report passes iff all do.

    Raises:
        CoefficientEvaluationError: If a coefficient is not finite at a probe.
    """
    probes = probes or ProbeGrid.default(c, law)
    if probes.times.size == 0 or probes.xs.size == 0:
        raise ConfigError("probe grid must be nonempty", field="probes")
    ts = np.asarray(probes.times, dtype=float)
    tt, xx = np.meshgrid(ts, np.asarray(probes.xs, dtype=float), indexing="ij")

    A = _evaluate("A", c.A, ts)
    B = _evaluate("B", c.B, ts)
    Q = _evaluate("Q", c.Q, ts)
    R = _evaluate("R", c.R, ts)
    derivs = {}
    for sym in ("f", "b", "l", "h"):
        g = getattr(c, sym)
        _evaluate(sym, g.value, tt, xx)
        derivs[sym] = _evaluate(sym + "'", g.derivative, tt, xx)
    zeros = {sym: _evaluate(sym, getattr(c, sym).value, ts, np.zeros_like(ts))
             for sym in ("f", "b", "l", "h")}

    clauses = []
    if law is not None:
        xi = law.samples if law.samples.size else np.array([law.mean])
        clauses.append(_clause("xi >= 0", xi, np.zeros_like(xi), xi, slack=0.0))
    clauses.append(_clause("A_t <= 0", -A, ts))
    clauses.append(_clause("Q_t > 0", Q, ts, strict=True))
    clauses.append(_clause("R_t >= delta", R - c.delta, ts))
    clauses.append(_clause("|B_t| >= delta", np.abs(B) - c.delta, ts))
    bound = np.min(np.stack([c.K - np.abs(A), c.K - np.abs(B), c.K - np.abs(Q),
                             c.K - np.abs(R)]), axis=0)
    clauses.append(_clause("|A|,|B|,|Q|,|R| <= K", bound, ts))
    origin = -np.max(np.abs(np.stack(list(zeros.values()))), axis=0)
    clauses.append(_clause("f(t,0) = b(t,0) = l(t,0) = h(t,0) = 0", origin, ts))
    deriv_bound = c.K - np.max(np.abs(np.stack(list(derivs.values()))), axis=0)
    clauses.append(_clause("|f'|,|b'|,|l'|,|h'| <= K", deriv_bound, tt, xx))
    one_plus_h = 1.0 + derivs["h"]
    clauses.append(_clause("|1+h'| >= eps0", np.abs(one_plus_h) - c.eps0, tt, xx))
    clauses.append(_clause("f' <= 0", -derivs["f"], tt, xx))
    clauses.append(_clause("l' >= 0", derivs["l"], tt, xx))
    with np.errstate(all="ignore"):
        b4 = (B / R)[:, None] * (derivs["b"] - B[:, None] * derivs["h"]) / one_plus_h
    b4 = np.where(np.isfinite(b4), b4, -np.inf)
    clauses.append(_clause("B R^-1 (b' - B h')/(1+h') >= 0", b4, tt, xx))

    report = ValidationReport(clauses, probe_count=int(tt.size))
    for failed in report.failures():
        logger.info("assumption clause failed: %s (margin %.3e at t=%s, x=%s)",
                    failed.name, failed.worst_margin, failed.worst_t, failed.worst_x)
    return report


def _rho_scalar(c: CoefficientSet, t: float, a: float, tol: float) -> float:
    h = c.h
    fn = lambda m: m + h.value(t, m) - a
    lo = a - c.K * abs(a) - 1.0
    hi = a + c.K * abs(a) + 1.0
    f_lo, f_hi = fn(lo), fn(hi)
    widen = 0
    while f_lo > 0 or f_hi < 0:
        widen += 1
        if widen > 60:
            raise NumericError(f"no bracket for rho at t={t!r}, a={a!r}")
        width = hi - lo
        lo, hi = lo - width, hi + width
        f_lo, f_hi = fn(lo), fn(hi)
    m = min(max(a, lo), hi)
    for _ in range(RHO_MAX_ITER):
        value = fn(m)
        if abs(value) <= tol:
            return float(m)
        if value > 0:
            hi = m
        else:
            lo = m
        slope = 1.0 + h.derivative(t, m)
        step = m - value / slope if slope != 0 else None
        m = step if step is not None and lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, abs(m)):
            return float(m)
    raise NumericError(f"rho did not converge at t={t!r}, a={a!r}; "
                       "the coefficient set is probably invalid")


def _rho_vector(c: CoefficientSet, t, a, tol: float) -> np.ndarray:
    t, a = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(a, dtype=float))
    h = c.h
    fn = lambda m: m + h.value(t, m) - a
    lo = a - c.K * np.abs(a) - 1.0
    hi = a + c.K * np.abs(a) + 1.0
    for _ in range(60):
        bad = (fn(lo) > 0) | (fn(hi) < 0)
        if not bad.any():
            break
        width = hi - lo
        lo = np.where(bad, lo - width, lo)
        hi = np.where(bad, hi + width, hi)
    else:
        raise NumericError("no bracket for rho on the requested points")
    m = np.clip(a, lo, hi)
    for _ in range(RHO_MAX_ITER):
        value = fn(m)
        if np.all(np.abs(value) <= tol):
            return m
        hi = np.where(value > 0, m, hi)
        lo = np.where(value > 0, lo, m)
        slope = 1.0 + h.derivative(t, m)
        with np.errstate(all="ignore"):
            step = m - value / slope
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        m = np.where(np.abs(value) <= tol, m, np.where(inside, step, 0.5 * (lo + hi)))
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(m))):
            return m
    raise NumericError("rho did not converge; the coefficient set is probably invalid")


def invert_population_response(c: CoefficientSet, t, a, tol: float = RHO_TOL):
    """Invert the population response map m -> m + h(t, m).

    Linear and vanishing h are inverted in closed form; otherwise a Newton
    iteration is safeguarded by bisection on a bracket that is widened until
    it contains the root.

    Args:
        c: Coefficient set; validated sets make the map strictly increasing.
        t: Time (scalar or array).
        a: Target value(s).
        tol: Absolute tolerance on |m + h(t, m) - a|.

    Returns:
        m with m + h(t, m) = a, a float for scalar input.

    Raises:
        NumericError: If no bracket or no convergence is reached.
    """
    slope = c.h.linear_slope(t)
    if slope is not None:
        return a / (1.0 + slope)
    if np.ndim(t) == 0 and np.ndim(a) == 0:
        return _rho_scalar(c, float(t), float(a), tol)
    return _rho_vector(c, t, a, tol)
