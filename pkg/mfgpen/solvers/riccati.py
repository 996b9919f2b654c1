"""Backward Riccati equation of the penalized problem and its comparison envelopes.

    dP/dt = B^2 R^-1 P^2 - 2 A P - Q,    P_T = L.

Alongside P the solver carries q = g P, where g solves dg/dt = (A - B^2 R^-1 P) g.
q obeys dq/dt = -(A + Q/P) q, stays bounded for every L, and yields the state
transition G_t = g_t / g_0 of the closed loop.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from ..errors import DomainError, NumericError
from ..model.coefficients import CoefficientSet
from ..model.grid import TimeGrid
from .integrate import RK4

logger = logging.getLogger(__name__)

LARGE_L = 1e6
RECIPROCAL_FRACTION = 0.05


@dataclass(frozen=True)
class RiccatiPath:
    """P^L on the nodes of a grid.

    Attributes:
        L: Penalty level.
        grid: Grid the path was solved on.
        values: P at every node; ``values[-1] == L`` exactly.
        carrier: q = g P at every node, with q_T = 1.
        reciprocal_from: Start of the window integrated in 1/P, if any.
    """
    L: float
    grid: TimeGrid
    values: np.ndarray
    carrier: np.ndarray
    reciprocal_from: Optional[float] = None

    def __call__(self, t):
        """Piecewise-linear interpolation between nodes."""
        out = np.interp(t, self.grid.nodes, self.values)
        return float(out) if np.ndim(t) == 0 else out

    def transition(self) -> np.ndarray:
        """G_t = exp(int_start^t (A - B^2 R^-1 P) ds) at every node."""
        return (self.carrier / self.values) * (self.values[0] / self.carrier[0])


def solve_riccati(c: CoefficientSet, L: float, g: TimeGrid, rtol: float = 1e-10,
                  large_L: float = LARGE_L) -> RiccatiPath:
    """Solve the Riccati equation backward from P_T = L on the nodes of ``g``.

    Every grid interval is taken with RK4 under half-step error control. For
    L above ``large_L`` the last 5% of the horizon is integrated in w = 1/P.

    Args:
        c: Validated coefficient set.
        L: Penalty level, positive.
        g: Time grid.
        rtol: Relative half-step tolerance.
        large_L: Threshold above which the reciprocal window is used.

    Returns:
        RiccatiPath on ``g``.

    Raises:
        DomainError: If L is not positive.
        SingularityError: If step refinement underflows near T.
        NumericError: If P fails to stay positive.
    """
    if not L > 0:
        raise DomainError(f"penalty level must be positive, got {L!r}")
    nodes = g.nodes
    stepper = RK4(rtol=rtol)

    def direct(t, y):
        P, q = y
        A, B, Q, R = c.A(t), c.B(t), c.Q(t), c.R(t)
        return np.array([B * B / R * P * P - 2.0 * A * P - Q, -(A + Q / P) * q])

    def reciprocal(t, y):
        w, q = y
        A, B, Q, R = c.A(t), c.B(t), c.Q(t), c.R(t)
        return np.array([-(B * B / R - 2.0 * A * w - Q * w * w), -(A + Q * w) * q])

    P = np.empty(nodes.size)
    q = np.empty(nodes.size)
    split = None
    if L > large_L:
        k = int(np.searchsorted(nodes, c.T - RECIPROCAL_FRACTION * c.T))
        k = min(k, nodes.size - 2)
        split = float(nodes[k])
        tail = stepper.march_refined(reciprocal, nodes[k:], [1.0 / L, 1.0], backward=True)
        P[k:] = 1.0 / tail[:, 0]
        q[k:] = tail[:, 1]
        logger.debug("L=%g: reciprocal window [%g, %g]", L, split, c.T)
        if k > 0:
            head = stepper.march_refined(direct, nodes[:k + 1], [P[k], q[k]], backward=True)
            P[:k] = head[:k, 0]
            q[:k] = head[:k, 1]
    else:
        full = stepper.march_refined(direct, nodes, [L, 1.0], backward=True)
        P[:] = full[:, 0]
        q[:] = full[:, 1]
    P[-1] = L
    q[-1] = 1.0

    if not np.all(np.isfinite(P)) or np.min(P) <= 0:
        raise NumericError(f"Riccati solution lost positivity for L={L:g}")
    P.setflags(write=False)
    q.setflags(write=False)
    return RiccatiPath(float(L), g, P, q, split)


def lower_form(K: float, kappa: float, L: float, tau):
    """(e^{2K tau}/L + kappa tau (e^{2K tau} - 1)/(2K tau))^-1, equal to L at tau = 0."""
    tau = np.asarray(tau, dtype=float)
    inv_L = 0.0 if math.isinf(L) else 1.0 / L
    with np.errstate(divide="ignore"):
        out = 1.0 / (np.exp(2.0 * K * tau) * inv_L + kappa * np.expm1(2.0 * K * tau) / (2.0 * K))
    return float(out) if out.ndim == 0 else out


def upper_form(k1: float, k2: float, L: float, tau):
    """sqrt(k1/k2) (1 + 2/((1 + 2/(L sqrt(k2/k1) - 1)) e^{2 sqrt(k1 k2) tau} - 1)).

    Raises:
        DomainError: If L sqrt(k2/k1) <= 1, where the formula has no meaning.
    """
    level = math.sqrt(k1 / k2)
    scaled = L / level
    if scaled <= 1.0:
        raise DomainError(
            f"upper envelope requires L > sqrt(K1/K2) = {level:.6g}, got L={L:g}")
    inner = 1.0 if math.isinf(L) else 1.0 + 2.0 / (scaled - 1.0)
    tau = np.asarray(tau, dtype=float)
    with np.errstate(divide="ignore"):
        out = level * (1.0 + 2.0 / (inner * np.exp(2.0 * math.sqrt(k1 * k2) * tau) - 1.0))
    return float(out) if out.ndim == 0 else out


def lower_envelope_hatP(c: CoefficientSet, L: float, t):
    """Lower comparison envelope of P^L, uniform over coefficient sets bounded by K."""
    return lower_form(c.K, c.K ** 2 / c.delta, L, c.T - np.asarray(t, dtype=float))


def upper_envelope_barP(c: CoefficientSet, L: float, t):
    """Upper comparison envelope of P^L with K1 = K + 2K^3/delta^2, K2 = delta^2/(2K).

    Raises:
        DomainError: If L <= sqrt(K1/K2).
    """
    k1 = c.K + 2.0 * c.K ** 3 / c.delta ** 2
    k2 = c.delta ** 2 / (2.0 * c.K)
    return upper_form(k1, k2, L, c.T - np.asarray(t, dtype=float))


@dataclass
class BoundReport:
    """Worst margins of a two-sided envelope check over nodes t <= T - eps_T.

    A negative margin is a violation. ``upper_passed`` is None when the upper
    envelope is undefined for this L; ``skipped_reason`` then says why.
    """
    name: str
    L: float
    lower_passed: bool
    worst_lower_margin: float
    worst_lower_time: float
    upper_passed: Optional[bool] = None
    worst_upper_margin: Optional[float] = None
    worst_upper_time: Optional[float] = None
    skipped_reason: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.lower_passed and self.upper_passed is not False

    def to_dict(self) -> Dict:
        return {"name": self.name, "L": self.L, "passed": self.passed,
                "lower_passed": self.lower_passed,
                "worst_lower_margin": self.worst_lower_margin,
                "worst_lower_time": self.worst_lower_time,
                "upper_passed": self.upper_passed,
                "worst_upper_margin": self.worst_upper_margin,
                "worst_upper_time": self.worst_upper_time,
                "skipped_reason": self.skipped_reason}


def envelope_report(name: str, L: float, times: np.ndarray, values: np.ndarray,
                    lower, upper_fn, slack: float = 1e-6) -> BoundReport:
    """Compare ``values`` with ``lower`` and ``upper_fn()`` node by node."""
    tol = slack * (1.0 + np.abs(values))
    lower_margin = values - lower + tol
    i = int(np.argmin(lower_margin))
    report = BoundReport(name, L, bool(lower_margin[i] >= 0), float(lower_margin[i]),
                         float(times[i]))
    try:
        upper = upper_fn()
    except DomainError as e:
        report.skipped_reason = "small_L_domain"
        logger.info("%s upper check skipped for L=%g: %s", name, L, e)
        return report
    upper_margin = upper + tol - values
    j = int(np.argmin(upper_margin))
    report.upper_passed = bool(upper_margin[j] >= 0)
    report.worst_upper_margin = float(upper_margin[j])
    report.worst_upper_time = float(times[j])
    return report


def check_riccati_envelope(p: RiccatiPath, c: CoefficientSet, slack: float = 1e-6) -> BoundReport:
    """Check hatP - slack <= P <= barP + slack at every node t <= T - eps_T."""
    mask = p.grid.evaluation_mask()
    t = p.grid.nodes[mask]
    values = p.values[mask]
    return envelope_report("riccati_envelope", p.L, t, values,
                           lower_envelope_hatP(c, p.L, t),
                           lambda: upper_envelope_barP(c, p.L, t), slack)
