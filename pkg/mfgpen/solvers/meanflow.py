"""Mean-field boundary value problem of the penalized game.

With deterministic coefficients the conditional means are plain means, and the
pair (nu, m) = (E[X], E[Y]) solves

    d nu = [A nu - B^2 R^-1 m - B h(mu) + f(nu) + b(mu)] dt,    nu_0 = E[xi],
    d m  = -[A m + Q nu + Q l(nu)] dt,                          m_T = L nu_T,

with mu = rho(-R^-1 B m). The decoupling offset is phi = m - P nu (so phi_T = 0)
and the slope Psi = P + d Phi / d nu solves

    d Psi = [G Psi^2 - (2A + f'(nu)) Psi - Q (1 + l'(nu))] dt,   Psi_T = L,

with G = B^2/R + (B/R)(b'(mu) - B h'(mu))/(1 + h'(mu)). Psi is carried through
its reciprocal, which stays bounded near T.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from ..errors import ConfigError, ConvergenceError, DomainError
from ..model.coefficients import CoefficientSet
from ..model.grid import TimeGrid
from .integrate import RK4
from .riccati import (BoundReport, RiccatiPath, envelope_report, lower_form, solve_riccati,
                      upper_form)

logger = logging.getLogger(__name__)

SHOOT_TOL = 1e-9
MAX_WIDENING = 60
WARM_WIDTH = 0.05


@dataclass(frozen=True)
class MeanFlow:
    """Deterministic mean-field curves of one penalty level on a grid.

    Attributes:
        L: Penalty level.
        grid: Grid of the solve (a sub-grid for restarted solves).
        nu: Mean state at the nodes.
        m: Mean adjoint at the nodes.
        phi: Decoupling offset m - P nu.
        psi: Decoupling slope P + Phi_nu along the flow.
        mu: Mean control rho(-R^-1 B m).
        shooting_residual: |m_T - L nu_T|.
        initial_residual: |nu_0 - E[xi]|.
        method: "shooting" or "picard".
        iterations: Root-finder evaluations or Picard sweeps.
    """
    L: float
    grid: TimeGrid
    nu: np.ndarray
    m: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    shooting_residual: float
    initial_residual: float
    method: str = "shooting"
    iterations: int = 0

    @property
    def mean0(self) -> float:
        return float(self.nu[0])

    def tolerance(self, tol: float = SHOOT_TOL) -> float:
        return tol * max(1.0, self.L * abs(float(self.nu[-1])))


def _flow_rhs(c: CoefficientSet, with_slope: bool):
    def fun(t, y):
        nu, m = y[0], y[1]
        A, B, Q, R = c.A(t), c.B(t), c.Q(t), c.R(t)
        mu = c.mean_control(t, m)
        dnu = A * nu - B * B / R * m - B * c.h.value(t, mu) + c.f.value(t, nu) + c.b.value(t, mu)
        dm = -(A * m + Q * nu + Q * c.l.value(t, nu))
        if not with_slope:
            return np.array([dnu, dm])
        w = y[2]
        a = 2.0 * A + c.f.derivative(t, nu)
        s = Q * (1.0 + c.l.derivative(t, nu))
        return np.array([dnu, dm, -(c.gain(t, mu) - a * w - s * w * w)])

    return fun


def _check_inputs(c: CoefficientSet, L: float, mean0: float, p: RiccatiPath, g: TimeGrid):
    if not p.grid.same_as(g):
        raise ConfigError("Riccati path and mean flow must share one grid", field="grid")
    if p.L != L:
        raise ConfigError(f"Riccati path solved for L={p.L:g}, not L={L:g}", field="ladder")
    if not (math.isfinite(mean0) and mean0 >= 0):
        raise DomainError(f"E[xi] must be finite and nonnegative, got {mean0!r}")
    if g.T != c.T:
        raise ConfigError(f"grid horizon {g.T} differs from T={c.T}", field="grid")


def _assemble(c: CoefficientSet, L: float, g: TimeGrid, p: RiccatiPath, nu, m, w,
              mean0: float, method: str, iterations: int) -> MeanFlow:
    nodes = g.nodes
    phi = m - p.values * nu
    phi[-1] = m[-1] - L * nu[-1]
    with np.errstate(divide="ignore"):
        psi = 1.0 / w
    psi[-1] = L
    mu = c.mean_control(nodes, m)
    mu = np.broadcast_to(np.asarray(mu, dtype=float), nodes.shape).copy()
    arrays = [nu, m, phi, psi, mu]
    for a in arrays:
        a.setflags(write=False)
    return MeanFlow(float(L), g, nu, m, phi, psi, mu,
                    shooting_residual=float(abs(m[-1] - L * nu[-1])),
                    initial_residual=float(abs(nu[0] - mean0)),
                    method=method, iterations=iterations)


def _shoot(c: CoefficientSet, L: float, mean0: float, g: TimeGrid,
           guess: Optional[float] = None) -> Tuple[float, int]:
    """Find nu_T such that the backward flow from (nu_T, L nu_T) hits nu_0 = mean0.

    The bracket starts at [0, mean0], or at guess +/- WARM_WIDTH relative when a
    positive guess of nu_T is given, and is widened until it changes sign.
    """
    nodes = g.nodes
    rk = RK4()
    rhs = _flow_rhs(c, with_slope=False)
    curve: List[Tuple[float, float]] = []

    def residual(nu_T: float) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            y = rk.march(rhs, nodes, [nu_T, L * nu_T], backward=True)
        r = float(y[0, 0] - mean0)
        if not math.isfinite(r):
            r = math.copysign(math.inf, nu_T - mean0)
        curve.append((nu_T, r))
        return r

    if guess is not None and math.isfinite(guess) and guess > 0:
        lo, hi = guess * (1.0 - WARM_WIDTH), guess * (1.0 + WARM_WIDTH)
    else:
        lo, hi = 0.0, mean0
    r_lo, r_hi = residual(lo), residual(hi)
    widening = 0
    while r_lo * r_hi > 0:
        widening += 1
        if widening > MAX_WIDENING:
            raise ConvergenceError(f"no shooting bracket for L={L:g}", curve)
        width = hi - lo
        if r_hi < 0:
            lo, r_lo = hi, r_hi
            hi = hi + 2.0 * width
            r_hi = residual(hi)
        else:
            hi, r_hi = lo, r_lo
            lo = lo - 2.0 * width
            r_lo = residual(lo)
        logger.debug("L=%g: widened shooting bracket to [%g, %g]", L, lo, hi)
    if r_lo == 0:
        return lo, len(curve)
    if r_hi == 0:
        return hi, len(curve)
    try:
        root = brentq(residual, lo, hi, xtol=np.finfo(float).tiny,
                      rtol=4 * np.finfo(float).eps, maxiter=200)
    except RuntimeError as e:
        raise ConvergenceError(f"shooting failed for L={L:g}: {e}", curve)
    return float(root), len(curve)


def _midpoint_times(nodes: np.ndarray) -> np.ndarray:
    return np.sort(np.concatenate([nodes, 0.5 * (nodes[:-1] + nodes[1:])]))


def _linear_march(rk: RK4, stage_times: np.ndarray, slope: np.ndarray, source: np.ndarray,
                  nodes: np.ndarray, y_start: float, backward: bool) -> np.ndarray:
    """RK4 for y' = slope(t) y + source(t) with coefficients tabulated at stage times."""
    fun = lambda t, y: np.interp(t, stage_times, slope) * y + np.interp(t, stage_times, source)
    return rk.march(fun, nodes, y_start, backward=backward)


def _picard(c: CoefficientSet, L: float, mean0: float, p: RiccatiPath, g: TimeGrid,
            relaxation: float, max_iter: int, tol: float):
    """Damped Picard iteration on (nu, phi) with the nonlinear terms frozen per sweep."""
    nodes = g.nodes
    rk = RK4()
    tt = _midpoint_times(nodes)
    A, B, Q, R = c.A(tt), c.B(tt), c.Q(tt), c.R(tt)
    A, B, Q, R = (np.broadcast_to(np.asarray(v, dtype=float), tt.shape) for v in (A, B, Q, R))
    P = CubicSpline(nodes, p.values)(tt)
    P[np.isin(tt, nodes)] = p.values
    gain = B * B / R

    nu = np.full(nodes.size, mean0)
    phi = np.zeros(nodes.size)
    curve: List[Tuple[float, float]] = []
    for sweep in range(1, max_iter + 1):
        nu_t = CubicSpline(nodes, nu)(tt)
        phi_t = CubicSpline(nodes, phi)(tt)
        mu_t = c.mean_control(tt, P * nu_t + phi_t)
        n1 = -B * c.h.value(tt, mu_t) + c.b.value(tt, mu_t) + c.f.value(tt, nu_t)
        n2 = Q * c.l.value(tt, nu_t)
        phi_new = _linear_march(rk, tt, -A + gain * P, -n2 - P * n1, nodes, 0.0, backward=True)
        phi_new_t = CubicSpline(nodes, phi_new)(tt)
        nu_new = _linear_march(rk, tt, A - gain * P, -gain * phi_new_t + n1, nodes, mean0,
                               backward=False)
        change = float(max(np.max(np.abs(nu_new - nu)), np.max(np.abs(phi_new - phi))))
        curve.append((float(sweep), change))
        nu = (1.0 - relaxation) * nu + relaxation * nu_new
        phi = (1.0 - relaxation) * phi + relaxation * phi_new
        if change <= tol:
            logger.debug("L=%g: Picard converged after %d sweeps", L, sweep)
            return nu, phi, sweep
    raise ConvergenceError(f"Picard iteration did not converge for L={L:g}", curve)


def _slope_along(c: CoefficientSet, L: float, g: TimeGrid, nu: np.ndarray, m: np.ndarray):
    """Reciprocal slope 1/Psi integrated backward along given (nu, m) curves."""
    nodes = g.nodes
    tt = _midpoint_times(nodes)
    nu_t = CubicSpline(nodes, nu)(tt)
    m_t = CubicSpline(nodes, m)(tt)
    mu_t = c.mean_control(tt, m_t)
    gain = np.broadcast_to(np.asarray(c.gain(tt, mu_t), dtype=float), tt.shape)
    a = np.broadcast_to(np.asarray(2.0 * c.A(tt) + c.f.derivative(tt, nu_t), dtype=float), tt.shape)
    s = np.broadcast_to(np.asarray(c.Q(tt) * (1.0 + c.l.derivative(tt, nu_t)), dtype=float),
                        tt.shape)

    def fun(t, w):
        return -(np.interp(t, tt, gain) - np.interp(t, tt, a) * w - np.interp(t, tt, s) * w * w)

    return RK4().march(fun, nodes, 1.0 / L, backward=True)


def solve_mean_bvp(c: CoefficientSet, L: float, mean0: float, p: RiccatiPath, g: TimeGrid,
                   method: str = "shooting", tol_shoot: float = SHOOT_TOL,
                   fallback: bool = True, relaxation: float = 0.5,
                   max_iter: int = 500, guess: Optional[float] = None) -> MeanFlow:
    """Solve the mean-field two-point boundary value problem for one level.

    Shooting runs on the terminal mean state nu_T: the flow is integrated backward
    from (nu_T, L nu_T) and ``brentq`` matches nu_0 to ``mean0``. The slope Psi
    is integrated in the same backward pass. If shooting fails and ``fallback``
    is set, the damped Picard iteration takes over.

    Args:
        c: Validated coefficient set.
        L: Penalty level.
        mean0: E[xi], nonnegative.
        p: Riccati path of the same level on ``g``.
        g: Time grid.
        method: "shooting" or "picard".
        tol_shoot: Residual tolerance, scaled by max(1, L |nu_T|).
        fallback: Run Picard when shooting fails.
        relaxation: Picard damping factor.
        max_iter: Picard sweep limit.
        guess: Estimate of nu_T that seeds the shooting bracket.

    Returns:
        MeanFlow on ``g``.

    Raises:
        ConfigError: If ``p`` was solved on another grid or level.
        DomainError: If mean0 is negative.
        ConvergenceError: If no method converges.
    """
    _check_inputs(c, L, mean0, p, g)
    if method not in ("shooting", "picard"):
        raise ConfigError(f"unknown BVP method {method!r}", field="method")

    nodes = g.nodes
    if mean0 == 0.0:
        zeros = np.zeros(nodes.size)
        w = RK4().march(_flow_rhs(c, True), nodes, [0.0, 0.0, 1.0 / L], backward=True)[:, 2]
        return _assemble(c, L, g, p, zeros, zeros.copy(), w, mean0, method, 0)

    if method == "shooting":
        try:
            nu_T, evaluations = _shoot(c, L, mean0, g, guess)
            y = RK4().march(_flow_rhs(c, True), nodes, [nu_T, L * nu_T, 1.0 / L], backward=True)
            flow = _assemble(c, L, g, p, y[:, 0].copy(), y[:, 1].copy(), y[:, 2].copy(),
                             mean0, "shooting", evaluations)
            tol = flow.tolerance(tol_shoot)
            if flow.initial_residual > tol * max(1.0, mean0) or flow.shooting_residual > tol:
                raise ConvergenceError(
                    f"shooting residual {flow.initial_residual:.3e} above {tol:.3e} for L={L:g}",
                    [(nu_T, flow.initial_residual)])
            return flow
        except ConvergenceError as e:
            if not fallback:
                raise
            logger.warning("shooting failed for L=%g (%s); falling back to Picard", L, e)

    nu, phi, sweeps = _picard(c, L, mean0, p, g, relaxation, max_iter,
                              tol=1e-12 * max(1.0, mean0))
    m = p.values * nu + phi
    m[-1] = L * nu[-1]
    w = _slope_along(c, L, g, nu, m)
    return _assemble(c, L, g, p, nu, m, w, mean0, "picard", sweeps)


def restrict_path(c: CoefficientSet, p: RiccatiPath, t0: float) -> RiccatiPath:
    """Riccati path on the sub-grid starting at ``t0``; re-solved when t0 is not a node."""
    sub = p.grid.restrict(t0)
    j = p.grid.node_index(t0)
    if j is not None:
        return replace(p, grid=sub, values=p.values[j:], carrier=p.carrier[j:])
    return solve_riccati(c, p.L, sub)


def restart_flow(c: CoefficientSet, L: float, t0: float, nu0: float, p: RiccatiPath,
                 g: TimeGrid, **kwargs) -> MeanFlow:
    """Mean flow restarted at (t0, nu0) on the sub-grid of ``g`` starting at t0."""
    if not p.grid.same_as(g):
        raise ConfigError("Riccati path and grid differ", field="grid")
    if not 0.0 <= t0 <= g.cutoff + 1e-12 * g.T:
        raise DomainError(f"restart time must lie in [0, T - eps_T], got {t0!r}")
    if not nu0 >= 0:
        raise DomainError(f"restart mean must be nonnegative, got {nu0!r}")
    sub_path = restrict_path(c, p, t0)
    return solve_mean_bvp(c, L, nu0, sub_path, sub_path.grid, **kwargs)


def phi_decoupling(c: CoefficientSet, L: float, t0: float, nu0: float, p: RiccatiPath,
                   g: TimeGrid, **kwargs) -> float:
    """Phi^L(t0, nu0) = m_t0 - P_t0 nu0 of the flow restarted at (t0, nu0).

    Raises:
        DomainError: If t0 lies outside [0, T - eps_T] or nu0 < 0.
        ConvergenceError: As :func:`solve_mean_bvp`.
    """
    if nu0 == 0.0 or not c.has_couplings():
        if not (0.0 <= t0 <= g.cutoff + 1e-12 * g.T and nu0 >= 0):
            raise DomainError("Phi is evaluated on [0, T - eps_T] x [0, inf), "
                              f"got ({t0!r}, {nu0!r})")
        return 0.0
    return float(restart_flow(c, L, t0, nu0, p, g, **kwargs).phi[0])


def psi_envelopes(c: CoefficientSet, L: float, t):
    """Comparison envelopes (hatPsi, barPsi) of the decoupling slope.

    hatPsi uses K3 = K^2/delta + (K^2 + K^3)/(delta eps0); barPsi uses
    K4 = 2K^3/delta + K + K^2 and K5 = delta^2/(2K).

    Raises:
        DomainError: If L <= sqrt(K4/K5), where barPsi is undefined.
    """
    K, d, e = c.K, c.delta, c.eps0
    tau = c.T - np.asarray(t, dtype=float)
    k3 = K ** 2 / d + (K ** 2 + K ** 3) / (d * e)
    k4 = 2.0 * K ** 3 / d + K + K ** 2
    k5 = d ** 2 / (2.0 * K)
    return lower_form(K, k3, L, tau), upper_form(k4, k5, L, tau)


def lower_envelope_hatPsi(c: CoefficientSet, L: float, t):
    K, d, e = c.K, c.delta, c.eps0
    k3 = K ** 2 / d + (K ** 2 + K ** 3) / (d * e)
    return lower_form(K, k3, L, c.T - np.asarray(t, dtype=float))


def check_psi_envelope(flow: MeanFlow, c: CoefficientSet, slack: float = 1e-6) -> BoundReport:
    """Check hatPsi - slack <= Psi <= barPsi + slack at nodes t <= T - eps_T."""
    mask = flow.grid.evaluation_mask()
    t = flow.grid.nodes[mask]
    return envelope_report("psi_envelope", flow.L, t, flow.psi[mask],
                           lower_envelope_hatPsi(c, flow.L, t),
                           lambda: psi_envelopes(c, flow.L, t)[1], slack)
