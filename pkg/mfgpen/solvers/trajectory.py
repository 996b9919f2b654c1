"""Optimal paths per initial sample, the constrained limit and realized costs.

Under a fixed penalty level the closed loop is affine in the initial value:
X - nu solves dZ = (A - B^2 R^-1 P) Z dt, so every sample path is
X^i = nu + (xi_i - E[xi]) G with G the state transition of the Riccati path.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import CubicSpline

from ..config import Tolerances
from ..errors import ConfigError, DomainError, LimitQualityError
from ..model.coefficients import CoefficientSet, InitialLaw
from ..model.grid import TimeGrid
from .field import PenaltyLadder
from .integrate import RK4
from .meanflow import MeanFlow
from .riccati import RiccatiPath

logger = logging.getLogger(__name__)

LIMIT_LEVEL_FLOOR = 1e4


@dataclass(frozen=True)
class TrajectoryBundle:
    """Per-sample optimal paths on the nodes of a grid.

    Attributes:
        L: Penalty level, ``math.inf`` for the constrained limit.
        grid: Grid of the paths.
        xi: Initial samples.
        X: States, shape (samples, nodes).
        Y: Adjoints Y = P X + phi.
        alpha: Controls -R^-1 B Y - h(mu).
        nu: Mean state.
        m: Mean adjoint.
        mu: Mean control.
        source_L: Level the paths were computed at (equals L for finite bundles).
        cauchy_gap: max |X^{L_max} - X^{L_prev}| for limit bundles.
        tol_terminal: Terminal tolerance of a limit bundle.
        decay_slope: Fitted slope of log X_T against log L.
        warnings: Human-readable quality warnings.
    """
    L: float
    grid: TimeGrid
    xi: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    alpha: np.ndarray
    nu: np.ndarray
    m: np.ndarray
    mu: np.ndarray
    source_L: float
    cauchy_gap: Optional[float] = None
    tol_terminal: Optional[float] = None
    decay_slope: Optional[float] = None
    warnings: Tuple[str, ...] = ()

    @property
    def is_limit(self) -> bool:
        return math.isinf(self.L)

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def terminal_state(self) -> np.ndarray:
        return self.X[:, -1]

    @property
    def X_mean(self) -> np.ndarray:
        return self.X.mean(axis=0)

    @property
    def Y_mean(self) -> np.ndarray:
        return self.Y.mean(axis=0)

    @property
    def alpha_mean(self) -> np.ndarray:
        return self.alpha.mean(axis=0)

    def summary(self) -> Dict:
        return {
            "L": "inf" if self.is_limit else self.L,
            "source_L": self.source_L,
            "samples": int(self.xi.size),
            "terminal_state_max": float(np.max(np.abs(self.terminal_state))),
            "terminal_state_mean": float(np.mean(self.terminal_state)),
            "cauchy_gap": self.cauchy_gap,
            "tol_terminal": self.tol_terminal,
            "decay_slope": self.decay_slope,
            "warnings": list(self.warnings),
        }


def simulate_level(c: CoefficientSet, L: float, law: InitialLaw, p: RiccatiPath,
                   mf: MeanFlow, g: TimeGrid) -> TrajectoryBundle:
    """Optimal state, adjoint and control of every sample of ``law`` at level L.

    Raises:
        ConfigError: If ``p`` or ``mf`` were solved on another grid or level.
        DomainError: If a sample is negative.
    """
    if not (p.grid.same_as(g) and mf.grid.same_as(g)):
        raise ConfigError("trajectories need Riccati path and mean flow on one grid",
                          field="grid")
    if p.L != L or mf.L != L:
        raise ConfigError(f"inputs were solved for another level than L={L:g}", field="ladder")
    xi = law.samples if law.count else np.array([law.mean])
    if np.any(xi < 0):
        raise DomainError("initial samples must be nonnegative")

    nodes = g.nodes
    G = p.transition()
    X = mf.nu[None, :] + (xi - mf.mean0)[:, None] * G[None, :]
    Y = p.values[None, :] * X + mf.phi[None, :]
    B = np.broadcast_to(np.asarray(c.B(nodes), dtype=float), nodes.shape)
    R = np.broadcast_to(np.asarray(c.R(nodes), dtype=float), nodes.shape)
    h_mu = np.broadcast_to(np.asarray(c.h.value(nodes, mf.mu), dtype=float), nodes.shape)
    alpha = -(B / R)[None, :] * Y - h_mu[None, :]
    logger.debug("L=%g: simulated %d samples, max X_T=%.3e", L, xi.size,
                 float(np.max(np.abs(X[:, -1]))))
    return TrajectoryBundle(float(L), g, np.array(xi, dtype=float), X, Y, alpha,
                            mf.nu, mf.m, mf.mu, float(L))


def reintegrate_states(bundle: TrajectoryBundle, c: CoefficientSet) -> np.ndarray:
    """X from dX = [A X - B^2 R^-1 Y - B h(mu) + f(nu) + b(mu)] dt integrated forward
    per sample from X_0 = xi, with Y, nu and mu splined between nodes."""
    nodes = bundle.times
    Y_spline = CubicSpline(nodes, bundle.Y, axis=1)
    nu_spline = CubicSpline(nodes, bundle.nu)
    mu_spline = CubicSpline(nodes, bundle.mu)

    def fun(t, x):
        nu, mu = nu_spline(t), mu_spline(t)
        B = c.B(t)
        return (c.A(t) * x - B * B / c.R(t) * Y_spline(t) - B * c.h.value(t, mu)
                + c.f.value(t, nu) + c.b.value(t, mu))

    return RK4().march(fun, nodes, bundle.xi).T


def rederive_adjoint(bundle: TrajectoryBundle, c: CoefficientSet) -> np.ndarray:
    """Y from dY = -[A Y + Q X + Q l(nu)] dt integrated backward from Y_T = L X_T.

    Limit bundles use their source level. States and the mean are read between
    nodes through cubic splines.
    """
    nodes = bundle.times
    L = bundle.source_L
    X_spline = CubicSpline(nodes, bundle.X, axis=1)
    nu_spline = CubicSpline(nodes, bundle.nu)

    def fun(t, y):
        nu = nu_spline(t)
        return -(c.A(t) * y + c.Q(t) * (X_spline(t) + c.l.value(t, nu)))

    Y_T = L * bundle.X[:, -1] + (bundle.m[-1] - L * bundle.nu[-1])
    return RK4().march(fun, nodes, Y_T, backward=True).T


@dataclass
class CostReport:
    """Realized cost functionals of a bundle.

    Attributes:
        L: Level of the bundle (``inf`` for the limit).
        running: Per-sample running cost.
        terminal: Per-sample penalty 1/2 L X_T^2 (zero for the limit).
    """
    L: float
    running: np.ndarray
    terminal: np.ndarray

    @property
    def per_sample(self) -> np.ndarray:
        return self.running + self.terminal

    @property
    def expected(self) -> float:
        return float(np.mean(self.per_sample))

    def to_dict(self) -> Dict:
        return {"L": "inf" if math.isinf(self.L) else self.L,
                "expected": self.expected,
                "running": float(np.mean(self.running)),
                "terminal": float(np.mean(self.terminal))}


def running_cost(c: CoefficientSet, nodes: np.ndarray, X: np.ndarray, alpha: np.ndarray,
                 nu: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Trapezoidal 1/2 int [Q (X + l(nu))^2 + R (alpha + h(mu))^2] dt along the last axis."""
    Q = np.asarray(c.Q(nodes), dtype=float)
    R = np.asarray(c.R(nodes), dtype=float)
    integrand = 0.5 * (Q * (X + c.l.value(nodes, nu)) ** 2
                       + R * (alpha + c.h.value(nodes, mu)) ** 2)
    return trapezoid(integrand, nodes, axis=-1)


def evaluate_costs(bundle: TrajectoryBundle, c: CoefficientSet,
                   mf: Optional[MeanFlow] = None) -> CostReport:
    """J^L per sample, or the constrained functional J for a limit bundle."""
    nu = bundle.nu if mf is None else mf.nu
    mu = bundle.mu if mf is None else mf.mu
    running = running_cost(c, bundle.times, bundle.X, bundle.alpha, nu, mu)
    if bundle.is_limit:
        terminal = np.zeros_like(running)
    else:
        terminal = 0.5 * bundle.L * bundle.X[:, -1] ** 2
    return CostReport(bundle.L, running, terminal)


def terminal_tolerance(bundle: TrajectoryBundle, L_max: float, factor: float = 10.0) -> float:
    """factor * sup|Y| / L_max, with sup|Y| taken over nodes t <= T - eps_T."""
    mask = bundle.grid.evaluation_mask()
    u_bound = float(np.max(np.abs(bundle.Y[:, mask]))) if bundle.Y.size else 0.0
    return factor * u_bound / L_max


def fit_decay_slope(ladder: PenaltyLadder, law: InitialLaw, c: CoefficientSet,
                    min_level: float = 1e2) -> Optional[float]:
    """Least-squares slope of log mean X^L_T against log L over levels >= ``min_level``."""
    points = []
    for level in ladder:
        if level.L < min_level:
            continue
        bundle = simulate_level(c, level.L, law, level.riccati, level.flow, level.grid)
        x_T = float(np.mean(bundle.terminal_state))
        if x_T <= 0:
            return None
        points.append((math.log(level.L), math.log(x_T)))
    if len(points) < 2:
        return None
    logs = np.array(points)
    return float(np.polyfit(logs[:, 0], logs[:, 1], 1)[0])


def build_constrained_solution(c: CoefficientSet, ladder: PenaltyLadder, law: InitialLaw,
                               g: TimeGrid,
                               tolerances: Optional[Tolerances] = None,
                               enforce_terminal: bool = True) -> TrajectoryBundle:
    """Constrained limit (X^inf, Y^inf, alpha^inf) from the largest level of ``ladder``.

    alpha^inf_T is pinned to 0. The Cauchy gap in X against the previous level is
    attached, and so is the decay-rate slope when enough levels are available.

    Raises:
        ConfigError: If the ladder is unsolved or solved on another grid.
        LimitQualityError: If some |X_T| exceeds tol_terminal and ``enforce_terminal``
            is set.
    """
    tol = tolerances or Tolerances()
    if not ladder.is_solved or not ladder.grid.same_as(g):
        raise ConfigError("constrained solution needs a ladder solved on this grid",
                          field="ladder")
    largest = ladder.largest
    L_max = largest.L
    warnings = []
    if L_max < LIMIT_LEVEL_FLOOR:
        message = (f"largest level L={L_max:g} is below {LIMIT_LEVEL_FLOOR:g}; "
                   "the limit estimate is coarse")
        logger.warning(message)
        warnings.append(message)

    top = simulate_level(c, L_max, law, largest.riccati, largest.flow, g)
    alpha = top.alpha.copy()
    alpha[:, -1] = 0.0
    gap = None
    previous = ladder.previous(L_max)
    if previous is not None:
        lower = simulate_level(c, previous.L, law, previous.riccati, previous.flow, g)
        gap = float(np.max(np.abs(top.X - lower.X)))
    slope = fit_decay_slope(ladder, law, c, tol.decay_fit_min_level)
    tol_terminal = terminal_tolerance(top, L_max, tol.terminal_factor)

    limit = replace(top, L=math.inf, alpha=alpha, cauchy_gap=gap, tol_terminal=tol_terminal,
                    decay_slope=slope, warnings=tuple(warnings))
    worst = int(np.argmax(np.abs(limit.terminal_state)))
    if enforce_terminal and abs(limit.terminal_state[worst]) > tol_terminal:
        raise LimitQualityError(worst, float(limit.terminal_state[worst]), tol_terminal)
    logger.info("constrained limit from L=%g: max |X_T|=%.3e (tol %.3e)", L_max,
                float(np.max(np.abs(limit.terminal_state))), tol_terminal)
    return limit


def decay_constant(c: CoefficientSet) -> float:
    """C1 with hatP^inf_t >= C1 / (T - t) on [0, T)."""
    K, d, T = c.K, c.delta, c.T
    return min(math.exp(-2.0 * K * T), 2.0 * d * T / (K * math.expm1(2.0 * K * T)))


def decay_bound_margins(bundle: TrajectoryBundle, c: CoefficientSet,
                        mean0: Optional[float] = None) -> np.ndarray:
    """Margins of X_t (1 + (C1 delta^2/K) ln(T/(T-t))) <= (tK + 1) xi + tK E[xi].

    Evaluated at nodes t <= T - eps_T; shape (samples, masked nodes), negative
    entries are violations.
    """
    mask = bundle.grid.evaluation_mask()
    t = bundle.times[mask]
    K, d, T = c.K, c.delta, c.T
    mean0 = float(np.mean(bundle.xi)) if mean0 is None else mean0
    factor = 1.0 + decay_constant(c) * d * d / K * np.log(T / (T - t))
    rhs = (t * K + 1.0)[None, :] * bundle.xi[:, None] + (t * K * mean0)[None, :]
    return rhs - bundle.X[:, mask] * factor[None, :]

