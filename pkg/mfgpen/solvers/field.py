"""Decoupling field u^L(t, x, nu) = P^L_t x + Phi^L(t, nu) and the penalty ladder."""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..config import DEFAULT_LADDER, Tolerances
from ..errors import ConfigError, LadderError, MfgPenError, PropertyFailureError
from ..model.coefficients import CoefficientSet
from ..model.grid import TimeGrid
from .meanflow import (MeanFlow, check_psi_envelope, phi_decoupling, restart_flow,
                       solve_mean_bvp)
from .riccati import BoundReport, RiccatiPath, check_riccati_envelope, solve_riccati

logger = logging.getLogger(__name__)


class LevelSolution:
    """Solved artifacts of one penalty level: Riccati path and mean flow.

    Offsets Phi(t, nu) come from flows restarted at (t, nu). Restarted flows are
    cached, and each restart seeds its shooting bracket with the terminal mean of
    the level flow scaled to the new starting mean.
    """

    def __init__(self, coefficients: CoefficientSet, grid: TimeGrid, riccati: RiccatiPath,
                 flow: MeanFlow, tolerances: Optional[Tolerances] = None):
        if not (riccati.grid.same_as(grid) and flow.grid.same_as(grid)):
            raise ConfigError("level artifacts must share the level grid", field="grid")
        self.coefficients = coefficients
        self.grid = grid
        self.riccati = riccati
        self.flow = flow
        self.tolerances = tolerances or Tolerances()
        self._phi_cache: Dict[Tuple[float, float], float] = {}
        self._restarts: Dict[Tuple[float, float], MeanFlow] = {}
        self._lock = threading.Lock()

    @property
    def L(self) -> float:
        return self.riccati.L

    def P(self, t: float) -> float:
        j = self.grid.node_index(t)
        return float(self.riccati.values[j]) if j is not None else self.riccati(t)

    def terminal_guess(self, t: float, nu: float) -> Optional[float]:
        """nu_T of the level flow rescaled to start from nu at t (exact when linear)."""
        nu_t = float(np.interp(t, self.grid.nodes, self.flow.nu))
        if not nu_t > 0:
            return None
        return nu * float(self.flow.nu[-1]) / nu_t

    def restart(self, t: float, nu: float) -> MeanFlow:
        """Mean flow restarted at (t, nu) on the sub-grid from t, cached."""
        key = (float(t), float(nu))
        with self._lock:
            if key in self._restarts:
                return self._restarts[key]
        tol = self.tolerances
        flow = restart_flow(self.coefficients, self.L, t, nu, self.riccati, self.grid,
                            tol_shoot=tol.shoot, relaxation=tol.picard_relaxation,
                            max_iter=tol.picard_max_iter, guess=self.terminal_guess(t, nu))
        with self._lock:
            self._restarts[key] = flow
        return flow

    def phi(self, t: float, nu: float) -> float:
        key = (float(t), float(nu))
        with self._lock:
            if key in self._phi_cache:
                return self._phi_cache[key]
        if nu == 0.0 or not self.coefficients.has_couplings():
            value = phi_decoupling(self.coefficients, self.L, t, nu, self.riccati, self.grid)
        else:
            value = float(self.restart(t, nu).phi[0])
        with self._lock:
            self._phi_cache[key] = value
        return value

    def u(self, t: float, x: float, nu: float) -> float:
        return self.P(t) * x + self.phi(t, nu)

    def __repr__(self) -> str:
        return f"LevelSolution(L={self.L:g}, method={self.flow.method})"


def solve_level(c: CoefficientSet, L: float, mean0: float, g: TimeGrid,
                tolerances: Optional[Tolerances] = None) -> LevelSolution:
    """Riccati path and mean flow for one level."""
    tol = tolerances or Tolerances()
    p = solve_riccati(c, L, g, rtol=tol.riccati_rtol)
    flow = solve_mean_bvp(c, L, mean0, p, g, tol_shoot=tol.shoot,
                          relaxation=tol.picard_relaxation, max_iter=tol.picard_max_iter)
    logger.info("solved L=%g: P_0=%.10g nu_T=%.3e (%s, %d evaluations)",
                L, p.values[0], flow.nu[-1], flow.method, flow.iterations)
    return LevelSolution(c, g, p, flow, tol)


def eval_uL(level: LevelSolution, t: float, x: float, nu: float) -> float:
    """u^L(t, x, nu) = P^L_t x + Phi^L(t, nu).

    Raises:
        DomainError: If t lies beyond T - eps_T or nu < 0.
        ConvergenceError: If the restarted solve for Phi fails.
    """
    return level.u(t, x, nu)


@dataclass
class LevelChecks:
    """Per-level checks attached by :func:`run_ladder`.

    The monotonicity margins compare a level with its predecessor and are None
    for the first level; a negative margin is a violation.
    """
    riccati: BoundReport
    psi: BoundReport
    riccati_monotone_margin: Optional[float] = None
    nu_monotone_margin: Optional[float] = None

    @property
    def passed(self) -> bool:
        margins = [m for m in (self.riccati_monotone_margin, self.nu_monotone_margin)
                   if m is not None]
        return self.riccati.passed and self.psi.passed and all(m >= 0 for m in margins)


class PenaltyLadder:
    """Strictly increasing penalty levels, all solved on one grid.

    Attributes:
        levels: Penalty levels.
        solutions: Solved levels keyed by L (empty until :func:`run_ladder`).
        checks: Per-level envelope and monotonicity checks.
        mean0: E[xi] the ladder was solved for.
    """

    def __init__(self, levels: Sequence[float] = DEFAULT_LADDER):
        """Initialize a PenaltyLadder.

        Raises:
            ConfigError: If levels are empty, non-positive or not strictly increasing.
        """
        levels = tuple(float(L) for L in levels)
        if not levels:
            raise ConfigError("a ladder needs at least one level", field="ladder")
        if any(not (L > 0 and math.isfinite(L)) for L in levels):
            raise ConfigError("levels must be positive and finite", field="ladder")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError(f"levels must be strictly increasing, got {list(levels)}",
                              field="ladder")
        self.levels = levels
        self.solutions: Dict[float, LevelSolution] = {}
        self.checks: Dict[float, LevelChecks] = {}
        self.grid: Optional[TimeGrid] = None
        self.mean0: Optional[float] = None

    @property
    def is_solved(self) -> bool:
        return all(L in self.solutions for L in self.levels)

    @property
    def largest(self) -> LevelSolution:
        return self.solutions[self.levels[-1]]

    def previous(self, L: float) -> Optional[LevelSolution]:
        i = self.levels.index(L)
        return self.solutions.get(self.levels[i - 1]) if i > 0 else None

    def level(self, L: float) -> LevelSolution:
        return self.solutions[float(L)]

    def __iter__(self) -> Iterator[LevelSolution]:
        return (self.solutions[L] for L in self.levels if L in self.solutions)

    def __len__(self) -> int:
        return len(self.levels)

    def __repr__(self) -> str:
        return f"PenaltyLadder({[f'{L:g}' for L in self.levels]}, solved={len(self.solutions)})"


def _attach_checks(ladder: PenaltyLadder, c: CoefficientSet, tol: Tolerances):
    prev = None
    for level in ladder:
        checks = LevelChecks(check_riccati_envelope(level.riccati, c, tol.envelope_slack),
                             check_psi_envelope(level.flow, c, tol.envelope_slack))
        if prev is not None:
            checks.riccati_monotone_margin = float(np.min(
                level.riccati.values - prev.riccati.values) + tol.riccati_monotone_slack)
            checks.nu_monotone_margin = float(np.min(
                prev.flow.nu - level.flow.nu) + tol.nu_monotone_slack)
        ladder.checks[level.L] = checks
        prev = level


def assemble_ladder(c: CoefficientSet, solutions: Sequence[LevelSolution], mean0: float,
                    tolerances: Optional[Tolerances] = None) -> PenaltyLadder:
    """Ladder of already solved levels on one grid, with per-level checks attached.

    Raises:
        ConfigError: If the levels are not strictly increasing or use different grids.
    """
    if not solutions:
        raise ConfigError("a ladder needs at least one level", field="ladder")
    grid = solutions[0].grid
    if any(not s.grid.same_as(grid) for s in solutions):
        raise ConfigError("every level of a ladder must share one grid", field="grid")
    ladder = PenaltyLadder([s.L for s in solutions])
    ladder.grid = grid
    ladder.mean0 = float(mean0)
    ladder.solutions = {s.L: s for s in solutions}
    _attach_checks(ladder, c, tolerances or Tolerances())
    return ladder


def run_ladder(c: CoefficientSet, ladder: PenaltyLadder, mean0: float, g: TimeGrid,
               tolerances: Optional[Tolerances] = None, threads: int = 1) -> PenaltyLadder:
    """Solve every level of ``ladder`` and attach per-level checks.

    Levels are solved concurrently on ``threads`` workers.

    Returns:
        A new, solved PenaltyLadder.

    Raises:
        LadderError: If a level fails; ``partial`` holds the levels solved before it.
    """
    tol = tolerances or Tolerances()
    solved = PenaltyLadder(ladder.levels)
    solved.grid = g
    solved.mean0 = float(mean0)
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = {L: pool.submit(solve_level, c, L, mean0, g, tol) for L in ladder.levels}
        for L in ladder.levels:
            try:
                solved.solutions[L] = futures[L].result()
            except MfgPenError as e:
                for pending in futures.values():
                    pending.cancel()
                _attach_checks(solved, c, tol)
                raise LadderError(L, e, solved) from e
    _attach_checks(solved, c, tol)
    logger.info("ladder solved: %d levels, L_max=%g", len(solved), solved.levels[-1])
    return solved


class FieldProbe(NamedTuple):
    t: float
    x: float
    nu: float

    @property
    def proved(self) -> bool:
        """Probes with x >= nu >= 0, where u^L is nonnegative and non-decreasing in L."""
        return self.nu >= 0 and self.x >= self.nu

    @property
    def pinned(self) -> bool:
        return self.x == 0 and self.nu == 0


def default_probe_times(g: TimeGrid) -> Tuple[float, ...]:
    return (0.0, 0.25 * g.T, 0.5 * g.T, 0.75 * g.T, g.cutoff)


def field_probes(g: TimeGrid, times: Optional[Sequence[float]] = None,
                 xs: Sequence[float] = (0.0, 0.5, 1.0, 2.0),
                 nus: Sequence[float] = (0.0, 0.5, 1.0, 2.0)) -> List[FieldProbe]:
    """Tensor grid of probes; times default to {0, T/4, T/2, 3T/4, T - eps_T}."""
    times = default_probe_times(g) if times is None else tuple(times)
    return [FieldProbe(float(t), float(x), float(v)) for t in times for x in xs for v in nus]


@dataclass
class LimitField:
    """Probe values of u^L across the ladder and the limit estimate.

    Attributes:
        probes: Probe points.
        levels: Ladder levels (rows of ``values``).
        values: u^L at every probe, shape (levels, probes).
        limit: u^{L_max} at the probes (the limit estimate).
        cauchy_gap: max over probes of |u^{L_max} - u^{L_prev}|.
        monotone_margin: Smallest increment across consecutive levels on proved probes.
        P_inf: P^{L_max} at the probe times.
        extrapolated: Richardson estimate in 1/L, when requested.
    """
    probes: List[FieldProbe]
    levels: Tuple[float, ...]
    values: np.ndarray
    limit: np.ndarray
    cauchy_gap: float
    monotone_margin: float
    P_inf: Dict[float, float] = field(default_factory=dict)
    extrapolated: Optional[np.ndarray] = None

    def outside_proved_region(self) -> List[FieldProbe]:
        return [p for p in self.probes if not p.proved]

    def to_dict(self) -> Dict:
        return {
            "levels": list(self.levels),
            "cauchy_gap": self.cauchy_gap,
            "monotone_margin": self.monotone_margin,
            "P_inf": {f"{t:.17g}": v for t, v in sorted(self.P_inf.items())},
            "probes": [
                {"t": p.t, "x": p.x, "nu": p.nu, "u_limit": float(self.limit[i]),
                 "region": "proved" if p.proved else "outside proved region",
                 **({"u_extrapolated": float(self.extrapolated[i])}
                    if self.extrapolated is not None else {})}
                for i, p in enumerate(self.probes)
            ],
        }


def probe_values(ladder: PenaltyLadder, probes: Sequence[FieldProbe]) -> np.ndarray:
    """u^L at every probe for every solved level, shape (levels, probes)."""
    return np.array([[level.u(p.t, p.x, p.nu) for p in probes] for level in ladder])


def estimate_u_infinity(ladder: PenaltyLadder, probes: Optional[Sequence[FieldProbe]] = None,
                        richardson: bool = False, slack: float = 1e-8) -> LimitField:
    """Estimate u^inf from the largest level, with the Cauchy gap as certificate.

    Args:
        ladder: Solved ladder with at least three levels.
        probes: Probe points; defaults to :func:`field_probes` on the ladder grid.
        richardson: Also extrapolate linearly in 1/L from the two largest levels.
        slack: Allowed decrease of u^L across consecutive levels.

    Raises:
        ConfigError: If the ladder is unsolved or has fewer than three levels.
        PropertyFailureError: If u^L decreases in L beyond ``slack`` at a proved probe.
    """
    if not ladder.is_solved or len(ladder) < 3:
        raise ConfigError("u^inf estimation needs a solved ladder with >= 3 levels",
                          field="ladder")
    probes = list(probes) if probes is not None else field_probes(ladder.grid)
    values = probe_values(ladder, probes)
    increments = np.diff(values, axis=0)
    proved = np.array([p.proved for p in probes])
    margin = float(np.min(increments[:, proved])) if proved.any() else math.inf
    if margin < -slack:
        row, col = np.unravel_index(np.argmin(np.where(proved, increments, np.inf)),
                                    increments.shape)
        raise PropertyFailureError(
            f"u^L decreased by {-increments[row, col]:.3e} from L={ladder.levels[row]:g} "
            f"to L={ladder.levels[row + 1]:g}", probes[col])
    largest = ladder.largest
    extrapolated = None
    if richardson:
        e1, e2 = 1.0 / ladder.levels[-2], 1.0 / ladder.levels[-1]
        extrapolated = (e1 * values[-1] - e2 * values[-2]) / (e1 - e2)
    p_inf = {p.t: largest.P(p.t) for p in probes}
    return LimitField(probes, ladder.levels, values, values[-1].copy(),
                      float(np.max(np.abs(values[-1] - values[-2]))), margin, p_inf,
                      extrapolated)
