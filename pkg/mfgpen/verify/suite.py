"""Full verification suite.

Runs every check in a fixed order and collects the results in one report. A
failing assumption check gates the rest: downstream checks are recorded as
skipped with the reason ``assumptions_failed``.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from ..config import ProbeSpec, Tolerances
from ..model.coefficients import CoefficientSet, InitialLaw, ProbeGrid, validate_assumptions
from ..model.grid import TimeGrid
from ..solvers.field import PenaltyLadder, field_probes, run_ladder
from ..solvers.trajectory import build_constrained_solution, evaluate_costs, simulate_level
from .checks import (CheckResult, CheckStatus, check_assumptions, check_best_response,
                     check_bvp_residuals, check_constrained_fbsde_residual,
                     check_cost_monotone, check_equilibrium_consistency,
                     check_phi_slope_crosscheck, check_product_decay,
                     check_psi_envelopes, check_riccati_envelopes, check_riccati_monotone,
                     check_terminal_constraint, check_terminal_decay_fit,
                     check_trajectory_shape, check_u_ladder)

logger = logging.getLogger(__name__)

CHECK_ORDER = (
    "assumptions",
    "riccati_envelope",
    "riccati_monotone",
    "psi_envelope",
    "bvp_residual",
    "u_ladder",
    "trajectory_shape",
    "equilibrium_consistency",
    "terminal_decay_fit",
    "terminal_constraint",
    "cost_monotone",
    "best_response",
    "constrained_residual",
    "product_decay",
    "phi_slope_crosscheck",
)


@dataclass
class VerificationReport:
    """Ordered check results of one suite run.

    Attributes:
        checks: One result per name in :data:`CHECK_ORDER`.
        config_digest: Provenance digest of the configuration, if known.
        note: Reminder that assumptions are verified on samples only.
    """
    checks: List[CheckResult]
    config_digest: Optional[str] = None
    note: str = "sampled verification"
    summary: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if c.status is CheckStatus.FAIL]

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {"config_digest": self.config_digest, "passed": self.passed, "note": self.note,
                "summary": self.summary, "checks": [c.to_dict() for c in self.checks]}


def _slope_probes(g: TimeGrid, mean0: float, times: Optional[Sequence[float]]):
    nu = mean0 if mean0 > 0 else 1.0
    times = (0.0, 0.5 * g.T, g.cutoff) if times is None else tuple(times)
    return [(float(t), float(nu)) for t in times]


def _crosscheck_level(ladder: PenaltyLadder):
    """Level closest to L = 10 on a log scale."""
    return min(ladder, key=lambda level: abs(math.log10(level.L) - 1.0))


def _gated(results: List[CheckResult], reason: str) -> List[CheckResult]:
    done = {r.name for r in results}
    return results + [CheckResult.skipped(name, reason) for name in CHECK_ORDER
                      if name not in done]


def run_full_suite(c: CoefficientSet, ladder: Union[PenaltyLadder, Sequence[float]],
                   law: InitialLaw, g: TimeGrid, probes: Optional[ProbeSpec] = None,
                   tolerances: Optional[Tolerances] = None, threads: int = 1,
                   config_digest: Optional[str] = None) -> VerificationReport:
    """Run every check and return the report.

    Args:
        c: Coefficient set.
        ladder: A solved ladder, or levels to solve.
        law: Initial law.
        g: Time grid.
        probes: Field and slope probe coordinates.
        tolerances: Numeric thresholds.
        threads: Workers for the ladder solve.
        config_digest: Digest embedded in the report.

    Raises:
        LadderError: If a level cannot be solved.
        ConfigError: If inputs are inconsistent.
    """
    tol = tolerances or Tolerances()
    probes = probes or ProbeSpec()
    results: List[CheckResult] = []

    validation = validate_assumptions(c, ProbeGrid.default(c, law), law)
    results.append(check_assumptions(validation))
    if not validation.passed:
        logger.warning("assumptions failed; skipping downstream checks")
        return VerificationReport(_gated(results, "assumptions_failed"), config_digest)

    if not isinstance(ladder, PenaltyLadder) or not ladder.is_solved:
        levels = ladder.levels if isinstance(ladder, PenaltyLadder) else ladder
        ladder = run_ladder(c, PenaltyLadder(levels), law.mean, g, tol, threads)

    results.append(check_riccati_envelopes(ladder, tol))
    results.append(check_riccati_monotone(ladder, tol))
    results.append(check_psi_envelopes(ladder, tol))
    results.append(check_bvp_residuals(ladder, c, tol))
    field_points = field_probes(g, probes.times, probes.x, probes.nu)
    results.append(check_u_ladder(ladder, c, field_points, tol))

    bundles = [simulate_level(c, level.L, law, level.riccati, level.flow, g) for level in ladder]
    limit = build_constrained_solution(c, ladder, law, g, tol, enforce_terminal=False)
    results.append(check_trajectory_shape(bundles + [limit], c, law.mean, tol))
    results.append(check_equilibrium_consistency(bundles, law.mean, tol))
    results.append(check_terminal_decay_fit(limit, tol))
    results.append(check_terminal_constraint(limit, c, law.mean, tol))
    costs = [evaluate_costs(b, c) for b in bundles]
    limit_cost = evaluate_costs(limit, c)
    results.append(check_cost_monotone(costs, limit_cost, tol, coarse_limit=bool(limit.warnings)))
    results.append(check_best_response(bundles[-1], c, tol))
    results.append(check_constrained_fbsde_residual(limit, c, g, tol))
    results.append(check_product_decay(limit, g, tol))
    results.append(check_phi_slope_crosscheck(
        c, _crosscheck_level(ladder), _slope_probes(g, law.mean, probes.slope_times), tol))

    summary = {
        "levels": list(ladder.levels),
        "P0": {f"{level.L:g}": float(level.riccati.values[0]) for level in ladder},
        "terminal_state_mean": {f"{b.L:g}": float(np.mean(b.terminal_state)) for b in bundles},
        "limit": limit.summary(),
        "costs": {f"{r.L:g}": r.expected for r in costs},
        "constrained_cost": limit_cost.expected,
    }
    report = VerificationReport(results, config_digest, summary=summary)
    for failed in report.failures():
        logger.info("check %s failed (margin %s at %s)", failed.name, failed.worst_margin,
                    failed.location)
    return report

