"""Typed run configuration.

``RunConfig`` is produced by :func:`mfgpen.io.parsers.parse_config`; ``Tolerances``
collects every numeric threshold a run uses so that a config file can override any
of them by name.
"""

from dataclasses import dataclass, field, fields
from typing import Any, Dict, Optional, Tuple

from .model.coefficients import CoefficientSet, InitialLaw
from .model.grid import TimeGrid

DEFAULT_LADDER = tuple(10.0 ** k for k in range(7))


@dataclass(frozen=True)
class Tolerances:
    rho: float = 1e-12
    riccati_rtol: float = 1e-10
    shoot: float = 1e-9
    envelope_slack: float = 1e-6
    riccati_monotone_slack: float = 1e-9
    nu_monotone_slack: float = 1e-9
    u_monotone_slack: float = 1e-8
    u_nonnegative_slack: float = 1e-10
    u_bound_slack: float = 1e-6
    path_slack: float = 1e-10
    terminal_adjoint_rel: float = 1e-8
    adjoint_rederive: float = 1e-6
    path_reintegrate: float = 1e-6
    mean_consistency: float = 1e-8
    equilibrium: float = 1e-8
    terminal_factor: float = 10.0
    decay_fit_min_level: float = 1e2
    decay_fit_band: float = 0.15
    cost_monotone_slack: float = 1e-6
    cost_sandwich_rel: float = 1e-3
    best_response_step: float = 1e-2
    best_response_slack: float = 1e-8
    residual_safety: float = 100.0
    residual_floor: float = 1e-8
    product_decay_fraction: float = 1e-3
    product_decay_slack: float = 1e-9
    slope_step: float = 1e-4
    slope_abs: float = 1e-4
    slope_rel: float = 1e-2
    picard_relaxation: float = 0.5
    picard_max_iter: int = 500

    @classmethod
    def names(cls) -> Tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def to_dict(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in self.names()}


@dataclass(frozen=True)
class ProbeSpec:
    """Probe coordinates for the decoupling field and the slope cross-check.

    ``times`` of None means the default quarter points plus T - eps_T.
    """
    times: Optional[Tuple[float, ...]] = None
    x: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    nu: Tuple[float, ...] = (0.0, 0.5, 1.0, 2.0)
    slope_times: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class RunConfig:
    """Everything one CLI invocation needs.

    Attributes:
        coefficients: Model data.
        grid: Time grid shared by every level.
        ladder: Penalty levels, strictly increasing.
        law: Initial law.
        probes: Field probe specification.
        tolerances: Numeric thresholds.
        output: Output directory.
        samples_in_csv: Write per-sample state columns in level CSV files.
        document: The parsed JSON document, used for the config digest.
    """
    coefficients: CoefficientSet
    grid: TimeGrid
    ladder: Tuple[float, ...] = DEFAULT_LADDER
    law: Optional[InitialLaw] = None
    probes: ProbeSpec = field(default_factory=ProbeSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    output: str = "out"
    samples_in_csv: bool = False
    document: Dict[str, Any] = field(default_factory=dict)
