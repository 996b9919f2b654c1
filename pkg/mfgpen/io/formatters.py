"""Formatters for mfgpen output artifacts.

CSV files start with a ``# config_digest: <sha256>`` line followed by a header
row; numbers carry 17 significant digits and rows end with a newline. JSON files
are written with sorted keys so identical runs produce identical bytes.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import numpy as np

from ..solvers.field import LevelChecks, LevelSolution, LimitField
from ..solvers.trajectory import CostReport, TrajectoryBundle


def format_number(value: float) -> str:
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


def jsonable(value: Any) -> Any:
    """Convert numpy scalars, arrays and non-finite floats into JSON-safe values."""
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else format_number(value)
    return value


def format_json(data: Mapping[str, Any]) -> str:
    return json.dumps(jsonable(data), indent=2, sort_keys=True) + "\n"


def format_csv(columns: Mapping[str, Sequence[float]], digest: str) -> str:
    """Tidy CSV of equally long numeric columns behind a ``# config_digest:`` comment line."""
    names = list(columns)
    rows = [f"# config_digest: {digest}", ",".join(names)]
    data = [np.asarray(columns[name], dtype=float) for name in names]
    for i in range(len(data[0]) if data else 0):
        rows.append(",".join(format_number(col[i]) for col in data))
    return "\n".join(rows) + "\n"


def level_name(L: float) -> str:
    return f"level_{L:g}"


def level_columns(level: LevelSolution, bundle: TrajectoryBundle,
                  samples_in_csv: bool = False) -> Dict[str, np.ndarray]:
    flow = level.flow
    columns = {"t": level.grid.nodes, "P": level.riccati.values, "nu": flow.nu, "m": flow.m,
               "phi": flow.phi, "psi": flow.psi, "X_mean": bundle.X_mean,
               "Y_mean": bundle.Y_mean, "alpha_mean": bundle.alpha_mean}
    if samples_in_csv:
        columns.update({f"X_{i}": bundle.X[i] for i in range(bundle.xi.size)})
    return columns


def level_summary(level: LevelSolution, bundle: TrajectoryBundle, checks: Optional[LevelChecks],
                  cost: CostReport, digest: str) -> Dict[str, Any]:
    flow = level.flow
    summary = {
        "config_digest": digest,
        "L": level.L,
        "method": flow.method,
        "iterations": flow.iterations,
        "shooting_residual": flow.shooting_residual,
        "initial_residual": flow.initial_residual,
        "P0": float(level.riccati.values[0]),
        "reciprocal_from": level.riccati.reciprocal_from,
        "terminal_state": bundle.summary(),
        "cost": cost.to_dict(),
    }
    if checks is not None:
        summary["riccati_envelope"] = checks.riccati.to_dict()
        summary["psi_envelope"] = checks.psi.to_dict()
        summary["riccati_monotone_margin"] = checks.riccati_monotone_margin
        summary["nu_monotone_margin"] = checks.nu_monotone_margin
    return summary


def probe_label(t: float, x: float, nu: float) -> str:
    return f"u(t={t:g};x={x:g};nu={nu:g})"


def ladder_columns(bundles: Sequence[TrajectoryBundle], costs: Sequence[CostReport],
                   limit_field: Optional[LimitField]) -> Dict[str, List[float]]:
    """One row per level: L, mean X_T, J^L and u^L at the t = 0 probes."""
    columns: Dict[str, List[float]] = {
        "L": [b.L for b in bundles],
        "X_T_mean": [float(np.mean(b.terminal_state)) for b in bundles],
        "J": [r.expected for r in costs],
    }
    if limit_field is not None:
        for j, p in enumerate(limit_field.probes):
            if p.t == 0.0:
                columns[probe_label(p.t, p.x, p.nu)] = list(limit_field.values[:, j])
    return columns


def limit_columns(limit: TrajectoryBundle, samples_in_csv: bool = False) -> Dict[str, np.ndarray]:
    columns = {"t": limit.times, "nu": limit.nu, "X_mean": limit.X_mean,
               "Y_mean": limit.Y_mean, "alpha_mean": limit.alpha_mean}
    if samples_in_csv:
        for i in range(limit.xi.size):
            columns[f"X_{i}"] = limit.X[i]
            columns[f"Y_{i}"] = limit.Y[i]
            columns[f"alpha_{i}"] = limit.alpha[i]
    return columns


def limit_summary(limit: TrajectoryBundle, limit_field: Optional[LimitField],
                  cost: CostReport, digest: str) -> Dict[str, Any]:
    return {
        "config_digest": digest,
        "limit": limit.summary(),
        "terminal_states": limit.terminal_state,
        "constrained_cost": cost.to_dict(),
        "field": None if limit_field is None else limit_field.to_dict(),
    }


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return path
