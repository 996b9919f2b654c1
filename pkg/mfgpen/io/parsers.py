"""Parsers for mfgpen run configurations.

A run configuration is a JSON document:

    {
      "horizon": 1.0,
      "constants": {"K": 1.0, "delta": 1.0, "eps0": 1.0},
      "coefficients": {"A": 0.0, "B": 1.0, "Q": 1.0, "R": 1.0,
                       "h": {"family": "saturating", "c": -0.2, "s": 1.0}},
      "grid": {"intervals": 2000, "tail_nodes": 200, "tail_fraction": 0.01, "eps_T": 0.001},
      "ladder": [1, 10, 100, 1000, 10000, 100000, 1000000],
      "law": {"family": "uniform", "low": 0.0, "high": 1.0, "count": 64, "seed": 0},
      "probes": {"times": null, "x": [0, 0.5, 1, 2], "nu": [0, 0.5, 1, 2], "slope": null},
      "tolerances": {"shoot": 1e-9},
      "samples_in_csv": false,
      "output": "out"
    }

Only ``horizon``, ``constants``, ``coefficients`` (with B, Q and R) and ``law``
are required. Unknown keys are rejected at every depth.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from ..config import DEFAULT_LADDER, ProbeSpec, RunConfig, Tolerances
from ..errors import ConfigError
from ..model.catalog import build_coupling, build_time_function
from ..model.coefficients import CoefficientSet, InitialLaw
from ..model.grid import TimeGrid

TOP_LEVEL_KEYS = {"horizon", "constants", "coefficients", "grid", "ladder", "law", "probes",
                  "tolerances", "samples_in_csv", "output"}
LAW_KEYS = {
    "samples": ({"values"}, set()),
    "point": ({"value"}, {"count"}),
    "uniform": ({"low", "high"}, {"count", "seed"}),
    "truncated_normal": ({"mean", "std", "low", "high"}, {"count", "seed"}),
}


def _object(value: Any, field: str) -> Dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError("expected an object", field=field)
    return value


def _reject_unknown(decl: Dict[str, Any], allowed: Iterable[str], field: str):
    unknown = sorted(set(decl) - set(allowed))
    if unknown:
        name = f"{field}.{unknown[0]}" if field else unknown[0]
        raise ConfigError(f"unknown key(s) {unknown}", field=name)


def _number(value: Any, field: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field)
    if positive and not value > 0:
        raise ConfigError(f"must be positive, got {value!r}", field=field)
    return float(value)


def _integer(value: Any, field: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"expected an integer >= {minimum}, got {value!r}", field=field)
    return value


def _numbers(value: Any, field: str) -> Tuple[float, ...]:
    if not isinstance(value, list):
        raise ConfigError("expected a list of numbers", field=field)
    return tuple(_number(v, f"{field}[{i}]") for i, v in enumerate(value))


def parse_coefficients(doc: Dict[str, Any]) -> CoefficientSet:
    """Build the coefficient set from ``horizon``, ``constants`` and ``coefficients``."""
    if "horizon" not in doc:
        raise ConfigError("missing required field", field="horizon")
    T = _number(doc["horizon"], "horizon", positive=True)
    constants = _object(doc.get("constants"), "constants")
    _reject_unknown(constants, ("K", "delta", "eps0"), "constants")
    for key in ("K", "delta", "eps0"):
        if key not in constants:
            raise ConfigError("missing required field", field=f"constants.{key}")
    coefficients = _object(doc.get("coefficients"), "coefficients")
    _reject_unknown(coefficients, CoefficientSet.SYMBOLS, "coefficients")
    for key in ("B", "Q", "R"):
        if key not in coefficients:
            raise ConfigError("missing required field", field=f"coefficients.{key}")
    times = {key: build_time_function(coefficients.get(key, 0.0), f"coefficients.{key}")
             for key in ("A", "B", "Q", "R")}
    couplings = {key: build_coupling(coefficients[key], f"coefficients.{key}")
                 for key in ("f", "b", "l", "h") if key in coefficients}
    return CoefficientSet(**times, **couplings,
                          K=_number(constants["K"], "constants.K", positive=True),
                          delta=_number(constants["delta"], "constants.delta", positive=True),
                          eps0=_number(constants["eps0"], "constants.eps0", positive=True),
                          T=T)


def parse_law(decl: Any, seed: Optional[int] = None) -> InitialLaw:
    """Build the initial law; ``seed`` overrides a declared seed."""
    decl = _object(decl, "law")
    family = decl.get("family")
    if family not in LAW_KEYS:
        raise ConfigError(f"unknown law family {family!r}", field="law.family")
    required, optional = LAW_KEYS[family]
    _reject_unknown(decl, required | optional | {"family"}, "law")
    for key in required:
        if key not in decl:
            raise ConfigError("missing required field", field=f"law.{key}")
    count = _integer(decl.get("count", 64), "law.count", minimum=1)
    if family == "samples":
        return InitialLaw(_numbers(decl["values"], "law.values"))
    if family == "point":
        return InitialLaw.point(_number(decl["value"], "law.value"), count)
    seed = seed if seed is not None else _integer(decl.get("seed", 0), "law.seed")
    if family == "uniform":
        return InitialLaw.uniform(_number(decl["low"], "law.low"),
                                  _number(decl["high"], "law.high"), count, seed)
    return InitialLaw.truncated_normal(_number(decl["mean"], "law.mean"),
                                       _number(decl["std"], "law.std"),
                                       _number(decl["low"], "law.low"),
                                       _number(decl["high"], "law.high"), count, seed)


def parse_probes(decl: Any) -> ProbeSpec:
    decl = _object(decl, "probes")
    _reject_unknown(decl, ("times", "x", "nu", "slope"), "probes")
    kwargs = {}
    for key, name in (("times", "times"), ("x", "x"), ("nu", "nu"), ("slope", "slope_times")):
        if decl.get(key) is not None:
            kwargs[name] = _numbers(decl[key], f"probes.{key}")
    return ProbeSpec(**kwargs)


def parse_tolerances(decl: Any) -> Tolerances:
    decl = _object(decl, "tolerances")
    _reject_unknown(decl, Tolerances.names(), "tolerances")
    values = {}
    for key, value in decl.items():
        if key == "picard_max_iter":
            values[key] = _integer(value, f"tolerances.{key}", minimum=1)
        else:
            values[key] = _number(value, f"tolerances.{key}", positive=True)
    return Tolerances(**values)


def parse_grid(decl: Any, T: float, probes: ProbeSpec) -> TimeGrid:
    decl = _object(decl, "grid")
    _reject_unknown(decl, ("intervals", "tail_nodes", "tail_fraction", "eps_T"), "grid")
    extra = tuple(probes.times or ()) + tuple(probes.slope_times or ())
    return TimeGrid.build(
        T,
        intervals=_integer(decl.get("intervals", 2000), "grid.intervals", minimum=1),
        tail_nodes=_integer(decl.get("tail_nodes", 200), "grid.tail_nodes"),
        tail_fraction=_number(decl.get("tail_fraction", 0.01), "grid.tail_fraction",
                              positive=True),
        eps_T=(_number(decl["eps_T"], "grid.eps_T", positive=True)
               if decl.get("eps_T") is not None else None),
        extra_times=[t for t in extra if 0.0 <= t <= T],
    )


def parse_document(doc: Any, seed: Optional[int] = None) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON document.

    Raises:
        ConfigError: Naming the offending field.
    """
    doc = _object(doc, "")
    _reject_unknown(doc, TOP_LEVEL_KEYS, "")
    coefficients = parse_coefficients(doc)
    if "law" not in doc:
        raise ConfigError("missing required field", field="law")
    law = parse_law(doc["law"], seed)
    probes = parse_probes(doc.get("probes", {}))
    grid = parse_grid(doc.get("grid", {}), coefficients.T, probes)
    ladder = (_numbers(doc["ladder"], "ladder") if "ladder" in doc else DEFAULT_LADDER)
    if not ladder:
        raise ConfigError("a ladder needs at least one level", field="ladder")
    if any(b <= a for a, b in zip(ladder, ladder[1:])) or min(ladder) <= 0:
        raise ConfigError(f"levels must be positive and strictly increasing, got "
                          f"{list(ladder)}", field="ladder")
    samples_in_csv = doc.get("samples_in_csv", False)
    if not isinstance(samples_in_csv, bool):
        raise ConfigError("expected true or false", field="samples_in_csv")
    output = doc.get("output", "out")
    if not isinstance(output, str) or not output:
        raise ConfigError("expected a directory name", field="output")
    return RunConfig(coefficients, grid, ladder, law, probes,
                     parse_tolerances(doc.get("tolerances", {})), output, samples_in_csv,
                     doc)


def parse_config(text: str, seed: Optional[int] = None) -> RunConfig:
    """Parse a JSON configuration.

    Raises:
        ConfigError: With line and column for JSON syntax errors, or the dotted
            field path for rejected values.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(e.msg, line=e.lineno, column=e.colno)
    return parse_document(doc, seed)


def load_config(path, seed: Optional[int] = None) -> RunConfig:
    """Read and parse a configuration file.

    Raises:
        ConfigError: If the file is missing or unreadable, or its content is rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}")
    return parse_config(text, seed)


def config_digest(config: RunConfig) -> str:
    """SHA-256 of the canonical JSON document and the effective seed."""
    canonical = json.dumps(config.document, sort_keys=True, separators=(",", ":"))
    seed = config.law.seed if config.law is not None else None
    return hashlib.sha256(f"{canonical}|seed={seed}".encode("utf-8")).hexdigest()
