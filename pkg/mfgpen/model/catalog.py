"""Parametric catalog of model coefficients.

Time functions (A, B, Q, R and coupling amplitudes):
- constant:  value
- affine:    a0 + a1 * t
- tabulated: piecewise-linear through (times, values)

Couplings f, b, l, h of (t, x), written as amplitude(t) * shape(x):
- zero
- linear:        c * x
- saturating:    c * s * tanh(x / s)
- clipped_cubic: c * (x - x^3 / (3 s^2)) on |x| <= s, c * sign(x) * 2 s / 3 beyond
- tabulated:     bilinear interpolation of samples on a (t, x) grid, derivative
                 by central differences

Every function accepts scalars or numpy arrays and broadcasts.
"""

from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from ..errors import ConfigError


class TimeFamily(Enum):
    """Families of deterministic time functions."""
    CONSTANT = "constant"
    AFFINE = "affine"
    TABULATED = "tabulated"


class CouplingFamily(Enum):
    """Families of mean-field coupling functions."""
    ZERO = "zero"
    LINEAR = "linear"
    SATURATING = "saturating"
    CLIPPED_CUBIC = "clipped_cubic"
    TABULATED = "tabulated"


class TimeFunction:
    """A real function of time on [0, T]."""

    family: TimeFamily

    def __call__(self, t):
        raise NotImplementedError


class ConstantFunction(TimeFunction):
    family = TimeFamily.CONSTANT

    def __init__(self, value: float):
        self.value = float(value)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.value
        return np.full(np.shape(t), self.value)

    def __repr__(self) -> str:
        return f"ConstantFunction({self.value!r})"


class AffineFunction(TimeFunction):
    family = TimeFamily.AFFINE

    def __init__(self, a0: float, a1: float):
        self.a0 = float(a0)
        self.a1 = float(a1)

    def __call__(self, t):
        return self.a0 + self.a1 * t

    def __repr__(self) -> str:
        return f"AffineFunction({self.a0!r}, {self.a1!r})"


class TabulatedTimeFunction(TimeFunction):
    """Piecewise-linear interpolation, held constant outside the table."""

    family = TimeFamily.TABULATED

    def __init__(self, times, values):
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size < 2:
            raise ValueError("tabulated time function needs matching 1-d times and values")
        if np.any(np.diff(times) <= 0):
            raise ValueError("tabulated times must be strictly increasing")
        self.times = times
        self.values = values

    def __call__(self, t):
        out = np.interp(t, self.times, self.values)
        return float(out) if np.ndim(t) == 0 else out

    def __repr__(self) -> str:
        return f"TabulatedTimeFunction(<{self.times.size} points>)"


class CouplingFunction:
    """A mean-field coupling ``amplitude(t) * shape(x)`` with its x-derivative."""

    family: CouplingFamily

    def __init__(self, amplitude: Optional[TimeFunction] = None):
        self.amplitude = amplitude or ConstantFunction(1.0)

    def value(self, t, x):
        return self.amplitude(t) * self._shape(x)

    def derivative(self, t, x):
        return self.amplitude(t) * self._slope(x)

    def linear_slope(self, t) -> Optional[float]:
        """Return the slope when the coupling is linear in x, else None."""
        return None

    def _shape(self, x):
        raise NotImplementedError

    def _slope(self, x):
        raise NotImplementedError


class ZeroCoupling(CouplingFunction):
    family = CouplingFamily.ZERO

    def value(self, t, x):
        return np.zeros(np.broadcast(t, x).shape) if np.ndim(x) or np.ndim(t) else 0.0

    def derivative(self, t, x):
        return self.value(t, x)

    def linear_slope(self, t):
        return 0.0

    def __repr__(self) -> str:
        return "ZeroCoupling()"


class LinearCoupling(CouplingFunction):
    family = CouplingFamily.LINEAR

    def _shape(self, x):
        return x

    def _slope(self, x):
        return np.ones_like(x) if np.ndim(x) else 1.0

    def linear_slope(self, t):
        return self.amplitude(t)

    def __repr__(self) -> str:
        return f"LinearCoupling({self.amplitude!r})"


class SaturatingCoupling(CouplingFunction):
    family = CouplingFamily.SATURATING

    def __init__(self, amplitude: TimeFunction, s: float):
        super().__init__(amplitude)
        if s <= 0:
            raise ValueError("saturation scale s must be positive")
        self.s = float(s)

    def _shape(self, x):
        return self.s * np.tanh(x / self.s)

    def _slope(self, x):
        return 1.0 - np.tanh(x / self.s) ** 2

    def __repr__(self) -> str:
        return f"SaturatingCoupling({self.amplitude!r}, s={self.s!r})"


class ClippedCubicCoupling(CouplingFunction):
    family = CouplingFamily.CLIPPED_CUBIC

    def __init__(self, amplitude: TimeFunction, s: float):
        super().__init__(amplitude)
        if s <= 0:
            raise ValueError("clipping scale s must be positive")
        self.s = float(s)

    def _shape(self, x):
        inside = x - x ** 3 / (3.0 * self.s ** 2)
        outside = np.sign(x) * 2.0 * self.s / 3.0
        return np.where(np.abs(x) <= self.s, inside, outside)

    def _slope(self, x):
        return np.where(np.abs(x) <= self.s, 1.0 - (x / self.s) ** 2, 0.0)

    def value(self, t, x):
        out = super().value(t, x)
        return float(out) if np.ndim(out) == 0 else out

    def derivative(self, t, x):
        out = super().derivative(t, x)
        return float(out) if np.ndim(out) == 0 else out

    def __repr__(self) -> str:
        return f"ClippedCubicCoupling({self.amplitude!r}, s={self.s!r})"


class TabulatedCoupling(CouplingFunction):
    """Samples on a (t, x) tensor grid; linear extrapolation off the grid."""

    family = CouplingFamily.TABULATED
    FD_STEP = 1e-5

    def __init__(self, times, xs, values):
        super().__init__(ConstantFunction(1.0))
        times = np.asarray(times, dtype=float)
        xs = np.asarray(xs, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (times.size, xs.size):
            raise ValueError(
                f"tabulated values must have shape {(times.size, xs.size)}, got {values.shape}")
        self._interp = RegularGridInterpolator((times, xs), values,
                                               bounds_error=False, fill_value=None)

    def value(self, t, x):
        t_b, x_b = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
        out = self._interp(np.stack([t_b.ravel(), x_b.ravel()], axis=-1)).reshape(t_b.shape)
        return float(out) if out.ndim == 0 else out

    def derivative(self, t, x):
        step = self.FD_STEP * np.maximum(1.0, np.abs(x))
        return (self.value(t, x + step) - self.value(t, x - step)) / (2.0 * step)

    def __repr__(self) -> str:
        return "TabulatedCoupling(<grid>)"


def _require(decl: Dict[str, Any], keys, field: str):
    allowed = set(keys) | {"family"}
    unknown = sorted(set(decl) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown}", field=field)
    for key in keys:
        if key not in decl:
            raise ConfigError(f"missing required field '{key}'", field=field)


def _number(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field)
    return float(value)


def build_time_function(decl: Any, field: str = "time") -> TimeFunction:
    """Build a time function from a declaration.

    A bare number is shorthand for ``{"family": "constant", "value": number}``.

    Raises:
        ConfigError: If the family is unknown or parameters are missing or invalid.
    """
    if isinstance(decl, (int, float)) and not isinstance(decl, bool):
        return ConstantFunction(decl)
    if not isinstance(decl, dict) or "family" not in decl:
        raise ConfigError("expected a number or an object with a 'family'", field=field)
    try:
        family = TimeFamily(decl["family"])
    except ValueError:
        raise ConfigError(f"unknown time family {decl['family']!r}", field=f"{field}.family")

    if family is TimeFamily.CONSTANT:
        _require(decl, ["value"], field)
        return ConstantFunction(_number(decl["value"], f"{field}.value"))
    if family is TimeFamily.AFFINE:
        _require(decl, ["a0", "a1"], field)
        return AffineFunction(_number(decl["a0"], f"{field}.a0"),
                              _number(decl["a1"], f"{field}.a1"))
    _require(decl, ["times", "values"], field)
    try:
        return TabulatedTimeFunction(decl["times"], decl["values"])
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), field=field)


def build_coupling(decl: Any, field: str = "coupling") -> CouplingFunction:
    """Build a coupling function from a declaration.

    Raises:
        ConfigError: If the family is unknown or parameters are missing or invalid.
    """
    if not isinstance(decl, dict) or "family" not in decl:
        raise ConfigError("expected an object with a 'family'", field=field)
    try:
        family = CouplingFamily(decl["family"])
    except ValueError:
        raise ConfigError(f"unknown coupling family {decl['family']!r}",
                          field=f"{field}.family")

    try:
        if family is CouplingFamily.ZERO:
            _require(decl, [], field)
            return ZeroCoupling()
        if family is CouplingFamily.LINEAR:
            _require(decl, ["c"], field)
            return LinearCoupling(build_time_function(decl["c"], f"{field}.c"))
        if family is CouplingFamily.SATURATING:
            _require(decl, ["c", "s"], field)
            return SaturatingCoupling(build_time_function(decl["c"], f"{field}.c"),
                                      _number(decl["s"], f"{field}.s"))
        if family is CouplingFamily.CLIPPED_CUBIC:
            _require(decl, ["c", "s"], field)
            return ClippedCubicCoupling(build_time_function(decl["c"], f"{field}.c"),
                                        _number(decl["s"], f"{field}.s"))
        _require(decl, ["times", "x", "values"], field)
        return TabulatedCoupling(decl["times"], decl["x"], decl["values"])
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(str(e), field=field)
