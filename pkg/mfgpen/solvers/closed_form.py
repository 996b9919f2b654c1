"""Closed-form solutions of the zero-coupling model with A = 0, B = Q = R = 1.

With these coefficients the Riccati equation dP/dt = P^2 - 1, P_T = L, has the
solutions coth, 1 and tanh of (T - t + const) for L > 1, L = 1 and L < 1, and the
optimal state is X_t = xi * G_t with G the matching sinh, exp or cosh ratio.
"""

import math

import numpy as np


def _shift(L: float):
    if math.isinf(L):
        return 0.0
    if L > 1.0:
        return math.atanh(1.0 / L)  # arcoth L
    if L < 1.0:
        return math.atanh(L)
    return None


def riccati_coth(t, L: float, T: float = 1.0):
    """P^L_t for the unit-coefficient model (L = inf gives the unconstrained limit)."""
    tau = T - np.asarray(t, dtype=float)
    c = _shift(L)
    if c is None:
        out = np.ones_like(tau)
    elif L > 1.0:
        with np.errstate(divide="ignore"):
            out = 1.0 / np.tanh(tau + c)
    else:
        out = np.tanh(tau + c)
    return float(out) if out.ndim == 0 else out


def state_ratio(t, L: float, T: float = 1.0):
    """G_t = X_t / xi for the unit-coefficient model."""
    t = np.asarray(t, dtype=float)
    tau = T - t
    c = _shift(L)
    if c is None:
        out = np.exp(-t)
    elif L > 1.0:
        out = np.sinh(tau + c) / math.sinh(T + c)
    else:
        out = np.cosh(tau + c) / math.cosh(T + c)
    return float(out) if out.ndim == 0 else out


def terminal_state(L: float, xi: float = 1.0, T: float = 1.0) -> float:
    """X^L_T = xi * sinh(arcoth L) / sinh(T + arcoth L) for L > 1."""
    return xi * state_ratio(T, L, T)


def optimal_cost(L: float, xi: float = 1.0, T: float = 1.0) -> float:
    """J^L = 1/2 P^L_0 xi^2."""
    return 0.5 * riccati_coth(0.0, L, T) * xi * xi


def optimal_paths(t, L: float, xi: float = 1.0, T: float = 1.0):
    """Optimal state X = xi G and adjoint Y = P X of the unit-coefficient model."""
    X = xi * np.asarray(state_ratio(t, L, T), dtype=float)
    return X, np.asarray(riccati_coth(t, L, T), dtype=float) * X
