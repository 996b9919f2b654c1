"""Classical fourth-order Runge-Kutta marching on fixed node sets.

``RK4.march`` takes exactly one step per grid interval. ``RK4.march_refined``
additionally compares each step with two half steps and bisects the interval
until the two agree to ``rtol``; the accepted value is the Richardson
combination of the pair.
"""

import logging
from typing import Callable

import numpy as np

from ..errors import SingularityError

logger = logging.getLogger(__name__)

RHS = Callable[[float, np.ndarray], np.ndarray]


class RK4:
    """Explicit classical Runge-Kutta scheme of order 4.

    Attributes:
        rtol: Relative half-step disagreement accepted by ``march_refined``.
        max_depth: Maximum number of bisections of one grid interval.
    """

    def __init__(self, rtol: float = 1e-10, max_depth: int = 40):
        self.rtol = rtol
        self.max_depth = max_depth
        self.bisections = 0

    @staticmethod
    def step(fun: RHS, t: float, y: np.ndarray, dt: float) -> np.ndarray:
        """One step of size ``dt`` (negative for backward marching)."""
        k1 = fun(t, y)
        k2 = fun(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = fun(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = fun(t + dt, y + dt * k3)
        return y + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0

    def march(self, fun: RHS, nodes: np.ndarray, y_start, backward: bool = False) -> np.ndarray:
        """Integrate over ``nodes`` with one step per interval.

        Args:
            fun: Right-hand side ``fun(t, y)``.
            nodes: Increasing node times.
            y_start: Value at ``nodes[0]`` (forward) or ``nodes[-1]`` (backward).
            backward: March from the last node to the first.

        Returns:
            Array of shape ``(len(nodes),) + shape(y_start)``.
        """
        y = np.asarray(y_start, dtype=float)
        out = np.empty((nodes.size,) + y.shape)
        order = range(nodes.size - 1, 0, -1) if backward else range(nodes.size - 1)
        first = nodes.size - 1 if backward else 0
        out[first] = y
        for i in order:
            j = i - 1 if backward else i + 1
            y = self.step(fun, nodes[i], y, nodes[j] - nodes[i])
            out[j] = y
        return out

    def march_refined(self, fun: RHS, nodes: np.ndarray, y_start,
                      backward: bool = False) -> np.ndarray:
        """Like :meth:`march`, with half-step error control on every interval.

        Raises:
            SingularityError: If an interval needs more than ``max_depth`` bisections
                or the solution stops being finite.
        """
        y = np.asarray(y_start, dtype=float)
        out = np.empty((nodes.size,) + y.shape)
        order = range(nodes.size - 1, 0, -1) if backward else range(nodes.size - 1)
        first = nodes.size - 1 if backward else 0
        out[first] = y
        self.bisections = 0
        for i in order:
            j = i - 1 if backward else i + 1
            y = self._advance(fun, nodes[i], y, nodes[j] - nodes[i], 0)
            out[j] = y
        if self.bisections:
            logger.debug("RK4 refinement bisected %d sub-steps", self.bisections)
        return out

    def _advance(self, fun: RHS, t: float, y: np.ndarray, dt: float, depth: int) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            full = self.step(fun, t, y, dt)
            half = self.step(fun, t, y, 0.5 * dt)
            half = self.step(fun, t + 0.5 * dt, half, 0.5 * dt)
        if np.all(np.isfinite(half)) and np.all(np.isfinite(full)):
            err = np.max(np.abs(half - full))
            if err <= self.rtol * max(1.0, float(np.max(np.abs(half)))):
                return half + (half - full) / 15.0
        if depth >= self.max_depth:
            raise SingularityError(t)
        self.bisections += 1
        mid = self._advance(fun, t, y, 0.5 * dt, depth + 1)
        return self._advance(fun, t + 0.5 * dt, mid, 0.5 * dt, depth + 1)
