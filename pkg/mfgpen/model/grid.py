"""Time partitions of [0, T] graded towards the terminal time."""

from typing import Iterable, Optional

import numpy as np

from ..errors import ConfigError

DEFAULT_INTERVALS = 2000
DEFAULT_TAIL_NODES = 200
DEFAULT_TAIL_FRACTION = 0.01
DEFAULT_TAIL_DEPTH = 1e-8


class TimeGrid:
    """Strictly increasing nodes from ``start`` to ``T`` with a terminal cutoff.

    Quantities with a 1/(T - t) singularity are only evaluated at nodes
    ``t <= T - eps_T``.

    Attributes:
        nodes: Node times; the first is ``start`` (0 for full grids), the last is T.
        eps_T: Terminal cutoff in (0, T/10).
        T: Horizon.
    """

    def __init__(self, nodes: Iterable[float], eps_T: float, T: Optional[float] = None):
        """Initialize a TimeGrid.

        Raises:
            ConfigError: If the nodes are not strictly increasing, do not end at T,
                or eps_T lies outside (0, T/10).
        """
        nodes = np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes,
                           dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ConfigError("a time grid needs at least two nodes", field="grid")
        if np.any(np.diff(nodes) <= 0):
            raise ConfigError("grid nodes must be strictly increasing", field="grid")
        T = float(nodes[-1]) if T is None else float(T)
        if nodes[-1] != T:
            raise ConfigError(f"last node {nodes[-1]!r} differs from T={T!r}", field="grid")
        if not 0.0 < eps_T < T / 10.0:
            raise ConfigError(f"eps_T must lie in (0, T/10), got {eps_T!r}", field="grid.eps_T")
        self.nodes = nodes
        self.nodes.setflags(write=False)
        self.eps_T = float(eps_T)
        self.T = T

    @classmethod
    def build(cls, T: float, intervals: int = DEFAULT_INTERVALS,
              tail_nodes: int = DEFAULT_TAIL_NODES,
              tail_fraction: float = DEFAULT_TAIL_FRACTION,
              eps_T: Optional[float] = None,
              extra_times: Iterable[float] = (),
              tail_depth: float = DEFAULT_TAIL_DEPTH) -> "TimeGrid":
        """Uniform nodes plus geometrically graded nodes in the last ``tail_fraction``.

        The graded gaps to T run from ``tail_fraction * T`` down to ``tail_depth * T``.
        ``T - eps_T`` and the quarter points of [0, T] are always nodes, as are
        any ``extra_times``.

        Raises:
            ConfigError: On non-positive sizes or horizon.
        """
        if T <= 0:
            raise ConfigError("horizon must be positive", field="horizon")
        if intervals < 1 or tail_nodes < 0:
            raise ConfigError("intervals must be >= 1 and tail_nodes >= 0", field="grid")
        if not 0.0 < tail_fraction < 1.0:
            raise ConfigError("tail_fraction must lie in (0, 1)", field="grid.tail_fraction")
        eps_T = 1e-3 * T if eps_T is None else float(eps_T)

        parts = [np.linspace(0.0, T, intervals + 1)]
        if tail_nodes > 0:
            gaps = T * tail_fraction * (tail_depth / tail_fraction) ** (
                np.arange(tail_nodes) / max(tail_nodes - 1, 1))
            parts.append(T - gaps)
        mandatory = [T - eps_T, 0.25 * T, 0.5 * T, 0.75 * T]
        parts.append(np.asarray(mandatory + [float(t) for t in extra_times], dtype=float))
        nodes = np.unique(np.concatenate(parts))
        nodes = nodes[(nodes >= 0.0) & (nodes <= T)]
        nodes = _merge_close(nodes, 1e-13 * T, keep=np.asarray(mandatory))
        nodes[0], nodes[-1] = 0.0, T
        return cls(nodes, eps_T, T)

    @property
    def start(self) -> float:
        return float(self.nodes[0])

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def cutoff(self) -> float:
        return self.T - self.eps_T

    def evaluation_mask(self) -> np.ndarray:
        """Nodes with t <= T - eps_T."""
        return self.nodes <= self.cutoff + 1e-12 * self.T

    def node_index(self, t: float, atol: Optional[float] = None) -> Optional[int]:
        """Index of the node equal to ``t`` within ``atol``, else None."""
        atol = 1e-12 * self.T if atol is None else atol
        i = int(np.searchsorted(self.nodes, t))
        for j in (i - 1, i):
            if 0 <= j < self.size and abs(self.nodes[j] - t) <= atol:
                return j
        return None

    def restrict(self, t0: float) -> "TimeGrid":
        """Sub-grid on [t0, T]; ``t0`` becomes the first node.

        Raises:
            ConfigError: If t0 is not in [start, T - eps_T].
        """
        if not self.start <= t0 <= self.cutoff + 1e-12 * self.T:
            raise ConfigError(f"restart time {t0!r} outside [{self.start}, T - eps_T]")
        j = self.node_index(t0)
        if j is not None:
            return TimeGrid(self.nodes[j:].copy(), self.eps_T, self.T)
        tail = self.nodes[self.nodes > t0 + 1e-12 * self.T]
        return TimeGrid(np.concatenate([[t0], tail]), self.eps_T, self.T)

    def same_as(self, other: "TimeGrid") -> bool:
        return (self is other or
                (self.T == other.T and self.eps_T == other.eps_T
                 and self.size == other.size and np.array_equal(self.nodes, other.nodes)))

    def __repr__(self) -> str:
        return (f"TimeGrid(start={self.start}, T={self.T}, nodes={self.size}, "
                f"eps_T={self.eps_T})")


def _merge_close(nodes: np.ndarray, atol: float, keep: np.ndarray) -> np.ndarray:
    """Drop nodes closer than ``atol`` to their predecessor, preferring ``keep`` values."""
    out = [nodes[0]]
    for t in nodes[1:]:
        if t - out[-1] > atol:
            out.append(t)
        elif np.any(np.abs(keep - t) <= atol):
            out[-1] = t
    return np.asarray(out)
