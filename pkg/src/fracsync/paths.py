"""Discretized driving paths and their grids.

Paths live on uniform grids that always contain the node t = 0.  Grid nodes
are addressed by integer indices (multiples of dt), which keeps all shift and
concatenation arithmetic exact: no accumulated floating-point drift in node
locations.  A "past path" has t_max = 0 and represents an element of the
noise space (anchored so that omega(0) = 0); future segments are stored the
same way, time-reflected.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolationError

_REL_TOL = 1e-9


def _as_index(t: float, dt: float, what: str) -> int:
    """Convert a time to an integer grid index, insisting it is a multiple of dt."""
    k = round(t / dt)
    if abs(k * dt - t) > _REL_TOL * max(dt, abs(t)):
        raise ContractViolationError(f"{what}={t!r} is not a multiple of dt={dt!r}")
    return k


@dataclass(frozen=True)
class Grid:
    """Uniform time grid t_k = k * dt for integer k in [i_min, i_max], with 0 a node."""

    dt: float
    i_min: int
    i_max: int

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ContractViolationError(f"dt must be positive and finite, got {self.dt}")
        if self.i_min > 0 or self.i_max < 0:
            raise ContractViolationError(
                f"grid must contain t=0: i_min={self.i_min}, i_max={self.i_max}"
            )
        if self.i_max < self.i_min:
            raise ContractViolationError("empty grid")

    @classmethod
    def from_range(cls, t_min: float, t_max: float, dt: float) -> "Grid":
        return cls(dt, _as_index(t_min, dt, "t_min"), _as_index(t_max, dt, "t_max"))

    @classmethod
    def past(cls, span: float, dt: float) -> "Grid":
        """Grid [-span, 0]."""
        return cls(dt, -_as_index(span, dt, "span"), 0)

    @classmethod
    def forward(cls, horizon: float, dt: float) -> "Grid":
        """Grid [0, horizon]."""
        return cls(dt, 0, _as_index(horizon, dt, "horizon"))

    @classmethod
    def two_sided(cls, span: float, horizon: float, dt: float) -> "Grid":
        return cls(dt, -_as_index(span, dt, "span"), _as_index(horizon, dt, "horizon"))

    @property
    def n(self) -> int:
        return self.i_max - self.i_min + 1

    @property
    def t_min(self) -> float:
        return self.i_min * self.dt

    @property
    def t_max(self) -> float:
        return self.i_max * self.dt

    @property
    def zero_index(self) -> int:
        """Array position of the node t = 0."""
        return -self.i_min

    def times(self) -> np.ndarray:
        return np.arange(self.i_min, self.i_max + 1, dtype=np.float64) * self.dt

    def position(self, t: float) -> int:
        """Array position of the grid node at time t (t must be a node)."""
        k = _as_index(t, self.dt, "t")
        if not (self.i_min <= k <= self.i_max):
            raise ContractViolationError(f"t={t!r} outside grid [{self.t_min}, {self.t_max}]")
        return k - self.i_min

    def is_past(self) -> bool:
        return self.i_max == 0


class PathKind(enum.Enum):
    WIENER = "wiener"
    FRACTIONAL = "fractional"


@dataclass(frozen=True)
class NoisePath:
    """Sampled path on a grid: values[k] is the R^d state at node k.

    Anchored paths satisfy values(0) == 0 exactly, matching the convention of
    the noise space where every element vanishes at the origin of time.
    """

    grid: Grid
    values: np.ndarray
    kind: PathKind
    hurst: float
    anchored: bool = True
    _skip_checks: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, order="C")
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] != self.grid.n:
            raise ContractViolationError(
                f"values shape {np.shape(self.values)} does not match grid (n={self.grid.n})"
            )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        if not (0.0 < self.hurst < 1.0):
            raise ContractViolationError(f"Hurst index must lie in (0,1), got {self.hurst}")
        if self._skip_checks:
            return
        if not np.all(np.isfinite(values)):
            raise ContractViolationError("path contains non-finite values")
        if self.anchored and np.any(values[self.grid.zero_index] != 0.0):
            raise ContractViolationError("anchored path must vanish at t=0")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def value_at(self, t: float) -> np.ndarray:
        return self.values[self.grid.position(t)]

    def increments(self, t_from: float, t_to: float) -> np.ndarray:
        """Per-step increments over the node range [t_from, t_to], shape (steps, d)."""
        a = self.grid.position(t_from)
        b = self.grid.position(t_to)
        if b < a:
            raise ContractViolationError("t_to must not precede t_from")
        return np.diff(self.values[a : b + 1], axis=0)

    def restricted(self, t_from: float, t_to: float, *, reanchor: bool = False) -> "NoisePath":
        """Sub-path on [t_from, t_to]; optionally re-anchored at its value at 0."""
        a = self.grid.position(t_from)
        b = self.grid.position(t_to)
        sub = Grid(self.grid.dt, self.grid.i_min + a, self.grid.i_min + b)
        vals = self.values[a : b + 1]
        if reanchor:
            vals = vals - vals[sub.zero_index]
        anchored = bool(np.all(vals[sub.zero_index] == 0.0))
        return NoisePath(sub, vals, self.kind, self.hurst, anchored=anchored)
