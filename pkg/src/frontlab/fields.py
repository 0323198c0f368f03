"""Spatial grids and field snapshots on a truncated moving window."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [x_min, x_max] with n nodes."""

    x_min: float
    x_max: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least 2 nodes")
        if self.x_max <= self.x_min:
            raise ValueError("empty grid interval")

    @property
    def h(self) -> float:
        return (self.x_max - self.x_min) / (self.n - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n)


@dataclass(frozen=True)
class FieldState:
    """A spatial profile u(.) at time t, with far-field constants.

    The far-field pair (u_left, u_right) extends u beyond the window for
    convolutions; front runs use (1, 0).  The optional co-state w tracks
    the spatial derivative u_x.
    """

    t: float
    x: np.ndarray
    u: np.ndarray
    u_left: float = 1.0
    u_right: float = 0.0
    w: np.ndarray | None = None

    def __post_init__(self):
        if self.x.shape != self.u.shape:
            raise ValueError("x and u shape mismatch")
        if self.w is not None and self.w.shape != self.u.shape:
            raise ValueError("w shape mismatch")

    @property
    def h(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def n(self) -> int:
        return self.u.size

    def with_(self, **kw) -> "FieldState":
        return replace(self, **kw)

    def check_range(self, eps: float = 1e-8) -> bool:
        return bool(np.all(self.u >= -eps) and np.all(self.u <= 1.0 + eps))

    def is_monotone(self, tol: float = 1e-10) -> bool:
        return bool(np.all(np.diff(self.u) <= tol))


def constant_field(grid: Grid, value: float, t: float = 0.0) -> FieldState:
    u = np.full(grid.n, float(value))
    return FieldState(t=t, x=grid.x, u=u, u_left=value, u_right=value)


def smoothed_step(grid: Grid, center: float = 0.0, width: float = 2.0,
                  t: float = 0.0) -> FieldState:
    """Front-like initial datum decaying from 1 to 0 around `center`."""
    u = 0.5 * (1.0 - np.tanh((grid.x - center) / width))
    return FieldState(t=t, x=grid.x, u=u, u_left=1.0, u_right=0.0)
