"""Interface tracking and front diagnostics.

Level crossings are located by monotone piecewise-linear interpolation,
which keeps the crossing map order-preserving.  Tail rates come from
least-squares lines on the log-magnitude of the far field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import FieldState
from .kernels import Kernel, convolve, iterated_kernel


class FrontError(ValueError):
    pass


def locate_level(field: FieldState, lam: float, strict: bool = True) -> float:
    """Crossing position of a front profile by piecewise-linear interpolation.

    With strict=True the field must be monotone nonincreasing and the
    crossing is unique; strict=False returns the first downward crossing
    (used for window steering of transiently perturbed profiles).
    """
    u = field.u
    if not (field.u_left > lam > field.u_right) or u[0] <= lam or u[-1] >= lam:
        raise FrontError(f"level {lam} not bracketed by the field")
    if strict and not field.is_monotone(tol=1e-8):
        raise FrontError("field is not monotone nonincreasing")
    # u decreasing: first index where u < lam
    j = int(np.argmax(u < lam))
    frac = (u[j - 1] - lam) / (u[j - 1] - u[j])
    return float(field.x[j - 1] + frac * (field.x[j] - field.x[j - 1]))


def interface_width(field: FieldState, eps: float) -> float:
    """Diameter of the set {eps <= u <= 1-eps} for a monotone front."""
    if not (0.0 < eps < 0.5):
        raise FrontError("eps must lie in (0, 1/2)")
    return locate_level(field, eps) - locate_level(field, 1.0 - eps)


@dataclass
class FrontTrack:
    """Level-set positions X_lambda(t) extracted from a trajectory."""

    levels: np.ndarray
    times: np.ndarray
    positions: np.ndarray  # shape (n_times, n_levels)

    def speeds(self) -> np.ndarray:
        return np.gradient(self.positions, self.times, axis=0)


def track_levels(snapshots, levels) -> FrontTrack:
    levels = np.atleast_1d(np.asarray(levels, dtype=float))
    times = np.array([s.t for s in snapshots])
    pos = np.array([[locate_level(s, lam) for lam in levels]
                    for s in snapshots])
    return FrontTrack(levels=levels, times=times, positions=pos)


STEEPNESS_FLOOR = 1e-6


def interface_speed(field: FieldState, lam: float, kernel: Kernel, f,
                    w: np.ndarray | None = None) -> float:
    """Instantaneous level speed -u_t/u_x at the crossing.

    u_t is reconstructed from the right-hand side J*u - u + f(t,u); u_x
    comes from the co-state when available, else from central differences.
    """
    pos = locate_level(field, lam)
    u_t = convolve(kernel, field) - field.u + f.eval(field.t, field.u)
    if w is None:
        w = field.w
    if w is None:
        w = np.gradient(field.u, field.x)
    ut_c = float(np.interp(pos, field.x, u_t))
    ux_c = float(np.interp(pos, field.x, w))
    if abs(ux_c) < STEEPNESS_FLOOR:
        raise FrontError(
            f"|u_x|={abs(ux_c):.3g} below the steepness floor at level {lam}")
    return -ut_c / ux_c


@dataclass
class TailFit:
    side: str
    rate: float
    amplitude: float
    window: tuple
    r_squared: float
    n_points: int

    @property
    def accepted(self) -> bool:
        return self.rate > 0.0 and self.r_squared >= 0.98


MAGNITUDE_BAND = (1e-12, 1e-2)


def fit_exponential_tail(field: FieldState, side: str,
                         x_from: float | None = None,
                         x_to: float | None = None,
                         values: np.ndarray | None = None,
                         band: tuple = MAGNITUDE_BAND) -> TailFit:
    """Least-squares exponential rate of a far-field tail.

    For the right side the model is A*exp(-rate*x); for the left side the
    fitted quantity decays toward -infinity, i.e. |v| ~ A*exp(+rate*x).
    """
    if side not in ("left", "right"):
        raise FrontError("side must be 'left' or 'right'")
    v = field.u if values is None else values
    x = field.x
    mask = np.ones(x.size, dtype=bool)
    if x_from is not None:
        mask &= x >= x_from
    if x_to is not None:
        mask &= x <= x_to
    mag = np.abs(v)
    mask &= (mag >= band[0]) & (mag <= band[1])
    if np.count_nonzero(mask) < 8:
        raise FrontError("fewer than 8 usable points in the tail window")
    sgn = np.sign(v[mask])
    if np.any(sgn != sgn[0]):
        raise FrontError("sign changes inside the tail window")
    xs, ys = x[mask], np.log(mag[mask])
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    rate = -slope if side == "right" else slope
    return TailFit(side=side, rate=float(rate),
                   amplitude=float(math.exp(intercept)),
                   window=(float(xs[0]), float(xs[-1])),
                   r_squared=float(r2), n_points=int(xs.size))


def steepness(field: FieldState, center: float, half_width: float,
              w: np.ndarray | None = None) -> float:
    """Max of u_x over [center-M, center+M]; negative for steep fronts."""
    if w is None:
        w = field.w
    if w is None:
        raise FrontError("steepness needs the derivative co-state")
    lo, hi = center - half_width, center + half_width
    if lo < field.x[0] or hi > field.x[-1]:
        raise FrontError("steepness interval outside the window")
    inside = (field.x >= lo) & (field.x <= hi)
    vals = [float(np.interp(lo, field.x, w)),
            float(np.interp(hi, field.x, w))]
    if np.any(inside):
        vals.append(float(np.max(w[inside])))
    return max(vals)


def lipschitz_estimate(values: np.ndarray, h: float) -> float:
    """Max |difference quotient| over consecutive uniform-grid samples."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise FrontError("need at least 2 samples")
    return float(np.max(np.abs(np.diff(values))) / h)


@dataclass
class SteepnessBoundConstant:
    """Constant in the interval-mean lower bound for u_x propagation."""

    K: float
    N: int
    offset: float
    half_width: float
    c_tilde: float
    dt: float

    @property
    def value(self) -> float:
        return (self.c_tilde * math.exp(-(1.0 + self.K) * self.dt)
                * (self.dt / self.N) ** self.N)


def steepness_bound_constant(kernel: Kernel, c_fu: float, dt: float,
                             offset: float, half_width: float,
                             order_cap: int = 32) -> SteepnessBoundConstant:
    """C = inf(J^N) * exp(-(1+K) dt) * (dt/N)^N on the offset interval."""
    if dt <= 0 or half_width <= 0:
        raise FrontError("dt and half_width must be positive")
    lo, hi = offset - half_width, offset + half_width
    for order in range(1, order_cap + 1):
        ik = iterated_kernel(kernel, order)
        xs = ik.offsets
        if lo < xs[0] or hi > xs[-1]:
            continue
        inside = (xs >= lo - ik.spacing) & (xs <= hi + ik.spacing)
        inf_val = float(np.min(ik.samples[inside]))
        if inf_val > 0.0:
            return SteepnessBoundConstant(K=c_fu, N=order, offset=offset,
                                          half_width=half_width,
                                          c_tilde=inf_val, dt=dt)
    raise FrontError("no iteration order achieves positivity on the interval")


def check_steepness_bound(w_before: FieldState, w_after: FieldState,
                          const: SteepnessBoundConstant, z: float,
                          x: float, h_int: float) -> tuple[float, float]:
    """Evaluate w(t0+dt, x) vs C * trapezoid of w(t0, .) over [z-h, z+h].

    Returns (lhs, rhs); the bound holds when lhs <= rhs (+ tolerance).
    """
    if w_before.w is None or w_after.w is None:
        raise FrontError("snapshots must carry the derivative co-state")
    lhs = float(np.interp(x, w_after.x, w_after.w))
    xs = w_before.x
    inside = (xs >= z - h_int) & (xs <= z + h_int)
    grid_x = xs[inside]
    grid_w = w_before.w[inside]
    integral = float(np.trapezoid(grid_w, grid_x))
    return lhs, const.value * integral
