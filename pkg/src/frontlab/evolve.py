"""Time integration of u_t = J*u - u + f(t,u) on a truncated moving window.

The stepper is classical 4-stage Runge-Kutta on the semi-discrete system;
the window relocates by whole grid steps when the tracked interface leaves
its middle band, with far-field fill.  The spatial derivative co-evolves
through the differentiated equation w_t = J'*u - w + f_u(t,u) w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .fields import FieldState, Grid
from .kernels import Kernel, _convolve_samples
from .fronts import locate_level


class EvolveError(RuntimeError):
    pass


@dataclass(frozen=True)
class WindowPolicy:
    """Shift the window when the tracked level leaves the middle band."""

    level: float = 0.3
    fraction: float = 1.0 / 3.0


@dataclass(frozen=True)
class Relocation:
    t: float
    shift: float  # length units, whole multiple of h


@dataclass
class Trajectory:
    snapshots: list
    relocations: list = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    def at_time(self, t: float) -> FieldState:
        ts = self.times
        i = int(np.argmin(np.abs(ts - t)))
        if abs(ts[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"no snapshot at t={t}")
        return self.snapshots[i]


def _shift_window(state: FieldState, m: int) -> FieldState:
    """Relocate the window by m grid steps (m > 0 moves it rightward)."""
    h = state.h
    x = state.x + m * h
    u = np.empty_like(state.u)
    w = None if state.w is None else np.empty_like(state.w)
    if m > 0:
        u[:-m] = state.u[m:]
        u[-m:] = state.u_right
        if w is not None:
            w[:-m] = state.w[m:]
            w[-m:] = 0.0
    elif m < 0:
        u[-m:] = state.u[:m]
        u[:-m] = state.u_left
        if w is not None:
            w[-m:] = state.w[:m]
            w[:-m] = 0.0
    else:
        return state
    return state.with_(x=x, u=u, w=w)


class Stepper:
    """RK4 stepper bound to one kernel and one nonlinearity.

    With evolve_far_fields=True the far-field constants follow the spatially
    homogeneous reaction ODE v' = f(t, v) (the nonlocal term vanishes on
    constants), so e.g. a left state above the ignition threshold lifts
    toward 1 consistently with the interior dynamics.
    """

    def __init__(self, kernel: Kernel, f, evolve_far_fields: bool = False):
        self.kernel = kernel
        self.f = f
        self.evolve_far_fields = evolve_far_fields
        self._wj = kernel.weights * kernel.samples
        self._wdj = kernel.weights * kernel.derivative_samples

    def dt_max(self) -> float:
        return self.f.dt_max()

    def _rhs_u(self, t, u, u_left, u_right):
        conv = _convolve_samples(self._wj, u, u_left, u_right)
        return conv - u + self.f.eval(t, np.clip(u, -1.0, 3.0))

    def _rhs_w(self, t, u, w, u_left, u_right):
        conv = _convolve_samples(self._wdj, u, u_left, u_right)
        return conv - w + self.f.eval_du(t, np.clip(u, -1.0, 3.0)) * w

    def step(self, state: FieldState, dt: float) -> FieldState:
        if dt > self.dt_max() * (1.0 + 1e-12):
            raise EvolveError(f"dt={dt} exceeds dt_max={self.dt_max()}")
        t, u = state.t, state.u
        ul, ur = state.u_left, state.u_right
        if self.evolve_far_fields:
            def fscal(ts, v):
                return float(self.f.eval(ts, v))
            gl1, gr1 = fscal(t, ul), fscal(t, ur)
            gl2 = fscal(t + 0.5 * dt, ul + 0.5 * dt * gl1)
            gr2 = fscal(t + 0.5 * dt, ur + 0.5 * dt * gr1)
            gl3 = fscal(t + 0.5 * dt, ul + 0.5 * dt * gl2)
            gr3 = fscal(t + 0.5 * dt, ur + 0.5 * dt * gr2)
            gl4 = fscal(t + dt, ul + dt * gl3)
            gr4 = fscal(t + dt, ur + dt * gr3)
            stage_l = (ul, ul + 0.5 * dt * gl1, ul + 0.5 * dt * gl2,
                       ul + dt * gl3)
            stage_r = (ur, ur + 0.5 * dt * gr1, ur + 0.5 * dt * gr2,
                       ur + dt * gr3)
            ul_new = ul + dt / 6.0 * (gl1 + 2 * gl2 + 2 * gl3 + gl4)
            ur_new = ur + dt / 6.0 * (gr1 + 2 * gr2 + 2 * gr3 + gr4)
        else:
            stage_l = (ul, ul, ul, ul)
            stage_r = (ur, ur, ur, ur)
            ul_new, ur_new = ul, ur
        if state.w is None:
            k1 = self._rhs_u(t, u, stage_l[0], stage_r[0])
            k2 = self._rhs_u(t + 0.5 * dt, u + 0.5 * dt * k1,
                             stage_l[1], stage_r[1])
            k3 = self._rhs_u(t + 0.5 * dt, u + 0.5 * dt * k2,
                             stage_l[2], stage_r[2])
            k4 = self._rhs_u(t + dt, u + dt * k3, stage_l[3], stage_r[3])
            u_new = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            w_new = None
        else:
            w = state.w
            k1 = self._rhs_u(t, u, ul, ur)
            l1 = self._rhs_w(t, u, w, ul, ur)
            k2 = self._rhs_u(t + 0.5 * dt, u + 0.5 * dt * k1, ul, ur)
            l2 = self._rhs_w(t + 0.5 * dt, u + 0.5 * dt * k1,
                             w + 0.5 * dt * l1, ul, ur)
            k3 = self._rhs_u(t + 0.5 * dt, u + 0.5 * dt * k2, ul, ur)
            l3 = self._rhs_w(t + 0.5 * dt, u + 0.5 * dt * k2,
                             w + 0.5 * dt * l2, ul, ur)
            k4 = self._rhs_u(t + dt, u + dt * k3, ul, ur)
            l4 = self._rhs_w(t + dt, u + dt * k3, w + dt * l3, ul, ur)
            u_new = u + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            w_new = w + dt / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
        if not np.all(np.isfinite(u_new)):
            raise EvolveError(f"non-finite state at t={t + dt}")
        return state.with_(t=t + dt, u=u_new, w=w_new,
                           u_left=ul_new, u_right=ur_new)


def step(state: FieldState, kernel: Kernel, f, dt: float) -> FieldState:
    """Advance one RK4 step of the semi-discrete equation."""
    return Stepper(kernel, f).step(state, dt)


def evolve(state: FieldState, kernel: Kernel, f, t_end: float, dt: float,
           window_policy: WindowPolicy | None = None,
           snapshot_every: float | None = None,
           evolve_far_fields: bool = False) -> Trajectory:
    """Integrate to t_end, returning snapshots at the requested cadence."""
    stepper = Stepper(kernel, f, evolve_far_fields=evolve_far_fields)
    n_steps = max(1, int(round((t_end - state.t) / dt)))
    dt_eff = (t_end - state.t) / n_steps
    if dt_eff > stepper.dt_max() * (1.0 + 1e-12):
        raise EvolveError(f"dt={dt_eff} exceeds dt_max={stepper.dt_max()}")
    if snapshot_every is None:
        snap_stride = n_steps
    else:
        snap_stride = max(1, int(round(snapshot_every / dt_eff)))
    check_stride = max(1, int(round(1.0 / dt_eff)))

    snapshots = [state]
    relocations = []
    for i in range(1, n_steps + 1):
        state = stepper.step(state, dt_eff)
        if window_policy is not None and (i % check_stride == 0
                                          or i == n_steps):
            state, moved = _apply_window_policy(state, window_policy)
            if moved:
                relocations.append(Relocation(t=state.t,
                                              shift=moved * state.h))
        if i % snap_stride == 0 or i == n_steps:
            if snapshots[-1].t < state.t - 1e-12:
                snapshots.append(state)
    return Trajectory(snapshots=snapshots, relocations=relocations)


def _apply_window_policy(state: FieldState, policy: WindowPolicy):
    lam = policy.level
    if state.u[0] < lam or state.u[-1] > lam:
        raise EvolveError("front reached the window edge before relocation")
    pos = locate_level(state, lam, strict=False)
    center = 0.5 * (state.x[0] + state.x[-1])
    half = 0.5 * (state.x[-1] - state.x[0])
    if abs(pos - center) <= policy.fraction * half:
        return state, 0
    m = int(round((pos - center) / state.h))
    return _shift_window(state, m), m


# ---------------------------------------------------------------------------
# approximating fronts


@dataclass
class ApproxFrontRun:
    """A front started from a shifted wave profile at a negative seed time."""

    s: float
    y_s: float
    level: float
    trajectory: Trajectory

    @property
    def snapshots(self):
        return self.trajectory.snapshots

    def interface_track(self) -> tuple[np.ndarray, np.ndarray]:
        ts = self.trajectory.times
        xs = np.array([locate_level(snap, self.level)
                       for snap in self.snapshots])
        return ts, xs

    def interface_speeds(self) -> tuple[np.ndarray, np.ndarray]:
        """Central-difference speeds of the level track."""
        ts, xs = self.interface_track()
        v = np.gradient(xs, ts)
        return ts, v

    def interface_at(self, t: float) -> float:
        return locate_level(self.trajectory.at_time(t), self.level)


def seed_from_profile(grid: Grid, profile_fn, derivative_fn, shift: float,
                      t: float, with_w: bool = True) -> FieldState:
    u = np.clip(profile_fn(grid.x - shift), 0.0, 1.0)
    w = derivative_fn(grid.x - shift) if with_w else None
    return FieldState(t=t, x=grid.x, u=u, u_left=1.0, u_right=0.0, w=w)


def build_approx_front(kernel: Kernel, f, s: float, grid: Grid, dt: float,
                       profile_fn, derivative_fn, theta: float,
                       t_end: float = 0.0, snapshot_every: float = 1.0,
                       window_policy: WindowPolicy | None = None,
                       hit_tol: float = 1e-6,
                       max_bracket: float = 64.0,
                       with_derivative: bool = True) -> ApproxFrontRun:
    """Seed at time s < 0 so that the front satisfies u(0,0;s) = theta.

    The seed shift y_s is found by bisection on the terminal value
    u(0,0;s), which is monotone increasing in the shift.
    """
    if s >= 0:
        raise EvolveError("seed time must be negative")

    def terminal_value(y: float) -> float:
        state = seed_from_profile(grid, profile_fn, derivative_fn, y, s,
                                  with_w=False)
        traj = evolve(state, kernel, f, 0.0, dt)
        end = traj.snapshots[-1]
        return float(np.interp(0.0, end.x, end.u))

    # center the bracket using a trial run and translation invariance
    state0 = seed_from_profile(grid, profile_fn, derivative_fn, 0.0, s,
                               with_w=False)
    end0 = evolve(state0, kernel, f, 0.0, dt).snapshots[-1]
    y0 = -locate_level(end0, theta)

    width = 1.0
    lo, hi = y0 - width, y0 + width
    v_lo, v_hi = terminal_value(lo), terminal_value(hi)
    while not (v_lo <= theta <= v_hi):
        width *= 2.0
        if width > max_bracket:
            raise EvolveError("bisection bracket for y_s not found; "
                              "seed time too negative for this window")
        lo, hi = y0 - width, y0 + width
        v_lo, v_hi = terminal_value(lo), terminal_value(hi)

    y_s, v_mid = y0, None
    for _ in range(80):
        y_s = 0.5 * (lo + hi)
        v_mid = terminal_value(y_s)
        if abs(v_mid - theta) <= 0.25 * hit_tol:
            break
        if v_mid < theta:
            lo = y_s
        else:
            hi = y_s

    seed = seed_from_profile(grid, profile_fn, derivative_fn, y_s, s,
                             with_w=with_derivative)
    traj = evolve(seed, kernel, f, t_end, dt,
                  window_policy=window_policy,
                  snapshot_every=snapshot_every)
    return ApproxFrontRun(s=s, y_s=y_s, level=theta, trajectory=traj)


def extend_run(run: ApproxFrontRun, kernel: Kernel, f, t_end: float,
               dt: float, snapshot_every: float,
               window_policy: WindowPolicy | None = None,
               with_derivative: bool = True) -> ApproxFrontRun:
    """Continue an existing front run to a later time."""
    last = run.snapshots[-1]
    if not with_derivative:
        last = last.with_(w=None)
    traj = evolve(last, kernel, f, t_end, dt, window_policy=window_policy,
                  snapshot_every=snapshot_every)
    merged = Trajectory(
        snapshots=run.snapshots + traj.snapshots[1:],
        relocations=run.trajectory.relocations + traj.relocations)
    return ApproxFrontRun(s=run.s, y_s=run.y_s, level=run.level,
                          trajectory=merged)
