"""Symmetric dispersal kernels, discrete convolution, and exponential moments.

A kernel is stored as samples J(kh) on a symmetric stencil |kh| <= R with
trapezoid quadrature weights.  After truncation the samples are renormalized
to unit quadrature mass, so convolution with a constant reproduces the
constant exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import signal, special

from .fields import FieldState

#: stencil size above which convolutions switch to the FFT path
FFT_THRESHOLD = 512

#: hard cap on the stencil radius search (length units)
RADIUS_CAP = 200.0

#: cap on kernel self-convolution order
ITERATION_CAP = 32


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class Kernel:
    """Sampled symmetric dispersal density with derivative samples."""

    family: str
    params: dict
    spacing: float
    stencil_radius: float
    samples: np.ndarray
    derivative_samples: np.ndarray
    tail_mass_bound: float
    r_max: float

    @property
    def half_points(self) -> int:
        return (self.samples.size - 1) // 2

    @property
    def offsets(self) -> np.ndarray:
        k = self.half_points
        return np.arange(-k, k + 1) * self.spacing

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.samples.size, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def quadrature_mass(self) -> float:
        return float(np.sum(self.weights * self.samples))

    def derivative_abs_integral(self) -> float:
        """Quadrature of |J'|; (H1) diagnostic only, no threshold asserted."""
        return float(np.sum(self.weights * np.abs(self.derivative_samples)))

    def dump(self, path) -> None:
        np.savetxt(path, np.column_stack([self.offsets, self.samples]))


@dataclass(frozen=True)
class IteratedKernel:
    """N-fold self-convolution of a kernel on a widened stencil."""

    order: int
    spacing: float
    samples: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        k = (self.samples.size - 1) // 2
        return np.arange(-k, k + 1) * self.spacing

    def quadrature_mass(self) -> float:
        w = np.full(self.samples.size, self.spacing)
        w[0] *= 0.5
        w[-1] *= 0.5
        return float(np.sum(w * self.samples))


# ---------------------------------------------------------------------------
# analytic families

def _gaussian_density(sigma):
    c = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def density(x):
        return c * np.exp(-0.5 * (x / sigma) ** 2)

    def derivative(x):
        return -x / sigma**2 * density(x)

    def tail_mass(r):
        return 2.0 * special.ndtr(-r / sigma)

    return density, derivative, tail_mass


def _bump_density(a):
    # C * exp(-1/(1-(x/a)^2)) on |x| < a; C fixed by fine quadrature.
    def raw(x):
        s = np.asarray(x, dtype=float) / a
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    xs = np.linspace(-a, a, 20001)
    c = 1.0 / np.trapezoid(raw(xs), xs)

    def density(x):
        return c * raw(x)

    def derivative(x):
        s = np.asarray(x, dtype=float) / a
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        si = s[inside]
        out[inside] = (c * np.exp(-1.0 / (1.0 - si**2))
                       * (-2.0 * si / (a * (1.0 - si**2) ** 2)))
        return out

    def tail_mass(r):
        return 0.0 if r >= a else 1.0

    return density, derivative, tail_mass


_FAMILIES = {"gaussian", "bump"}


def _family_closures(family: str, params: dict):
    if family == "gaussian":
        sigma = float(params.get("sigma", 1.0))
        if sigma <= 0:
            raise KernelError("gaussian width must be positive")
        return _gaussian_density(sigma) + (4.0 / sigma,)
    if family == "bump":
        a = float(params.get("a", 1.0))
        if a <= 0:
            raise KernelError("bump half-width must be positive")
        return _bump_density(a) + (20.0,)
    raise KernelError(f"unsupported kernel family: {family!r}")


def build_kernel(family: str, spacing: float, tail_tolerance: float,
                 **params) -> Kernel:
    """Sample a named kernel family on the smallest adequate stencil."""
    if spacing <= 0:
        raise KernelError("spacing must be positive")
    if not (0.0 < tail_tolerance <= 1e-6):
        raise KernelError("tail tolerance must lie in (0, 1e-6]")
    density, derivative, tail_mass, r_max = _family_closures(family, params)

    k = 1
    while tail_mass(k * spacing) > tail_tolerance:
        k += 1
        if k * spacing > RADIUS_CAP:
            raise KernelError(
                "tail mass not attainable within the radius cap; "
                "kernel tail is too heavy")
    radius = k * spacing
    offsets = np.arange(-k, k + 1) * spacing
    samples = density(offsets)
    deriv = derivative(offsets)
    # symmetry bit-exactly, regardless of the family's rounding
    samples = 0.5 * (samples + samples[::-1])
    deriv = 0.5 * (deriv - deriv[::-1])

    weights = np.full(samples.size, spacing)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    mass = float(np.sum(weights * samples))
    if not (1.0 - tail_tolerance - 1e-8 <= mass <= 1.0 + 1e-8):
        raise KernelError(f"quadrature mass {mass} inconsistent with tail bound")
    samples = samples / mass
    deriv = deriv / mass

    return Kernel(family=family, params=dict(params), spacing=spacing,
                  stencil_radius=radius, samples=samples,
                  derivative_samples=deriv, tail_mass_bound=tail_tolerance,
                  r_max=r_max)


# ---------------------------------------------------------------------------
# convolution

def _convolve_samples(weighted: np.ndarray, u: np.ndarray,
                      u_left: float, u_right: float) -> np.ndarray:
    k = (weighted.size - 1) // 2
    padded = np.concatenate([np.full(k, u_left), u, np.full(k, u_right)])
    if weighted.size <= FFT_THRESHOLD:
        return np.convolve(padded, weighted, mode="valid")
    return signal.fftconvolve(padded, weighted, mode="valid")


def _check_compatible(kernel: Kernel, field: FieldState) -> None:
    if not math.isclose(kernel.spacing, field.h, rel_tol=1e-10):
        raise KernelError("field grid spacing does not match kernel spacing")
    if (field.x[-1] - field.x[0]) < 2.0 * kernel.stencil_radius:
        raise KernelError("field window narrower than twice the stencil radius")


def convolve(kernel: Kernel, field: FieldState) -> np.ndarray:
    """(J*u)(x) at every grid node, with far-field extension."""
    _check_compatible(kernel, field)
    # symmetric kernel: no flip needed
    return _convolve_samples(kernel.weights * kernel.samples, field.u,
                             field.u_left, field.u_right)


def convolve_derivative(kernel: Kernel, field: FieldState) -> np.ndarray:
    """(J'*u)(x) at every grid node."""
    _check_compatible(kernel, field)
    return _convolve_samples(kernel.weights * kernel.derivative_samples,
                             field.u, field.u_left, field.u_right)


# ---------------------------------------------------------------------------
# moments and decay rates

def exponential_moment(kernel: Kernel, r: float) -> float:
    """I(r) = integral of J(x) e^{-rx}: stencil quadrature plus tail."""
    if abs(r) > kernel.r_max:
        raise KernelError(f"|r|={abs(r)} beyond the family moment range "
                          f"{kernel.r_max}")
    quad = float(np.sum(kernel.weights * kernel.samples
                        * np.exp(-r * kernel.offsets)))
    return quad + _moment_tail(kernel, r)


def _moment_tail(kernel: Kernel, r: float) -> float:
    if kernel.family == "gaussian":
        sigma = float(kernel.params.get("sigma", 1.0))
        R = kernel.stencil_radius
        bulk = math.exp(0.5 * (sigma * r) ** 2)
        right = special.ndtr(-(R + sigma**2 * r) / sigma)
        left = special.ndtr(-(R - sigma**2 * r) / sigma)
        return bulk * (right + left)
    return 0.0  # compact support: no mass beyond the stencil


def positive_decay_rate(kernel: Kernel, c_min: float) -> float:
    """Half of the nonzero root of g(c) = c*c_min - I(c) + 1.

    g(0) = 0 and g is positive on a right neighborhood of 0; the returned
    rate c~ = 0.5*c_bar satisfies g(c~) > 0 with margin.
    """
    if c_min <= 0:
        raise KernelError("c_min must be positive")

    def g(c):
        return c * c_min - exponential_moment(kernel, c) + 1.0

    lo = min(0.25 * c_min, 0.5 * kernel.r_max)
    while g(lo) <= 0.0:
        lo *= 0.5
        if lo < 1e-12:
            raise KernelError("no positive decay rate: g <= 0 near 0")
    hi = lo
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > kernel.r_max:
            raise KernelError(
                "no positive root below r_max; c_min too small for the "
                "kernel spread")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    root = 0.5 * (lo + hi)
    return 0.5 * root


def iterated_kernel(kernel: Kernel, order: int) -> IteratedKernel:
    """N-fold self-convolution J^N on a stencil of radius N*R."""
    if order < 1:
        raise KernelError("iteration order must be >= 1")
    if order > ITERATION_CAP:
        raise KernelError(f"iteration order exceeds cap {ITERATION_CAP}")
    samples = kernel.samples.copy()
    h = kernel.spacing
    for _ in range(order - 1):
        samples = np.convolve(samples, kernel.samples) * h
    return IteratedKernel(order=order, spacing=h, samples=samples)


def iterate_iterated(ik: IteratedKernel, order: int) -> IteratedKernel:
    """Self-convolve an already-iterated kernel (associativity checks)."""
    samples = ik.samples.copy()
    for _ in range(order - 1):
        samples = np.convolve(samples, ik.samples) * ik.spacing
    return IteratedKernel(order=ik.order * order, spacing=ik.spacing,
                          samples=samples)


def with_samples(kernel: Kernel, samples: np.ndarray) -> Kernel:
    """Kernel with replaced samples (crafting invalid kernels in tests)."""
    return replace(kernel, samples=samples)
