import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frontlab.fields import FieldState, Grid
from frontlab.kernels import (Kernel, KernelError, build_kernel, convolve,
                              convolve_derivative, exponential_moment,
                              iterate_iterated, iterated_kernel,
                              positive_decay_rate, with_samples)


def make_field(u, grid, left=1.0, right=0.0):
    return FieldState(t=0.0, x=grid.x, u=np.asarray(u, dtype=float),
                      u_left=left, u_right=right)


class TestBuildKernel:
    def test_gaussian_stencil_and_mass(self, kernel):
        # smallest grid-aligned radius with analytic tail mass <= 1e-6
        assert kernel.stencil_radius == pytest.approx(4.9)
        assert kernel.samples.size == 197
        # renormalized to exactly unit quadrature mass
        assert kernel.quadrature_mass() == pytest.approx(1.0, abs=1e-14)

    def test_symmetry_is_bit_exact(self, kernel):
        assert np.array_equal(kernel.samples, kernel.samples[::-1])
        assert np.array_equal(kernel.derivative_samples,
                              -kernel.derivative_samples[::-1])

    def test_peak_value(self, kernel):
        mid = kernel.samples.size // 2
        assert kernel.samples[mid] == pytest.approx(1.0 / np.sqrt(2 * np.pi),
                                                    rel=1e-5)

    def test_bump_family_compact_support(self):
        k = build_kernel("bump", spacing=0.05, tail_tolerance=1e-6, a=2.0)
        assert k.stencil_radius == pytest.approx(2.0)
        assert k.samples[0] == 0.0 and k.samples[-1] == 0.0
        assert k.quadrature_mass() == pytest.approx(1.0, abs=1e-14)

    def test_derivative_abs_integral_diagnostic(self, kernel):
        # int |J'| = 2 J(0) for a unimodal even density
        assert kernel.derivative_abs_integral() == pytest.approx(
            2.0 / np.sqrt(2 * np.pi), rel=1e-3)

    def test_rejects_bad_inputs(self):
        with pytest.raises(KernelError):
            build_kernel("gaussian", spacing=-0.05, tail_tolerance=1e-6,
                         sigma=1.0)
        with pytest.raises(KernelError):
            build_kernel("gaussian", spacing=0.05, tail_tolerance=1e-3,
                         sigma=1.0)
        with pytest.raises(KernelError):
            build_kernel("sombrero", spacing=0.05, tail_tolerance=1e-6)


class TestConvolve:
    def test_constant_is_fixed_point(self, kernel):
        grid = Grid(-20.0, 20.0, 801)
        fld = make_field(np.full(grid.x.size, 0.7), grid, left=0.7, right=0.7)
        out = convolve(kernel, fld)
        assert np.max(np.abs(out - 0.7)) < 1e-14

    def test_step_midpoint(self, kernel):
        grid = Grid(-20.0, 20.0, 801)
        u = np.where(grid.x < 0, 1.0, 0.0)
        u[grid.x == 0.0] = 0.5
        out = convolve(kernel, make_field(u, grid))
        i0 = int(np.argmin(np.abs(grid.x)))
        # symmetric kernel sees exactly half of the symmetrized step
        assert out[i0] == pytest.approx(0.5, abs=1e-12)

    def test_gaussian_smoothing_oracle(self, kernel):
        # J * N(0, s^2) = N(0, 1 + s^2) for the Gaussian kernel
        grid = Grid(-20.0, 20.0, 801)
        s = 1.5
        u = np.exp(-grid.x**2 / (2 * s*s)) / (s * np.sqrt(2 * np.pi))
        out = convolve(kernel, make_field(u, grid, left=0.0, right=0.0))
        v = 1.0 + s*s
        expect = np.exp(-grid.x**2 / (2 * v)) / np.sqrt(2 * np.pi * v)
        assert np.max(np.abs(out - expect)) < 1e-6

    def test_derivative_convolution_of_step(self, kernel):
        # (J' * 1_{x<0})(0) = -J(0)
        grid = Grid(-20.0, 20.0, 801)
        u = np.where(grid.x < 0, 1.0, 0.0)
        u[grid.x == 0.0] = 0.5
        out = convolve_derivative(kernel, make_field(u, grid))
        i0 = int(np.argmin(np.abs(grid.x)))
        assert out[i0] == pytest.approx(-1.0 / np.sqrt(2 * np.pi), abs=1e-3)

    def test_far_field_padding(self, kernel):
        grid = Grid(-10.0, 10.0, 401)
        u = 0.5 * (1.0 - np.tanh(grid.x))
        out = convolve(kernel, make_field(u, grid))
        # near the edges the result approaches the far-field constants
        assert out[0] == pytest.approx(1.0, abs=1e-7)
        assert out[-1] == pytest.approx(0.0, abs=1e-7)

    def test_spacing_mismatch_rejected(self, kernel):
        grid = Grid(-10.0, 10.0, 101)   # h = 0.2 != kernel spacing
        with pytest.raises(KernelError):
            convolve(kernel, make_field(np.zeros(101), grid))


class TestExponentialMoment:
    def test_gaussian_closed_form(self, kernel):
        for r in (0.25, 0.5, 1.0):
            assert exponential_moment(kernel, r) == pytest.approx(
                np.exp(r * r / 2.0), abs=2e-6)

    def test_even_in_r(self, kernel):
        assert exponential_moment(kernel, 0.3) == pytest.approx(
            exponential_moment(kernel, -0.3), rel=1e-12)

    def test_small_r_quadratic(self, kernel):
        # I(r) - 1 ~ r^2 sigma^2/2
        # the truncated tail mass (~1e-6) dominates the error at tiny r
        val = (exponential_moment(kernel, 0.01) - 1.0) / 1e-4
        assert val == pytest.approx(0.5, abs=2e-2)


class TestPositiveDecayRate:
    def test_root_property(self, kernel):
        c = 0.1325
        rate = positive_decay_rate(kernel, c)
        root = 2.0 * rate   # returned rate is half the root of g
        g = c * root - exponential_moment(kernel, root) + 1.0
        assert abs(g) < 1e-10

    def test_frozen_value(self, kernel):
        assert positive_decay_rate(kernel, 0.1325) == pytest.approx(
            0.130261, abs=1e-4)

    def test_monotone_in_speed(self, kernel):
        assert (positive_decay_rate(kernel, 0.15)
                > positive_decay_rate(kernel, 0.10))

    def test_rejects_nonpositive_speed(self, kernel):
        with pytest.raises(KernelError):
            positive_decay_rate(kernel, 0.0)


class TestIteratedKernel:
    def test_two_fold_gaussian(self, kernel):
        ik = iterated_kernel(kernel, 2)
        mid = ik.samples.size // 2
        # J*J for N(0,1) is N(0,2)
        assert ik.samples[mid] == pytest.approx(1.0 / np.sqrt(4 * np.pi),
                                                rel=1e-5)
        assert np.trapezoid(ik.samples, ik.offsets) == pytest.approx(
            1.0, abs=1e-5)

    def test_iterate_iterated_matches_direct(self, kernel):
        via_step = iterate_iterated(iterated_kernel(kernel, 1), 2)
        direct = iterated_kernel(kernel, 2)
        assert np.max(np.abs(via_step.samples - direct.samples)) < 1e-12

    def test_support_grows(self, kernel):
        ik3 = iterated_kernel(kernel, 3)
        assert ik3.offsets[-1] == pytest.approx(3 * kernel.stencil_radius)


@settings(max_examples=25, deadline=None)
@given(sigma=st.floats(min_value=0.3, max_value=2.0))
def test_any_sigma_builds_valid_kernel(sigma):
    k = build_kernel("gaussian", spacing=0.05, tail_tolerance=1e-6,
                     sigma=sigma)
    assert np.all(k.samples >= 0)
    assert np.array_equal(k.samples, k.samples[::-1])
    assert k.quadrature_mass() == pytest.approx(1.0, abs=1e-13)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_convolution_preserves_bounds_and_monotonicity(seed, kernel):
    rng = np.random.default_rng(seed)
    grid = Grid(-15.0, 15.0, 601)
    # random monotone decreasing profile in [0, 1]
    steps = rng.random(grid.x.size)
    u = 1.0 - np.cumsum(steps) / np.sum(steps)
    out = convolve(kernel, make_field(u, grid))
    assert np.all(out <= 1.0 + 1e-12) and np.all(out >= -1e-12)
    assert np.all(np.diff(out) <= 1e-12)


def test_with_samples_override(kernel):
    skew = kernel.samples.copy()
    skew[0] *= 3.0
    k2 = with_samples(kernel, skew)
    assert isinstance(k2, Kernel)
    assert not np.array_equal(k2.samples, k2.samples[::-1])
