import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from crtm.kernel import (TRIANGULAR, DiscreteKernel, QuadratureError, TabulatedProfile,
                         UnderResolvedKernelWarning, assemble, constant_kernel, diffusion_coeff,
                         f_eps, offset_integrals, profile_cell_integral, profile_matrix, romberg,
                         wrap_z)
from crtm.mesh import build_mesh


def trapezoid(fn, a, b, n=200_001):
    x = np.linspace(a, b, n)
    return float(np.trapezoid(fn(x), x))


# --- the periodic profile -------------------------------------------------

def test_f_eps_values():
    assert f_eps(0.5, 0.05) == pytest.approx(0.5, abs=1e-15)
    assert f_eps(1.0, 0.3) == 0.0
    assert f_eps(-1.0, 0.3) == 0.0


def test_f_eps_periodic_branch():
    eps = 0.05
    z = 2 * np.pi / eps - 0.3
    # oracle: shift back one period by hand, then the 1 - |z| branch
    assert f_eps(z, eps) == pytest.approx(1 - abs(z - 2 * np.pi / eps), abs=1e-12)
    assert f_eps(z, eps) == pytest.approx(0.7, abs=1e-12)


@given(z=st.floats(-50, 50), eps=st.floats(0.01, 3.0), k=st.integers(-3, 3))
def test_f_eps_periodicity(z, eps, k):
    assert f_eps(z + k * 2 * np.pi / eps, eps) == pytest.approx(f_eps(z, eps), abs=1e-7)


@given(z=st.floats(-1, 1))
def test_profile_even(z):
    assert TRIANGULAR.base(z) == TRIANGULAR.base(-z)


def test_wrap_z_range():
    z = np.linspace(-1000, 1000, 10001)
    w = wrap_z(z, 0.1)
    assert np.all(np.abs(w) <= np.pi / 0.1 + 1e-9)


# --- quadrature ------------------------------------------------------------

def test_romberg_matches_quad():
    fn = lambda x: np.exp(-x) * np.cos(3 * x)
    ref, _ = integrate.quad(fn, 0.0, 2.0, epsabs=1e-14)
    assert romberg(fn, 0.0, 2.0, rtol=1e-12) == pytest.approx(ref, rel=1e-10)


def test_romberg_failure_is_reported():
    with pytest.raises(QuadratureError) as info:
        romberg(lambda x: np.sign(x - 0.3), 0.0, 1.0, rtol=1e-14, max_levels=5)
    assert info.value.abserr > 0


@given(za=st.floats(-1.2, 1.2), width=st.floats(0.0, 1.0))
@settings(max_examples=60)
def test_cell_integral_against_quad(za, width):
    zb = za + width
    pts = [p for p in (-1.0, 0.0, 1.0) if za < p < zb]
    ref, _ = integrate.quad(TRIANGULAR.base, za, zb, points=pts or None, epsabs=1e-13)
    assert profile_cell_integral(TRIANGULAR, za, zb) == pytest.approx(ref, abs=1e-9)


def test_raw_row_sum_close_to_one():
    # before the rates are redefined from row sums, sum_j' K / eps ~ int f = 1
    mesh = build_mesh(10, 100, 10, 20)
    _, vals = offset_integrals(TRIANGULAR, 0.05, mesh.dtheta)
    oracle = trapezoid(TRIANGULAR.base, -1, 1)
    assert abs(oracle - 1.0) < 1e-9
    assert abs(vals.sum() / 0.05 - 1.0) < 1e-3


def test_wrapped_rows_match_periodic_images():
    # support wider than the grid half-width so offsets fold across theta = pi
    eps, n = 2.5, 6
    dth = 2 * np.pi / n
    F = profile_matrix(TRIANGULAR, eps, n, dth)
    theta = (np.arange(n) + 0.5) * dth - np.pi
    j = 0
    brute = np.zeros(n)
    for jp in range(n):
        lo, hi = theta[jp] - dth / 2, theta[jp] + dth / 2
        for image in range(-3, 4):
            shift = 2 * np.pi * image
            brute[jp] += trapezoid(lambda u: TRIANGULAR.base((u + shift - theta[j]) / eps), lo, hi,
                                   n=20_001)
    np.testing.assert_allclose(F[j], brute, atol=1e-6)
    assert F[j].sum() == pytest.approx(eps, rel=1e-9)


@given(n=st.integers(4, 64), eps=st.floats(0.05, 3.0))
@settings(max_examples=40, deadline=None)
def test_profile_matrix_is_circulant_and_conservative(n, eps):
    dth = 2 * np.pi / n
    F = profile_matrix(TRIANGULAR, eps, n, dth)
    assert np.all(F >= 0)
    np.testing.assert_allclose(F, np.roll(np.roll(F, 1, 0), 1, 1), atol=0)
    np.testing.assert_allclose(F.sum(1), eps, rtol=1e-8)
    np.testing.assert_allclose(F, F.T, atol=1e-14)


# --- assembly ---------------------------------------------------------------

def test_rates_defined_from_row_sums(small_mesh):
    spec = constant_kernel(1.0, 0.5, k_top=2.0, k_bottom=0.5)
    K = assemble(spec, small_mesh)
    eps = K.epsilon
    assert np.array_equal(K.K_bulk.sum(-1) / eps, K.k_bulk)
    assert np.array_equal(K.K_top.sum(-1) / eps, K.k_top)
    assert np.array_equal(K.K_bot.sum(-1) / eps, K.k_bot)
    np.testing.assert_allclose(K.k_top, 2.0, rtol=1e-8)
    np.testing.assert_allclose(K.k_bot, 0.5, rtol=1e-8)


def test_boundary_kernels_restrict_source_only(small_mesh):
    K = assemble(constant_kernel(1.0, 0.5), small_mesh)
    nt = small_mesh.n_theta
    assert K.K_top.shape == (nt, 2 * nt)
    assert K.K_bot.shape == (nt, 2 * nt)
    np.testing.assert_array_equal(K.K_top, K.F[small_mesh.plus])


def test_assemble_rejects_bad_inputs(small_mesh):
    with pytest.raises(ValueError):
        constant_kernel(0.0, 0.5)
    with pytest.raises(ValueError):
        constant_kernel(1.0, np.pi)
    bad = constant_kernel(1.0, 0.5)
    bad = type(bad)(lambda y, t: -np.ones(np.broadcast(y, t).shape), bad.top_rate,
                    bad.bottom_rate, epsilon=0.5)
    with pytest.raises(ValueError, match="bulk_rate"):
        assemble(bad, small_mesh)


def test_under_resolved_kernel_warns():
    mesh = build_mesh(4, 8, 10, 20)
    with pytest.warns(UnderResolvedKernelWarning):
        assemble(constant_kernel(1.0, 0.05), mesh)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assemble(constant_kernel(1.0, 0.5), mesh)


def test_discrete_kernel_is_read_only(small_kernel):
    assert isinstance(small_kernel, DiscreteKernel)
    with pytest.raises(ValueError):
        small_kernel.F[0, 0] = 1.0


# --- diffusion coefficient ---------------------------------------------------

def test_diffusion_coeff_triangular():
    oracle = 0.5 * trapezoid(lambda z: z**2 * TRIANGULAR.base(z), -1, 1, n=400_001)
    assert oracle == pytest.approx(1 / 12, rel=1e-8)
    assert diffusion_coeff(constant_kernel(1.0, 0.05), 0.0, 0.3) == pytest.approx(1 / 12, rel=1e-10)


@given(c=st.floats(0.01, 100.0))
@settings(max_examples=20, deadline=None)
def test_diffusion_coeff_linear_in_rate(c):
    assert diffusion_coeff(constant_kernel(c, 0.2), 1.0, 1.0) == pytest.approx(c / 12, rel=1e-9)


def test_first_moment_vanishes():
    m1, _ = integrate.quad(lambda z: z * TRIANGULAR.base(z), -1, 1, points=[0.0])
    assert abs(m1) < 1e-14


# --- tabulated profile --------------------------------------------------------

def test_tabulated_profile_normalised_and_sampled(rng):
    prof = TabulatedProfile(lambda z: np.cos(0.5 * np.pi * z) ** 2, name="cos2")
    mass, _ = integrate.quad(prof.base, -1, 1)
    assert mass == pytest.approx(1.0, rel=1e-9)
    n = 200_000
    z = np.sort(prof.sample(rng, n))
    zz, cdf = prof.cdf_grid
    target = np.interp(z, zz, cdf)
    ks = np.max(np.abs(target - np.arange(1, n + 1) / n))
    # Kolmogorov-Smirnov: sqrt(n) D_n is below 1.63 with 99% probability
    assert math.sqrt(n) * ks < 1.63
