import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crtm.diagnostics import weighted_l2_distance
from crtm.kernel import TabulatedProfile, assemble, constant_kernel
from crtm.mesh import build_mesh, uniform_init
from crtm.montecarlo import (Histogram2D, block_rng, bootstrap_noise_floor, poisson_count,
                             sample_jump, simulate, step_particle, wrap_angle)
from crtm.solver import SolverConfig, run

SPEC = constant_kernel(1.0, 0.05)
L, V = 10.0, 20.0


# --- Poisson counts ------------------------------------------------------------

def test_poisson_zero_rate(rng):
    assert np.all(poisson_count(np.zeros(1000), 1e-3, rng) == 0)


def test_poisson_p0_at_unit_mean(rng):
    n = 1_000_000
    p0 = np.mean(poisson_count(1.0, 1.0, rng, size=n) == 0)
    sigma = math.sqrt(math.exp(-1) * (1 - math.exp(-1)) / n)
    assert abs(p0 - math.exp(-1)) <= 3 * sigma


def test_poisson_small_mean(rng):
    n = 1_000_000
    draws = poisson_count(1.0, 1e-3, rng, size=n)
    assert abs(draws.mean() - 1e-3) <= 3 * math.sqrt(1e-3 / n)


def test_poisson_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        poisson_count(-1.0, 1e-3, rng)
    with pytest.raises(ValueError):
        poisson_count(1.0, 0.0, rng)


# --- jump law ---------------------------------------------------------------------

def test_jump_moments(rng):
    eps, n = 0.05, 1_000_000
    d = sample_jump("interior", np.zeros(n), SPEC, rng)
    assert abs(d.mean()) <= 3 * d.std() / math.sqrt(n)
    m4 = np.mean(d**4)
    assert abs(d.var() - eps**2 / 6) <= 3 * math.sqrt((m4 - d.var() ** 2) / n)
    assert np.abs(d).max() <= eps


def test_jump_kind_validated(rng):
    with pytest.raises(ValueError):
        sample_jump("wall", 0.0, SPEC, rng)


def test_tabulated_jump_law(rng):
    prof = TabulatedProfile(lambda z: 1 - z * z, name="parabolic")
    spec = constant_kernel(1.0, 0.1, shape=prof)
    d = np.sort(sample_jump("top", np.zeros(100_000), spec, rng)) / 0.1
    cdf = lambda z: 0.5 + 0.75 * z - 0.25 * z**3          # closed form for 3/4 (1 - z^2)
    ks = np.max(np.abs(cdf(d) - np.arange(1, d.size + 1) / d.size))
    assert math.sqrt(d.size) * ks < 1.63


# --- single-step branches ------------------------------------------------------------

def test_pure_drift(rng):
    Y, T = step_particle([1.0], [0.3], SPEC, L, V, 1e-3, rng, counts=0)
    assert Y[0] == pytest.approx(1.0 + V * math.sin(0.3) * 1e-3, abs=1e-15)
    assert T[0] == 0.3


def test_wall_particle_pointing_out_stays(rng):
    Y, T = step_particle([L], [1.0], SPEC, L, V, 1e-3, rng, counts=0)
    assert Y[0] == L and T[0] == 1.0


def test_wall_particle_pointing_in_departs(rng):
    Y, _ = step_particle([L], [-1.0], SPEC, L, V, 1e-3, rng, counts=0)
    assert Y[0] == pytest.approx(L + V * math.sin(-1.0) * 1e-3, abs=1e-14)
    assert Y[0] < L


def test_total_drift_time_is_dt(rng):
    # jumps of size zero must leave the straight-line motion untouched
    spec = constant_kernel(1.0, 1e-12)
    Y, _ = step_particle(np.zeros(50), np.full(50, 0.7), spec, L, V, 1e-3, rng, counts=5)
    np.testing.assert_allclose(Y, V * math.sin(0.7) * 1e-3, rtol=1e-9)


@given(seed=st.integers(0, 2**32), dt=st.floats(1e-4, 0.5))
@settings(max_examples=40, deadline=None)
def test_state_space_invariants(seed, dt):
    r = np.random.default_rng(seed)
    Y = r.uniform(-L, L, 500)
    Y[:50] = L
    Y[50:100] = -L
    T = r.uniform(-np.pi, np.pi, 500)
    Y2, T2 = step_particle(Y, T, constant_kernel(1.0, 0.5), L, V, dt, r)
    assert np.all(np.abs(Y2) <= L)
    assert np.all((T2 >= -np.pi) & (T2 < np.pi))


def test_wrap_angle_is_rotation():
    x = np.linspace(-20, 20, 100_001)
    w = wrap_angle(x)
    assert np.all((w >= -np.pi) & (w < np.pi))
    np.testing.assert_allclose(np.cos(w), np.cos(x), atol=1e-12)
    np.testing.assert_allclose(np.sin(w), np.sin(x), atol=1e-12)
    assert wrap_angle(np.pi) == -np.pi


def test_jump_increments_do_not_leak(rng):
    # increments recovered modulo 2 pi must follow the jump law exactly
    spec = constant_kernel(1.0, 0.5)
    T = np.full(200_000, np.pi - 0.1)
    _, T2 = step_particle(np.zeros(T.size), T, spec, L, V, 1e-9, rng, counts=1)
    inc = wrap_angle(T2 - T)
    assert np.abs(inc).max() <= 0.5 + 1e-12
    # Var of the sample variance: (E Z^4 - (E Z^2)^2) eps^4 / n with E Z^4 = 1/15
    sd = math.sqrt((1 / 15 - 1 / 36) * 0.5**4 / T.size)
    assert abs(inc.var() - 0.25 / 6) <= 3 * sd


# --- histograms and ensembles -----------------------------------------------------------

def test_histogram_mass_exact():
    mesh = build_mesh(5, 6, L, V)
    h = Histogram2D.empty(mesh)
    r = np.random.default_rng(0)
    Y = r.uniform(-L, L, 9999)
    Y[:100] = L
    Y[100:150] = -L
    h.add(Y, r.uniform(-np.pi, np.pi, Y.size))
    assert h.total() == h.n_total == 9999
    assert h.normalised_mass() == 1.0


def test_initial_histogram_is_uniform():
    mesh = build_mesh(5, 5, L, V)
    n = 200_000
    res = simulate(n, 11, 1e-3, 0.0, SPEC, mesh)
    c = res.histograms[0.0].counts
    p = 1 / c.size
    sigma = math.sqrt(n * p * (1 - p))
    assert np.abs(c - n * p).max() <= 4 * sigma      # 100 bins, union of 3-sigma events
    assert np.mean(np.abs(c - n * p) <= 3 * sigma) > 0.97


def test_reproducible_and_worker_independent():
    mesh = build_mesh(5, 8, L, V)
    kw = dict(n_cell=5000, seed=42, dt=1e-3, t_end=0.02, spec=SPEC, mesh=mesh, block_size=1024)
    a = simulate(workers=1, **kw)
    b = simulate(workers=3, **kw)
    np.testing.assert_array_equal(a.Y, b.Y)
    np.testing.assert_array_equal(a.histograms[0.02].counts, b.histograms[0.02].counts)
    c = simulate(**(kw | {"seed": 43}))
    assert not np.array_equal(a.Y, c.Y)


def test_block_streams_are_distinct():
    x = [block_rng(1, b, s).random(4) for b, s in ((0, 0), (1, 0), (0, 1))]
    assert not np.allclose(x[0], x[1]) and not np.allclose(x[0], x[2])
    np.testing.assert_array_equal(block_rng(1, 0, 0).random(4), x[0])


def test_simulate_validates_schedule():
    mesh = build_mesh(4, 4, L, V)
    with pytest.raises(ValueError):
        simulate(10, 0, 1e-3, 0.0105, SPEC, mesh)
    with pytest.raises(ValueError):
        simulate(10, 0, 1e-3, 0.01, SPEC, mesh, snapshot_times=(0.5,))
    with pytest.raises(ValueError):
        simulate(0, 0, 1e-3, 0.01, SPEC, mesh)


def test_histogram_csv_layout(tmp_path):
    mesh = build_mesh(2, 2, L, V)
    h = simulate(100, 0, 1e-3, 0.0, SPEC, mesh).histograms[0.0]
    h.write_csv(tmp_path / "h.csv", "prov")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "# prov"
    assert lines[1] == "bin_y,bin_theta,count,density"
    assert lines[2 + 16] == "plate,bin_theta,count,density"
    assert len(lines) == 2 + 16 + 1 + 8


def test_distance_shrinks_at_monte_carlo_rate():
    mesh = build_mesh(10, 20, L, V)
    spec = constant_kernel(1.0, 0.2)
    pde = run(uniform_init(mesh), assemble(spec, mesh), mesh,
              SolverConfig(dt=1e-3, t_end=0.1, stop_at_steady=False)).state
    d = [weighted_l2_distance(simulate(n, 5, 1e-3, 0.1, spec, mesh).histograms[0.1].to_state(),
                              pde, mesh) for n in (5000, 20000)]
    assert d[1] / d[0] == pytest.approx(0.5, abs=0.15)


def test_noise_floor_scales_with_sample_size():
    mesh = build_mesh(5, 5, L, V)
    f = [bootstrap_noise_floor(simulate(n, 1, 1e-3, 0.0, SPEC, mesh).histograms[0.0], reps=16)
         for n in (4000, 16000)]
    assert f[1] / f[0] == pytest.approx(0.5, abs=0.1)
