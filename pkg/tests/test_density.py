from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from mvstefan import (
    AbsorbingStepPlan,
    BoundaryPath,
    DiracMixture,
    SimulationConfig,
    SubProbabilityGrid,
    TruncatedNormal,
    Uniform,
    absorbing_step,
    apply_boundary_increment,
    blowup_law,
    dominance_check,
    gamma_map,
    physical_jump,
    shift_law,
)
from mvstefan.density import (
    diffuse_below_level,
    diffuse_masses,
    gamma_map_with_ledger,
    level_crossing,
)


def two_on_04(dx=1e-3):
    """Surviving density 2 on (0, 0.4], total mass 0.8."""
    return SubProbabilityGrid(dx, np.full(int(round(0.4 / dx)), 2 * dx))


def test_kernel_weights_sum_to_one():
    for dt, dx in [(1e-3, 1e-3), (1.0, 0.01), (1e-10, 1e-3)]:
        assert AbsorbingStepPlan(dt, dx).weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_absorbing_step_reflection_principle():
    # cell 99 has its centre exactly at x = 1
    dx = 1 / 99.5
    m = np.zeros(1000)
    m[99] = 1.0
    out, absorbed = absorbing_step(SubProbabilityGrid(dx, m), AbsorbingStepPlan(1.0, dx))
    assert out.remaining == pytest.approx(2 * norm.cdf(1.0) - 1, abs=1e-4)
    assert absorbed == pytest.approx(1 - out.remaining - out.escaped_mass, abs=1e-12)


def test_absorbing_step_identity_limit():
    nu = SubProbabilityGrid(1e-3, np.full(500, 2e-3))
    out, absorbed = absorbing_step(nu, AbsorbingStepPlan(1e-10, 1e-3))
    assert np.max(np.abs(out.cell_masses - nu.cell_masses)) < 1e-8
    assert absorbed < 1e-8


def test_absorbing_step_far_from_zero():
    dt, dx = 1e-3, 1e-3
    m = np.zeros(2000)
    m[int(10 * np.sqrt(dt) / dx) + 1] = 1.0
    _, absorbed = absorbing_step(SubProbabilityGrid(dx, m), AbsorbingStepPlan(dt, dx))
    assert absorbed < 1e-12


def test_boundary_increment_examples():
    nu = two_on_04()
    same, a = apply_boundary_increment(nu, 0.0)
    assert a == 0.0 and np.array_equal(same.cell_masses, nu.cell_masses)
    out, a = apply_boundary_increment(nu, 0.2)
    assert a == pytest.approx(0.4, abs=1e-12)
    assert np.allclose(out.cell_masses[:200], 2e-3) and np.allclose(out.cell_masses[200:], 0.0)
    out, a = apply_boundary_increment(nu, 0.4)
    assert a == pytest.approx(0.8, abs=1e-12) and out.remaining == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        apply_boundary_increment(nu, -0.1)


def test_boundary_increment_fractional_cell():
    nu = SubProbabilityGrid(0.1, np.array([0.1, 0.2, 0.3]))
    out, a = apply_boundary_increment(nu, 0.15)
    # integrate the shifted piecewise-uniform density directly
    assert a == pytest.approx(0.1 + 0.5 * 0.2)
    assert np.allclose(out.cell_masses, [0.5 * 0.2 + 0.5 * 0.3, 0.5 * 0.3, 0.0])


def test_gamma_first_passage(coarse):
    cfg = coarse.with_updates(dt=1e-3, dx=1e-3, x_max=None)
    law = DiracMixture.of([(1, 1)])
    zero = BoundaryPath.zero(cfg)
    assert gamma_map(law, zero, cfg).values[-1] == pytest.approx(2 * (1 - norm.cdf(1)), abs=2e-3)
    half = BoundaryPath.on_grid(cfg.dt, np.full(cfg.n_steps + 1, 0.5))
    assert gamma_map(law, half, cfg).values[-1] == pytest.approx(2 * (1 - norm.cdf(0.5)), abs=2e-3)


@pytest.mark.parametrize("x0", [0.0, -0.5])
def test_gamma_nonpositive_start(coarse, x0):
    cfg = coarse.with_updates(alpha=0.7)
    law = DiracMixture.of([(x0, 1)])
    rng = np.random.default_rng(1)
    ell = BoundaryPath.on_grid(cfg.dt, np.cumsum(rng.uniform(0, 0.01, cfg.n_steps + 1)))
    out = gamma_map(law, ell, cfg)
    assert np.all(out.grid_values == 0.7)


def _ordered_paths(n, seed, scale):
    rng = np.random.default_rng(seed)
    a = rng.exponential(scale, n) * (rng.uniform(size=n) < 0.3)
    b = rng.exponential(scale, n) * (rng.uniform(size=n) < 0.3)
    return np.cumsum(a), np.cumsum(a + b)


LAWS = [
    Uniform(0, 1),
    DiracMixture.of([(0.3, 0.4), (0.8, 0.6)]),
    TruncatedNormal(0.4, 0.3),
    blowup_law(0.6, dx=0.02),
]


@given(st.integers(0, 2**32 - 1), st.sampled_from(LAWS), st.sampled_from([0.005, 0.02, 0.1]), st.sampled_from(["step_end", "step_start"]))
def test_gamma_monotone_in_path(seed, law, scale, order):
    cfg = SimulationConfig(alpha=1.0, horizon=0.5, dt=0.02, dx=0.02, x_max=3.0, increment_at=order)
    l1, l2 = _ordered_paths(cfg.n_steps + 1, seed, scale)
    g1 = gamma_map(law, BoundaryPath.on_grid(cfg.dt, l1), cfg)
    g2 = gamma_map(law, BoundaryPath.on_grid(cfg.dt, l2), cfg)
    assert np.all(g1.values <= g2.values)


@given(st.integers(0, 2**32 - 1), st.sampled_from(LAWS), st.floats(0.1, 3.0))
def test_gamma_bounded_nondecreasing(seed, law, alpha):
    cfg = SimulationConfig(alpha=alpha, horizon=0.5, dt=0.02, dx=0.02, x_max=3.0)
    l1, _ = _ordered_paths(cfg.n_steps + 1, seed, 0.05)
    g = gamma_map(law, BoundaryPath.on_grid(cfg.dt, l1), cfg)
    assert np.all(np.diff(g.values) >= 0)
    assert np.all(g.values <= alpha)


@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_gamma_monotone_in_law(x, y):
    cfg = SimulationConfig(alpha=1.0, horizon=0.5, dt=0.02, dx=0.02, x_max=3.0)
    base = TruncatedNormal(0.5, 0.3)
    f, fn = shift_law(base, min(x, y)), shift_law(base, max(x, y))
    assert dominance_check(f, fn)
    zero = BoundaryPath.zero(cfg)
    assert np.all(gamma_map(fn, zero, cfg).values <= gamma_map(f, zero, cfg).values + 1e-15)


@pytest.mark.parametrize("law", LAWS + [Uniform(-0.2, 0.5)])
def test_mass_ledger(coarse, law):
    rng = np.random.default_rng(0)
    ell = BoundaryPath.on_grid(coarse.dt, np.cumsum(rng.exponential(0.003, coarse.n_steps + 1)))
    _, ledger = gamma_map_with_ledger(law, ell, coarse)
    assert ledger.max_error() < 1e-10


def test_level_step_at_zero_is_the_image_step():
    plan = AbsorbingStepPlan(1e-3, 1e-3)
    m = np.random.default_rng(3).uniform(size=800)
    m /= m.sum()
    a = diffuse_masses(m, plan)
    b = diffuse_below_level(m, plan, 0.0)
    assert np.allclose(a[0], b[0], atol=1e-15)
    assert a[1] == pytest.approx(b[1], abs=1e-12)


def test_physical_jump_examples():
    nu = two_on_04()
    assert physical_jump(nu, 1.0) == pytest.approx(0.8, abs=1e-3)
    # density bounded by 1/(2 alpha)
    alpha = 2.0
    flat = SubProbabilityGrid(1e-3, np.full(3000, 1e-3 / (2 * alpha)))
    assert physical_jump(flat, alpha) == 0.0
    for alpha in (0.5, 1.0, 2.0):
        law = blowup_law(alpha)
        nu0 = SubProbabilityGrid.from_law(law, 1e-3, 3.0)
        assert physical_jump(nu0, alpha) == pytest.approx(alpha, abs=1e-3)


def test_physical_jump_cap():
    nu = SubProbabilityGrid(0.01, np.full(10, 0.1))
    assert physical_jump(nu, 5.0) <= 5.0 * nu.remaining + nu.dx


@given(
    st.lists(st.floats(0.0, 0.05), min_size=5, max_size=60),
    st.integers(0, 59),
    st.floats(0.0, 0.05),
    st.floats(0.2, 4.0),
    st.booleans(),
)
def test_physical_jump_monotone_in_mass(masses, cell, extra, alpha, refine):
    m = np.array(masses)
    bigger = m.copy()
    bigger[cell % m.size] += extra
    d0 = physical_jump(SubProbabilityGrid(0.01, m), alpha, refine=refine)
    d1 = physical_jump(SubProbabilityGrid(0.01, bigger), alpha, refine=refine)
    assert d1 >= d0 - 1e-12


def test_level_crossing_kills_what_it_moves_over():
    dx = 0.01
    m = np.full(100, 0.01)
    # any move kills the whole first cell, so the smallest jump is alpha * m[0]
    jump, stop = level_crossing(m, dx, 0.0, 0.5)
    assert jump == pytest.approx(0.005) and stop == 1
    m = np.zeros(100)
    m[:20] = 0.05
    jump, stop = level_crossing(m, dx, 0.0, 1.0)
    # alpha A(x) jumps to at least 0.05 per cell passed; everything is swept up
    assert jump == pytest.approx(1.0) and stop >= 20
