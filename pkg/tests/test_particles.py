from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import gammaln
from scipy.stats import norm

from mvstefan import DiracMixture, SimulationConfig, Uniform, cascade_resolve, crossing_diagnostic, simulate
from mvstefan.particles import brownian_windows, detected_hit_windows, normals, uniforms


def test_cascade_examples():
    d, idx = cascade_resolve(np.array([0.2, 0.3, 0.9]), 1 / 3, 1)
    assert d == pytest.approx(4 / 3) and list(idx) == [0, 1, 2]
    d, idx = cascade_resolve(np.array([1.0, 2.0]), 1 / 3, 1)
    assert d == pytest.approx(1 / 3) and idx.size == 0
    d, idx = cascade_resolve(np.array([0.3, 0.35]), 1 / 3, 1)
    assert d == pytest.approx(1.0) and list(idx) == [0, 1]
    with pytest.raises(ValueError):
        cascade_resolve(np.array([0.1]), 0.1, 0)


positions = st.lists(st.floats(0.0, 2.0), min_size=0, max_size=30)


@given(positions, st.floats(0.01, 0.5), st.integers(1, 5), st.randoms(use_true_random=False))
def test_cascade_permutation_invariant(xs, p, hit, rnd):
    x = np.array(xs, dtype=float)
    perm = list(range(x.size))
    rnd.shuffle(perm)
    d0, i0 = cascade_resolve(x, p, hit)
    d1, i1 = cascade_resolve(x[perm], p, hit)
    assert d0 == d1
    assert sorted(x[i0].tolist()) == sorted(x[perm][i1].tolist())


@given(positions.filter(bool), st.integers(0, 29), st.floats(0.0, 1.0), st.floats(0.01, 0.5), st.integers(1, 5))
def test_cascade_monotone(xs, j, drop, p, hit):
    x = np.array(xs, dtype=float)
    lower = x.copy()
    lower[j % x.size] = max(0.0, lower[j % x.size] - drop)
    assert cascade_resolve(lower, p, hit)[0] >= cascade_resolve(x, p, hit)[0]


def test_streams_are_sliceable():
    full = uniforms(7, 0, 64, 3, 1)
    assert np.array_equal(full[16:40], uniforms(7, 16, 24, 3, 1))
    assert np.all((full > 0) & (full < 1))
    z = normals(7, 0, 200000, 1, 1)
    assert abs(z.mean()) < 0.01 and abs(z.std() - 1) < 0.01


def test_loss_steps_are_multiples_of_alpha_over_n():
    cfg = SimulationConfig(alpha=0.7, dt=0.01, horizon=0.5, seed=5)
    n = 997
    path, log = simulate(Uniform(0, 1), n, cfg)
    counts = path.grid_values * n / cfg.alpha
    assert np.allclose(counts, np.round(counts), atol=1e-9)
    assert np.all(np.diff(path.values) >= 0)
    d = log.to_dict()
    assert sum(d["newly_hit"]) + sum(d["cascade_size"]) == round(counts[-1])


def test_same_seed_same_path():
    cfg = SimulationConfig(alpha=0.5, dt=0.01, horizon=0.5, seed=11)
    a, _ = simulate(Uniform(0, 1), 5000, cfg)
    b, _ = simulate(Uniform(0, 1), 5000, cfg)
    c, _ = simulate(Uniform(0, 1), 5000, cfg.with_updates(seed=12))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_single_particle_first_passage():
    cfg = SimulationConfig(alpha=1.0, dt=0.01)
    law = DiracMixture.of([(1, 1)])
    runs = 3000
    hits = [simulate(law, 1, cfg.with_updates(seed=s))[0].values[-1] for s in range(runs)]
    p = 2 * (1 - norm.cdf(1))
    se = np.sqrt(p * (1 - p) / runs)
    assert abs(np.mean(hits) - p) < 3 * se


def test_negligible_feedback_ensemble_first_passage():
    # with alpha/N tiny the deaths barely move the others: independent first passages
    n = 100_000
    cfg = SimulationConfig(alpha=1e-9, dt=1e-3, seed=2)
    path, _ = simulate(DiracMixture.of([(1, 1)]), n, cfg)
    frac = path.values[-1] / cfg.alpha
    assert frac == pytest.approx(2 * (1 - norm.cdf(1)), abs=0.0044)


def test_far_away_particles_never_die():
    cfg = SimulationConfig(alpha=1.0, dt=0.01)
    path, log = simulate(DiracMixture.of([(100, 1)]), 1000, cfg)
    assert np.all(path.values == 0.0) and len(log) == 0


def test_time_zero_deaths():
    cfg = SimulationConfig(alpha=1.0, dt=0.01, horizon=0.1)
    path, _ = simulate(Uniform(-1, 1), 1000, cfg)
    assert path.grid_values[0] >= 0.5 - 0.1


def test_crossing_diagnostic_brownian_windows():
    w = detected_hit_windows(10_000, 0.1, 1e-4, seed=3)
    assert len(w) > 9000
    assert crossing_diagnostic(w, 0.1) < 0.01


def test_crossing_diagnostic_degenerate_windows():
    up = [np.linspace(0, 1, 50)] * 10
    assert crossing_diagnostic(up, 0.1) == 1.0
    assert crossing_diagnostic(brownian_windows(10, 0.1, 1e-3), 0.0) == 1.0


def test_windows_started_on_the_level():
    # a symmetric walk from 0 stays >= 0 for n samples with probability C(2n, n) / 4^n
    steps = 1000
    w = brownian_windows(10_000, 0.1, 1e-4, seed=3)
    p = np.exp(gammaln(2 * steps + 1) - 2 * gammaln(steps + 1) - steps * np.log(4))
    se = np.sqrt(p * (1 - p) / len(w))
    assert abs(crossing_diagnostic(w, 0.1) - p) < 3 * se


def test_crossing_fraction_shrinks_with_dt():
    fr = [crossing_diagnostic(brownian_windows(4000, 0.1, dt, seed=4), 0.1) for dt in (1e-2, 1e-3, 1e-4)]
    assert fr[0] > fr[1] > fr[2]
