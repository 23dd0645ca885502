from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mvstefan import (
    BoundaryPath,
    DiracMixture,
    Empirical,
    GridDensity,
    SimulationConfig,
    SubProbabilityGrid,
    TruncatedNormal,
    Uniform,
    blowup_law,
    cdf_eval,
    dominance_check,
    law_from_dict,
    shift_law,
    smooth_law_exponential,
)


def test_cdf_examples():
    assert cdf_eval(Uniform(0, 1), 0.5) == pytest.approx(0.5)
    assert cdf_eval(DiracMixture.of([(1, 1)]), 0.999) == 0.0
    vals = [0.2, 0.4, 0.9]
    oracle = sum(v <= 0.4 for v in vals) / len(vals)
    assert cdf_eval(Empirical(np.array(vals)), 0.4) == pytest.approx(oracle)


@pytest.mark.parametrize(
    "law",
    [Uniform(0, 1), DiracMixture.of([(0.3, 0.5), (1.0, 0.5)]), TruncatedNormal(0.5, 0.3), blowup_law(1.0)],
)
def test_cdf_nondecreasing_and_right_continuous(law):
    x = np.linspace(-1, 3, 4001)
    c = np.asarray(law.cdf(x))
    assert np.all(np.diff(c) >= 0)
    assert np.allclose(law.cdf(x + 1e-13), c, atol=1e-9)
    assert c[0] == pytest.approx(0.0) and c[-1] == pytest.approx(1.0)


def test_total_mass_and_mean_abs():
    assert Uniform(-1, 1).mean_abs == pytest.approx(0.5)
    assert DiracMixture.of([(-2, 0.5), (1, 0.5)]).mean_abs == pytest.approx(1.5)
    for law in (Uniform(0, 1), TruncatedNormal(0.5, 0.3), blowup_law(0.5)):
        d = law.discretize(0.01, 6.0)
        assert d.atom + d.masses.sum() + d.beyond == pytest.approx(1.0, abs=1e-12)


def test_invalid_laws_rejected():
    with pytest.raises(ValueError):
        DiracMixture.of([(1, 0.5)])
    with pytest.raises(ValueError):
        DiracMixture.of([(1, -0.5), (2, 1.5)])
    # unsorted samples are sorted on construction
    assert list(Empirical(np.array([0.4, 0.2])).values) == [0.2, 0.4]


def test_shift_examples():
    law = shift_law(DiracMixture.of([(1, 1)]), -0.25)
    assert list(law.locations) == [0.75] and list(law.weights) == [1.0]
    u = Uniform(0, 1)
    s = shift_law(u, -0.3)
    assert s.atom_mass == pytest.approx(0.3)
    d = s.discretize(0.01, 2.0)
    assert d.atom == pytest.approx(0.3)
    # remainder uniform on (0, 0.7]
    assert np.allclose(d.masses[:70], 0.01)
    assert np.allclose(d.masses[70:], 0.0)
    assert shift_law(u, 0.0) is u


@given(st.floats(-0.6, 0.6), st.floats(-0.6, 0.6))
def test_shift_composes_additively(a, b):
    laws = [
        (Uniform(0, 1), [0.0, 1.0]),
        (DiracMixture.of([(0.5, 0.3), (1.2, 0.7)]), [0.5, 1.2]),
        (TruncatedNormal(0.5, 0.3), [0.0]),
    ]
    x = np.linspace(-2, 3, 501)
    for law, breaks in laws:
        # stay off the breakpoints, where a + b and (. + a) + b may round differently
        keep = np.min(np.abs(x[:, None] - (np.array(breaks) + a + b)[None, :]), axis=1) > 1e-9
        lhs = np.asarray(shift_law(shift_law(law, a), b).cdf(x[keep]))
        rhs = np.asarray(shift_law(law, a + b).cdf(x[keep]))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_grid_shift_composes_additively():
    g = blowup_law(1.0, dx=0.01)
    lhs = shift_law(shift_law(g, 0.13), -0.05)
    rhs = shift_law(g, 0.08)
    x = np.linspace(-1, 2, 3001)
    assert np.max(np.abs(np.asarray(lhs.cdf(x)) - np.asarray(rhs.cdf(x)))) <= 1e-12


def test_smoothing_matches_shifted_exponential():
    rate, dx = 10.0, 1e-3
    law = smooth_law_exponential(DiracMixture.of([(1, 1)]), rate, dx=dx)
    x = np.linspace(1.0, 2.0, 101)
    oracle = 1.0 - np.exp(-rate * (x - 1.0))
    # the atom is lumped onto neighbouring cell centres first, so allow one cell of smearing
    assert np.max(np.abs(np.asarray(law.cdf(x)) - oracle)) < rate * dx
    assert np.asarray(law.masses).sum() == pytest.approx(1.0, abs=1e-10)


def test_smoothing_large_rate_and_ordering():
    base = Uniform(0, 1)
    big = smooth_law_exponential(base, 1e6)
    x = np.linspace(-0.5, 1.5, 2001)
    assert np.max(np.abs(np.asarray(big.cdf(x)) - np.asarray(base.cdf(x)))) < 1e-4
    s5, s10 = smooth_law_exponential(base, 5), smooth_law_exponential(base, 10)
    grid = np.arange(0, 3001) * 1e-3
    assert np.all(np.asarray(s10.cdf(grid)) >= np.asarray(s5.cdf(grid)) - 1e-12)
    assert dominance_check(s10, s5)
    with pytest.raises(ValueError):
        smooth_law_exponential(base, 0.0)


def test_dominance_examples():
    f = Uniform(0, 1)
    assert dominance_check(f, shift_law(f, 0.5))
    assert dominance_check(f, f)
    g = Uniform(0.5, 0.6)
    # the CDFs cross: F is above G at 0.55 and below it at 0.9
    assert f.cdf(0.55) > g.cdf(0.55) and f.cdf(0.9) < g.cdf(0.9)
    assert not dominance_check(f, g)


def test_config_invariants():
    with pytest.raises(ValueError):
        SimulationConfig(alpha=0.0)
    with pytest.raises(ValueError):
        SimulationConfig(alpha=1.0, dt=2.0, horizon=1.0)
    with pytest.raises(ValueError):
        SimulationConfig(alpha=1.0, dx=1.0, x_max=0.5)
    with pytest.raises(ValueError):
        SimulationConfig(alpha=1.0, picard_tol=0.0)
    cfg = SimulationConfig(alpha=0.5, seed=3)
    assert SimulationConfig.from_dict(cfg.to_dict()) == cfg
    assert cfg.n_steps == 1000


def test_default_x_max_covers_the_law():
    cfg = SimulationConfig(alpha=1.0)
    law = TruncatedNormal(2.0, 0.5)
    x_max = cfg.resolve_x_max(law)
    assert 1 - law.cdf(x_max - 3.0) < 1e-8


def test_law_from_dict_variants():
    assert isinstance(law_from_dict({"variant": "uniform", "a": 0, "b": 1}), Uniform)
    d = law_from_dict({"variant": "dirac", "atoms": [[1, 1]], "shift": -0.25})
    assert list(d.locations) == [0.75]
    g = law_from_dict({"variant": "blowup", "alpha": 1.0})
    assert isinstance(g, GridDensity) and g.cdf(0.5) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        law_from_dict({"variant": "cauchy"})


def test_boundary_path_validation():
    p = BoundaryPath.on_grid(0.5, [0.0, 0.1, 0.3])
    assert p(-0.5) == 0.0 and p(0.75) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        BoundaryPath.on_grid(0.5, [0.2, 0.1])
    with pytest.raises(ValueError):
        BoundaryPath(np.array([-1.0, 0.5]), np.array([0.0, 0.0]))


def test_subprobability_ledger():
    nu = SubProbabilityGrid(0.1, np.array([0.2, 0.3]), lost_mass=0.4, escaped_mass=0.1)
    assert nu.ledger_error() < 1e-15
    with pytest.raises(ValueError):
        SubProbabilityGrid(0.1, np.array([-0.1]))


@pytest.mark.parametrize(
    "law",
    [DiracMixture.of([(0.5, 1)]), DiracMixture.of([(0.3337, 0.4), (-0.2001, 0.6)]), Empirical(np.array([0.11, 0.5, 0.5, 0.93]))],
)
def test_smoothing_atoms_only_moves_mass_right(law):
    prev = law
    for rate in (1.0, 4.0, 16.0, 64.0, 256.0, 1024.0)[::-1]:
        s = smooth_law_exponential(law, rate)
        assert dominance_check(law, s)
        # a smaller rate sits further right
        assert dominance_check(prev, s)
        prev = s
