import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from planelike.cellsolver import PeriodicProfile, solve_cell_problem
from planelike.energy import (ForcingField, LatticeSet, empty_rule, energy_at_zero, halfspace_rule, pair_term)
from planelike.geometry import (OMEGA, coarea_check, density_estimates, extract_level_sets, layer_cake_pair_sum,
                                oscillation, perimeter_lower_bound_probe, planelike_report)
from planelike.kernel import KernelSpec
from planelike.lattice import Box, TorusGrid, WindowGrid, build_stencil


@pytest.fixture(scope="module")
def solved_1d():
    st1 = build_stencil(KernelSpec("K1", dim=1), 64)
    g = ForcingField.cosine(1, 64, 0.05)
    u, z, rep = solve_cell_problem((1,), stencil=st1, g=g)
    return st1, u


def _zero(dim, m, p):
    return PeriodicProfile(TorusGrid(dim, m), np.zeros((m,) * dim), p)


def test_zero_profile_gives_halfspaces():
    u = _zero(2, 16, (2, 1))
    win = WindowGrid(2, 16, (-16, -16), (32, 32))
    fam = extract_level_sets(u, window=win, t_rule=[0.1, 0.7])
    c = win.centers()
    for t, E in zip(fam.thresholds, fam.sets):
        assert np.array_equal(E.indicator, 2 * c[0] + c[1] > t)


def test_nesting_on_solved_instance(solved_1d):
    st1, u = solved_1d
    win = WindowGrid(1, 64, (-128,), (192,))
    fam = extract_level_sets(u, window=win, count=33)
    assert fam.nested()
    for a, b in zip(fam.sets, fam.sets[1:]):
        assert not np.any(b.indicator & ~a.indicator)


def test_low_threshold_everything_inside(solved_1d):
    st1, u = solved_1d
    win = WindowGrid(1, 64, (0,), (64,))
    t = float(u.v_on(win).min()) - 1.0
    fam = extract_level_sets(u, window=win, t_rule=[t])
    assert fam.sets[0].indicator.all()


def test_oscillation_affine():
    m = 16
    osc_v, osc_u = oscillation(_zero(2, m, (1, 0)))
    assert osc_v == pytest.approx(1 - 1 / m, rel=1e-12)
    assert osc_u == 0.0


def test_oscillation_triangle(solved_1d):
    st1, u = solved_1d
    osc_v, osc_u = oscillation(u)
    assert osc_u <= osc_v + 1.0 + 1e-12


def test_planelike_report_zero_profile():
    rep = planelike_report(_zero(2, 16, (1, 0)), periods=2)
    assert math.isfinite(rep.M)
    assert rep.M <= 1.0


def test_density_flat_1d():
    m = 64
    win = WindowGrid(1, m, (-2 * m,), (2 * m,))
    E = LatticeSet.from_rule(win, halfspace_rule((-1,), 0.0))
    d = density_estimates(E, [8 / m, 16 / m])
    assert d.min_ratio == pytest.approx(1.0, abs=1 / 8 + 1e-12)
    assert d.max_ratio == pytest.approx(1.0, abs=1 / 8 + 1e-12)


def test_density_flat_2d():
    m = 32
    win = WindowGrid(2, m, (-m, -m), (2 * m, 2 * m))
    E = LatticeSet.from_rule(win, halfspace_rule((1, 0), 0.5))
    d = density_estimates(E, [8 / m, 16 / m])
    assert d.min_ratio == pytest.approx(OMEGA[2] / 2, rel=0.15)
    assert d.max_ratio <= OMEGA[2] - 0.1


def test_density_flags_island():
    m = 32
    win = WindowGrid(2, m, (-m, -m), (2 * m, 2 * m))
    E = LatticeSet.from_rule(win, halfspace_rule((1, 0), 0.6))
    ind = E.indicator.copy()
    c = win.centers()
    i = np.unravel_index(np.argmin((c[0] - 0.2) ** 2 + (c[1] - 0.5) ** 2), ind.shape)
    assert not ind[i]
    ind[i] = True
    d = density_estimates(E.with_indicator(ind), [4 / m, 8 / m])
    assert d.min_ratio < 0.1
    # flagged at the island or at one of its boundary neighbours
    assert max(abs(int(a) - int(b)) for a, b in zip(d.worst_point, i)) <= 1


def test_coarea_zero_profile(st2_16):
    u = np.zeros((16, 16))
    a = pair_term(u, (1, 2), st2_16)
    assert a == pytest.approx(energy_at_zero((1, 2), st2_16), rel=1e-14)
    assert layer_cake_pair_sum(u, (1, 2), st2_16) == pytest.approx(a, rel=1e-14)


def test_coarea_random_2d_m32(k1_2d):
    st = build_stencil(k1_2d, 32)
    rng = np.random.default_rng(5)
    u = rng.standard_normal((32, 32))
    u -= u.mean()
    assert coarea_check(u, (1, -2), st) <= 1e-12


@settings(max_examples=30)
@given(seed=st.integers(0, 2 ** 31), p=st.integers(-4, 4), scale=st.floats(1e-3, 10))
def test_coarea_property_1d(seed, p, scale):
    st1 = build_stencil(KernelSpec("K1", dim=1), 32)
    rng = np.random.default_rng(seed)
    u = scale * rng.standard_normal(32)
    u -= u.mean()
    assert coarea_check(u, (p,), st1) <= 1e-12


@settings(max_examples=20)
@given(seed=st.integers(0, 2 ** 31), ts=st.lists(st.floats(-3, 3), min_size=2, max_size=6))
def test_nesting_property(seed, ts):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((8, 8)) * 0.3
    vals -= vals.mean()
    u = PeriodicProfile(TorusGrid(2, 8), vals, (1, 1))
    fam = extract_level_sets(u, window=WindowGrid(2, 8, (-8, -8), (16, 16)), t_rule=ts)
    assert fam.nested()


def test_lower_bound_probe_empty(st2_16):
    E = LatticeSet.from_rule(WindowGrid(2, 16, (-32, -32), (48, 48)), empty_rule())
    pr = perimeter_lower_bound_probe(E, Box((0, 0), (1, 1)), st2_16)
    assert pr.count == 0 and pr.perimeter == 0.0


def test_lower_bound_probe_two_interfaces(st2_16):
    win = WindowGrid(2, 16, (-32, -32), (64, 64))
    om = Box((-1, -1), (3, 2))
    one = LatticeSet.from_rule(win, halfspace_rule((-1, 0), -0.5))
    c = win.centers()
    two = one.with_indicator((c[0] < 0.5) | (c[0] > 1.5))
    a = perimeter_lower_bound_probe(one, om, st2_16)
    b = perimeter_lower_bound_probe(two, om, st2_16)
    assert a.count > 0
    assert b.count == pytest.approx(2 * a.count, rel=0.1)
    assert b.perimeter == pytest.approx(2 * a.perimeter, rel=0.1)


def test_lower_bound_ratio_stable_under_refinement(k1_2d):
    ratios = []
    for m in (16, 32):
        st = build_stencil(k1_2d, m)
        win = WindowGrid(2, m, (-2 * m, -2 * m), (3 * m, 3 * m))
        E = LatticeSet.from_rule(win, halfspace_rule((1, 0), 0.5))
        pr = perimeter_lower_bound_probe(E, Box((-1, -1), (2, 2)), st)
        ratios.append(pr.perimeter / (pr.count * pr.zeta))
    assert ratios[1] == pytest.approx(ratios[0], rel=0.25)
