import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from planelike import _accel
from planelike.energy import ForcingField, LatticeSet, empty_rule, full_rule, functional_J, halfspace_rule
from planelike.errors import CapacityOverflow
from planelike.kernel import KernelSpec
from planelike.lattice import Box, WindowGrid, build_stencil
from planelike.maxflow import build_graph, max_flow
from planelike.plateau import (brute_force_plateau, classA_window_check, set_value, solve_plateau, unit_boxes)


def _window(stencil, omega, extra=2):
    lo, hi = omega.cell_range(stencil.m)
    return WindowGrid(stencil.dim, stencil.m, lo, hi).grow(stencil.reach + extra)


def _random_instance(rng, st, omega):
    win = _window(st, omega)
    E = LatticeSet(win, rng.random(win.shape) < 0.5, empty_rule() if rng.random() < 0.5 else full_rule())
    g = ForcingField.from_values(rng.uniform(-1, 1, (st.m,) * st.dim) * 0.2)
    return E, g


def test_halfspace_ray_value(k1_1d):
    st = build_stencil(k1_1d, 16)
    om = Box((-1,), (1,))
    E = LatticeSet.from_rule(_window(st, om), halfspace_rule((1,), 0.0))
    res = solve_plateau(E, om, st, None)
    assert res.optimum == pytest.approx(2.0, rel=1e-9)
    assert res.optimum == pytest.approx(set_value(E, om, st), rel=1e-9)


def test_halfspace_2d_flat(st2_16):
    om = Box((0, 0), (1, 1))
    E = LatticeSet.from_rule(_window(st2_16, om), halfspace_rule((1, 0), 0.5))
    res = solve_plateau(E, om, st2_16, None)
    assert res.optimum <= set_value(E, om, st2_16) + 1e-9
    assert res.optimum == pytest.approx(set_value(E, om, st2_16), rel=1e-9)


def test_full_exterior(st1_32):
    om = Box((0,), (1,))
    E = LatticeSet.from_rule(_window(st1_32, om), full_rule())
    res = solve_plateau(E, om, st1_32, None)
    assert res.optimum == pytest.approx(0.0, abs=1e-12)
    assert res.set.indicator.all()


def test_matches_brute_force_12_cells(k1_1d, rng):
    st = build_stencil(k1_1d, 16)
    om = Box((0,), (0.75,))
    for _ in range(25):
        E, g = _random_instance(rng, st, om)
        a = solve_plateau(E, om, st, g)
        b = brute_force_plateau(E, om, st, g)
        assert a.n_free == 12
        assert a.optimum == pytest.approx(b.optimum, abs=1e-12)
        assert np.array_equal(a.set.indicator, b.set.indicator) or \
            set_value(a.set, om, st, g) == pytest.approx(b.optimum, abs=1e-12)


def test_brute_force_2d_and_F(st2_16, rng):
    om = Box((0, 0), (0.25, 0.1875))   # 4 x 3 cells
    for fn in ("J", "F"):
        E, g = _random_instance(rng, st2_16, om)
        a = solve_plateau(E, om, st2_16, g, fn)
        b = brute_force_plateau(E, om, st2_16, g, fn)
        assert a.optimum == pytest.approx(b.optimum, abs=1e-12)


def test_one_free_cell(k1_1d, rng):
    st = build_stencil(k1_1d, 16)
    om = Box((0,), (1 / 16,))
    E, g = _random_instance(rng, st, om)
    res = brute_force_plateau(E, om, st, g)
    i = np.flatnonzero(om.mask(E.window))[0]
    vals = []
    for lab in (False, True):
        ind = E.indicator.copy()
        ind[i] = lab
        vals.append(functional_J(E.with_indicator(ind), om, st, g).total)
    assert res.optimum == pytest.approx(min(vals), abs=1e-12)
    assert bool(res.set.indicator[i]) == (vals[1] < vals[0])


def test_empty_omega(st1_32, rng):
    om = Box((0.25,), (0.25,))
    E, g = _random_instance(rng, st1_32, Box((0,), (1,)))
    res = brute_force_plateau(E, om, st1_32, g)
    assert np.array_equal(res.set.indicator, E.indicator)
    assert res.n_free == 0


def test_value_matches_J(st1_32, rng):
    om = Box((0,), (1,))
    E, g = _random_instance(rng, st1_32, om)
    res = solve_plateau(E, om, st1_32, g)
    assert res.optimum == pytest.approx(functional_J(res.set, om, st1_32, g).total, abs=1e-9)


def test_classA_halfspace(st2_16):
    om = Box((-2, -2), (3, 3))
    E = LatticeSet.from_rule(_window(st2_16, om), halfspace_rule((0, 1), 0.0))
    chk = classA_window_check(E, unit_boxes(-1, 1, 2), st2_16, None)
    assert chk.worst_gap <= 1e-9


def test_classA_flipped_cell_detected(st2_16):
    om = Box((-2, -2), (3, 3))
    E = LatticeSet.from_rule(_window(st2_16, om), halfspace_rule((0, 1), 0.0))
    ind = E.indicator.copy()
    c = E.window.centers()
    i = np.unravel_index(np.argmin((c[0] - 0.5) ** 2 + (c[1] + 0.5) ** 2), ind.shape)
    ind[i] = ~ind[i]
    chk = classA_window_check(E.with_indicator(ind), [Box((0.0, -1.0), (1.0, 0.0))], st2_16, None)
    assert chk.worst_gap > 1e-3


def _scipy_flow(n, tails, heads, caps):
    M = csr_matrix((caps, (tails, heads)), shape=(n, n))
    return maximum_flow(M, 0, n - 1).flow_value


@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_maxflow_against_scipy(backend):
    rng = np.random.default_rng(7)
    with _accel.backend_scope(backend):
        for _ in range(30):
            n = int(rng.integers(4, 30))
            E = int(rng.integers(n, 5 * n))
            t, h = rng.integers(0, n, E), rng.integers(0, n, E)
            keep = t != h
            t, h = t[keep], h[keep]
            # merge duplicates so scipy sees the same capacities
            key = t * n + h
            uk, inv = np.unique(key, return_inverse=True)
            caps = np.bincount(inv, rng.integers(1, 100, len(key))).astype(np.int64)
            t, h = uk // n, uk % n
            g = build_graph(n, t, h, caps)
            assert max_flow(*g, 0, n - 1) == _scipy_flow(n, t, h, caps.astype(np.int32))


def test_capacity_overflow(st1_32):
    om = Box((0,), (1,))
    E = LatticeSet.from_rule(_window(st1_32, om), empty_rule())
    g = ForcingField.from_values(np.r_[1e30, -1e30, np.zeros(30)])
    with pytest.raises(CapacityOverflow):
        solve_plateau(E, om, st1_32, g)


@settings(max_examples=25)
@given(seed=st.integers(0, 2 ** 31), n_free=st.integers(1, 10))
def test_flow_equals_enumeration(seed, n_free):
    st1 = build_stencil(KernelSpec("K1", dim=1), 16)
    rng = np.random.default_rng(seed)
    om = Box((0,), (n_free / 16,))
    E, g = _random_instance(rng, st1, om)
    assert solve_plateau(E, om, st1, g).optimum == pytest.approx(brute_force_plateau(E, om, st1, g).optimum, abs=1e-12)


@settings(max_examples=15)
@given(seed=st.integers(0, 2 ** 31))
def test_complement_symmetry_of_plateau(seed):
    # with g = 0 the minimizer of the complement problem is the complement of the minimizer
    st1 = build_stencil(KernelSpec("K1", dim=1), 16)
    rng = np.random.default_rng(seed)
    om = Box((0,), (0.5,))
    E, _ = _random_instance(rng, st1, om)
    a = solve_plateau(E, om, st1, None)
    b = solve_plateau(E.complement(), om, st1, None)
    assert a.optimum == pytest.approx(b.optimum, abs=1e-12)
