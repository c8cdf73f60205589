import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from planelike.energy import (ForcingField, LatticeSet, cell_energy, check_cube_bound, empty_rule, energy_at_zero,
                              full_rule, functional_E_trunc, functional_F, functional_J, halfspace_rule, interaction,
                              perimeter, periodic_rule)
from planelike.errors import PreconditionError
from planelike.lattice import Box, WindowGrid, build_stencil

HALF_PAIR = 8 * math.sqrt(0.5) - 4  # L((0,1/2),(1/2,1)) for K1 s=1/4 in 1D


def _halves(m):
    w = WindowGrid(1, m, (0,), (m,))
    c = w.centers()[0]
    return LatticeSet(w, c < 0.5, empty_rule()), LatticeSet(w, c > 0.5, empty_rule())


def _random_set(rng, m, dim, lo=-1, hi=2, rule=None):
    w = WindowGrid(dim, m, (lo * m,) * dim, (hi * m,) * dim)
    return LatticeSet(w, rng.random(w.shape) < 0.5, rule or empty_rule())


def test_interaction_empty(st1_32):
    A, B = _halves(32)
    empty = A.with_indicator(np.zeros_like(A.indicator))
    assert interaction(empty, B, st1_32) == 0.0


def test_interaction_closed_form(k1_1d):
    st = build_stencil(k1_1d, 128)
    A, B = _halves(128)
    assert interaction(A, B, st) == pytest.approx(HALF_PAIR, rel=1e-10)


def test_interaction_symmetric(st2_16, rng):
    A = _random_set(rng, 16, 2, 0, 1)
    B = A.with_indicator(~A.indicator & (rng.random(A.indicator.shape) < 0.5))
    assert interaction(A, B, st2_16) == pytest.approx(interaction(B, A, st2_16), rel=1e-12)


def test_perimeter_full_space(st2_16):
    E = LatticeSet.from_rule(WindowGrid(2, 16, (-16, -16), (32, 32)), full_rule())
    assert perimeter(E, Box((0, 0), (1, 1)), st2_16).total == 0.0


def test_halfspace_ray_perimeter(st1_32):
    E = LatticeSet.from_rule(WindowGrid(1, 32, (-64,), (64,)), halfspace_rule((-1,), 0.0))
    assert perimeter(E, Box((-1,), (1,)), st1_32).total == pytest.approx(2.0, rel=1e-12)


def test_perimeter_complement(st2_16, rng):
    E = _random_set(rng, 16, 2)
    om = Box((0, 0), (1, 1))
    a = perimeter(E, om, st2_16).total
    b = perimeter(E.complement(), om, st2_16).total
    assert a == pytest.approx(b, rel=1e-12)


def test_J_zero_forcing_is_perimeter(st2_16, rng):
    E = _random_set(rng, 16, 2)
    om = Box((0, 0), (1, 1))
    assert functional_J(E, om, st2_16, None).total == pytest.approx(perimeter(E, om, st2_16).total, rel=1e-14)


def test_J_empty(st1_32):
    E = LatticeSet.from_rule(WindowGrid(1, 32, (-32,), (64,)), empty_rule())
    g = ForcingField.cosine(1, 32, 0.3)
    assert functional_J(E, Box((0,), (1,)), st1_32, g).total == 0.0


def test_J_complement_difference(st1_32, rng):
    g = ForcingField.cosine(1, 32, 0.2)
    E = _random_set(rng, 32, 1)
    om = Box((0,), (1.5,))
    a = functional_J(E, om, st1_32, g)
    b = functional_J(E.complement(), om, st1_32, g)
    w = E.window
    mask = om.mask(w)
    gv = g.on_window(w)
    sign = np.where(E.indicator, 1.0, -1.0)
    expected = float(np.sum((gv * sign)[mask])) / 32
    assert a.total - b.total == pytest.approx(expected, abs=1e-12)


def test_F_small_domain_has_no_forcing(st1_32, rng):
    g = ForcingField.cosine(1, 32, 0.2)
    E = _random_set(rng, 32, 1)
    om = Box((0.25,), (0.75,))
    F = functional_F(E, om, st1_32, g, 1.0)
    assert F.forcing == 0.0
    assert F.total == pytest.approx(perimeter(E, om, st1_32).total, rel=1e-12)


def test_F_minus_Etrunc(st2_16, rng):
    g = ForcingField.cosine(2, 16, 0.1)
    # window covers omega plus the stencil reach, so window-only sums are exact
    E = _random_set(rng, 16, 2, -2, 4)
    om = Box((0, 0), (2, 2))
    F = functional_F(E, om, st2_16, g, 1.0)
    T = functional_E_trunc(E, om, st2_16, g, 1.0, form="subtract")
    w = E.window
    inside = om.mask(w)
    A = E.with_indicator(E.indicator & inside)
    B = LatticeSet(w, ~E.indicator & ~inside, full_rule())  # E is empty beyond the window
    assert F.total - T.total == pytest.approx(interaction(A, B, st2_16), rel=1e-10)
    assert F.total - T.total >= 0


def test_Etrunc_full_is_forcing(st1_32):
    g = ForcingField.cosine(1, 32, 0.2)
    E = LatticeSet.from_rule(WindowGrid(1, 32, (-64,), (96,)), full_rule())
    T = functional_E_trunc(E, Box((0,), (2,)), st1_32, g, 1.0)
    assert T.total == pytest.approx(T.forcing, abs=1e-14)
    assert T.interaction_in_in == 0 and T.interaction_in_out == 0


def test_Etrunc_le_F_halfspace(st2_16):
    E = LatticeSet.from_rule(WindowGrid(2, 16, (-32, -32), (64, 64)), halfspace_rule((1, 0), 0.5))
    om = Box((0, 0), (1, 1))
    for form in ("integral", "subtract"):
        assert functional_E_trunc(E, om, st2_16, None, 1.0, form=form).total <= functional_F(E, om, st2_16).total


def test_Etrunc_unknown_form(st1_32):
    E = LatticeSet.from_rule(WindowGrid(1, 32, (0,), (32,)), empty_rule())
    with pytest.raises(PreconditionError):
        functional_E_trunc(E, Box((0,), (1,)), st1_32, form="bogus")


def test_energy_at_zero_1d(st1_32):
    assert energy_at_zero((1,), st1_32) == pytest.approx(2.0, rel=1e-12)
    g = ForcingField.cosine(1, 32, 0.4)
    assert cell_energy(np.zeros(32), (1,), st1_32, g) == pytest.approx(2.0, rel=1e-12)


def test_cell_energy_p_zero(st2_16):
    assert cell_energy(np.zeros((16, 16)), (0, 0), st2_16) == 0.0


def test_cell_energy_zero_is_minimal_without_forcing(st1_32, rng):
    e0 = cell_energy(np.zeros(32), (1,), st1_32)
    for _ in range(20):
        u = 1e-3 * rng.standard_normal(32)
        u -= u.mean()
        assert cell_energy(u, (1,), st1_32) >= e0 - 1e-12


def test_cube_bound_empty(st1_32):
    F = LatticeSet.from_rule(WindowGrid(1, 32, (0,), (32,)), empty_rule())
    b = check_cube_bound(F, (0,), st1_32)
    assert b.passed and b.lhs >= 0 and b.rhs == 0


def test_cube_bound_left_half(k1_1d):
    st = build_stencil(k1_1d, 128)
    A, _ = _halves(128)
    b = check_cube_bound(A, (0,), st)
    assert b.lhs == pytest.approx(HALF_PAIR, rel=1e-10)
    assert b.rhs == pytest.approx(0.25, rel=1e-6)
    assert b.passed


def test_cube_bound_random_sweep(st2_16, rng):
    g = ForcingField.cosine(2, 16, st2_16.kernel.kappa3 / 4)
    for _ in range(50):
        F = _random_set(rng, 16, 2, 0, 1)
        assert check_cube_bound(F, (0, 0), st2_16, g).passed


def test_forcing_mean_zero():
    for n in (1, 2):
        g = ForcingField.cosine(n, 16, 0.3)
        assert abs(g.values.sum()) < 1e-12
        assert g.sup_norm <= 0.3 + 1e-15


def test_periodic_rule_extends(st1_32):
    ind = np.zeros(32, bool)
    ind[:5] = True
    E = LatticeSet.from_rule(WindowGrid(1, 32, (-32,), (64,)), periodic_rule(ind))
    assert np.array_equal(E.indicator[:32], E.indicator[32:64])


@given(seed=st.integers(0, 2 ** 31), p=st.integers(-3, 3))
def test_translation_equivariance_of_cell_energy(seed, p):
    from planelike.kernel import KernelSpec
    st1 = build_stencil(KernelSpec("K1", dim=1), 16)
    r = np.random.default_rng(seed)
    u = r.standard_normal(16)
    u -= u.mean()
    shift = int(r.integers(16))
    a = cell_energy(u, (p,), st1)
    b = cell_energy(np.roll(u, shift), (p,), st1)
    assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


@given(seed=st.integers(0, 2 ** 31))
def test_complement_duality(seed):
    from planelike.kernel import KernelSpec
    st2 = build_stencil(KernelSpec("K1", dim=2), 8)
    r = np.random.default_rng(seed)
    w = WindowGrid(2, 8, (-8, -8), (16, 16))
    E = LatticeSet(w, r.random(w.shape) < 0.5, empty_rule())
    om = Box((0, 0), (1, 1))
    assert perimeter(E, om, st2).total == pytest.approx(perimeter(E.complement(), om, st2).total, rel=1e-12)
