import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse
from scipy.optimize import linprog

from planelike import _accel
from planelike.cellsolver import (Calibration, PeriodicProfile, SolverOptions, el_residual, layering_defect,
                                  solve_cell_problem, subgradient_check)
from planelike.energy import ForcingField, affine_shift, cell_energy
from planelike.lattice import TorusGrid, build_stencil

# converged LP energy for 1D K1 s=1/4, m=64, cosine forcing A=0.05, p=1;
# agrees with the independent primal-dual solver to 2e-9
PINNED_1D_ENERGY = 1.99203905615


def _dense_lp_oracle(p, stencil, g):
    """Full LP in (u, slack) variables, independent of the solver's column generation."""
    m, n = stencil.m, stencil.dim
    N = m ** n
    hh = stencil.half
    D = stencil.offsets[hh]
    w = stencil.weights[hh]
    c = affine_shift(p, stencil)
    idx = np.arange(N).reshape((m,) * n)
    rows_i, rows_j, cs, ws = [], [], [], []
    for k in range(len(hh)):
        j = np.roll(idx, tuple(-int(v) for v in D[k]), axis=tuple(range(n))).ravel()
        rows_i.append(idx.ravel())
        rows_j.append(j)
        cs.append(np.full(N, c[k]))
        ws.append(np.full(N, w[k]))
    I, J, Cc, W = map(np.concatenate, (rows_i, rows_j, cs, ws))
    P = len(I)
    # s >= +-(u_i - u_j - c)
    r = np.arange(P)
    one = np.ones(P)
    A = sparse.coo_matrix((np.concatenate([one, -one, -one, -one, one, -one]),
                           (np.concatenate([r, r, r, P + r, P + r, P + r]),
                            np.concatenate([I, J, N + r, I, J, N + r]))), shape=(2 * P, N + P)).tocsr()
    b = np.concatenate([Cc, -Cc])
    gv = np.zeros(N) if g is None else g.values.ravel() * stencil.h ** n
    cost = np.concatenate([gv, W])
    Aeq = np.concatenate([np.ones(N), np.zeros(P)])[None]
    res = linprog(cost, A_ub=A, b_ub=b, A_eq=Aeq, b_eq=[0], bounds=[(None, None)] * (N + P), method="highs")
    return res.fun


def test_zero_forcing_gives_zero_profile(k1_2d):
    st2 = build_stencil(k1_2d, 16)
    u, z, rep = solve_cell_problem((1, 1), stencil=st2)
    assert not np.any(u.values)
    assert el_residual(u, z, None) == 0.0
    hh = st2.half
    assert np.array_equal(z.default, -np.sign(affine_shift((1, 1), st2)))
    assert rep.primal_energy == pytest.approx(rep.energy_at_zero, rel=1e-12)


def test_p_zero(st1_32):
    u, z, rep = solve_cell_problem((0,), stencil=st1_32)
    assert rep.primal_energy == 0.0 and not np.any(u.values)


@pytest.fixture(scope="module")
def solved_1d(k1_1d):
    st = build_stencil(k1_1d, 64)
    g = ForcingField.cosine(1, 64, 0.05)
    return st, g, solve_cell_problem((1,), stencil=st, g=g)


def test_pinned_1d_energy(solved_1d):
    st, g, (u, z, rep) = solved_1d
    assert rep.converged
    assert rep.primal_energy < 2.0
    assert rep.primal_energy == pytest.approx(PINNED_1D_ENERGY, abs=1e-8)
    assert abs(u.values.sum()) * st.h < 1e-12


def test_certificates(solved_1d):
    st, g, (u, z, rep) = solved_1d
    assert rep.el_residual <= rep.tol
    assert abs(rep.gap) <= rep.tol
    assert el_residual(u, z, g) == pytest.approx(rep.el_residual, abs=1e-15)
    assert z.max_abs() <= 1 + 1e-12
    assert layering_defect(u, z) <= 1e-8


def test_pdhg_agrees_with_lp(solved_1d):
    st, g, (u, z, rep) = solved_1d
    u2, z2, rep2 = solve_cell_problem((1,), stencil=st, g=g, opts=SolverOptions(method="pdhg"))
    assert rep2.converged
    assert rep2.primal_energy == pytest.approx(rep.primal_energy, abs=1e-7)


@pytest.mark.parametrize("dim,m,p", [(1, 16, (1,)), (1, 16, (2,)), (2, 8, (1, 0)), (2, 8, (1, 1))])
def test_matches_dense_lp(dim, m, p):
    from planelike.kernel import KernelSpec
    st = build_stencil(KernelSpec("K1", dim=dim), m)
    g = ForcingField.cosine(dim, m, 0.3 if dim == 1 else 0.15)
    u, z, rep = solve_cell_problem(p, stencil=st, g=g)
    ref = _dense_lp_oracle(p, st, g)
    assert rep.primal_energy == pytest.approx(ref, abs=1e-8 * max(1, ref))


def test_residual_of_forcing_alone(st1_32):
    g = ForcingField.cosine(1, 32, 0.2)
    hh = st1_32.half
    z = Calibration(st1_32, (1,), np.zeros(len(hh)), np.zeros(0, np.int64), np.zeros((0, 32)))
    assert el_residual(None, z, g) == pytest.approx(np.abs(g.values).max() / 32, rel=1e-12)


def test_odd_sign_field_has_zero_residual(st2_16):
    p = (2, 1)
    z = Calibration(st2_16, p, -np.sign(affine_shift(p, st2_16)), np.zeros(0, np.int64), np.zeros((0, 256)))
    assert el_residual(None, z, None) == 0.0


def test_subgradient_no_violation_at_minimizer(k1_1d):
    st = build_stencil(k1_1d, 16)
    g = ForcingField.cosine(1, 16, 0.3)
    u, z, rep = solve_cell_problem((1,), stencil=st, g=g)
    worst, bad = subgradient_check(u, (1,), st, g, trials=30)
    assert not bad


def test_subgradient_detects_spike(solved_1d):
    st, g, (u, z, rep) = solved_1d
    v = u.values.copy()
    v[10] += 0.5
    v -= v.mean()
    worst, bad = subgradient_check(v, (1,), st, g)
    assert bad and worst < 0


def test_subgradient_trivial(st1_32):
    worst, bad = subgradient_check(np.zeros(32), (0,), st1_32)
    assert not bad


def test_profile_unwrap(st1_32):
    u = PeriodicProfile(TorusGrid(1, 32), np.sin(2 * np.pi * (np.arange(32) + 0.5) / 32), (2,))
    from planelike.lattice import WindowGrid
    v = u.v_on(WindowGrid(1, 32, (0,), (96,)))
    assert np.allclose(v[32:64] - v[:32], 2.0)
    assert np.allclose(v[64:] - v[:32], 4.0)


def test_backends_agree(k1_1d):
    st = build_stencil(k1_1d, 32)
    g = ForcingField.cosine(1, 32, 0.1)
    rng = np.random.default_rng(3)
    u = rng.standard_normal(32)
    u -= u.mean()
    vals = []
    for b in ("numba", "numpy"):
        with _accel.backend_scope(b):
            vals.append(cell_energy(u, (1,), st, g))
    assert vals[0] == pytest.approx(vals[1], rel=1e-13)


@settings(max_examples=10)
@given(amp=st.floats(0.0, 0.3), p=st.integers(-2, 2), shift=st.integers(0, 15))
def test_forcing_translation_equivariance(amp, p, shift):
    from planelike.kernel import KernelSpec
    st = build_stencil(KernelSpec("K1", dim=1), 16)
    g = ForcingField.cosine(1, 16, amp)
    _, _, r1 = solve_cell_problem((p,), stencil=st, g=g)
    _, _, r2 = solve_cell_problem((p,), stencil=st, g=g.shifted((shift,)))
    assert r1.primal_energy == pytest.approx(r2.primal_energy, abs=1e-8)
