import numpy as np
import pytest
from hypothesis import given, strategies as st

from planelike.errors import PreconditionError
from planelike.kernel import KernelSpec
from planelike.lattice import Box, RotatedSquare, TorusGrid, WindowGrid, build_stencil, enumerate_unit_cubes


def test_midpoint_weight_m8(k1_1d):
    s = build_stencil(k1_1d, 8, 1.0, "midpoint")
    w = dict(zip(s.offsets[:, 0].tolist(), s.weights.tolist()))
    assert w[1] == pytest.approx(8 ** 1.5 / 64, rel=1e-12)
    assert w[-1] == w[1]
    # the support is open at r = 1, so the midpoint of offset 8 carries no weight
    assert sorted(w) == [d for d in range(-7, 8) if d]


def test_cell_rule_reaches_support(k1_1d):
    s = build_stencil(k1_1d, 8, 1.0, "cell")
    assert sorted(s.offsets[:, 0].tolist()) == [d for d in range(-8, 9) if d]


def test_rcut_beyond_support_is_identical(k1_1d):
    a = build_stencil(k1_1d, 8, 1.0, "midpoint")
    b = build_stencil(k1_1d, 8, 2.0, "midpoint")
    assert np.array_equal(a.offsets, b.offsets)
    assert b.tail_bound == 0.0


def test_rcut_below_two_cells(k1_1d):
    with pytest.raises(PreconditionError):
        build_stencil(k1_1d, 8, 0.2)


def test_stencil_symmetric_positive(st2_16):
    D, w = st2_16.offsets, st2_16.weights
    lookup = {tuple(d): x for d, x in zip(D.tolist(), w)}
    assert np.all(w > 0)
    assert not any(all(v == 0 for v in d) for d in lookup)
    for d, x in lookup.items():
        assert lookup[tuple(-v for v in d)] == x


def test_unit_cubes_exact():
    c = enumerate_unit_cubes(Box((0,), (3,)), 1.0, 8)
    assert c.count == 3 and c.cubes[:, 0].tolist() == [0, 1, 2]
    c = enumerate_unit_cubes(Box((0.5,), (3.5,)), 1.0, 8)
    assert c.count == 2 and c.cubes[:, 0].tolist() == [1, 2]


def test_unit_cubes_2d_disjoint():
    c = enumerate_unit_cubes(Box((0, 0), (2.5, 2)), 1.0, 8)
    assert c.count == 4
    assert len({tuple(x) for x in c.cubes.tolist()}) == 4


def test_grid_geometry():
    t = TorusGrid(2, 16)
    assert t.h == 1 / 16 and t.shape == (16, 16) and t.size == 256
    w = WindowGrid(1, 8, (-8,), (16,))
    assert w.shape == (24,)
    assert w.centers()[0][0] == pytest.approx(-1 + 1 / 16)


def test_rotated_square_volume():
    q = RotatedSquare((0.0, 0.0), (1, 1), 4.0)
    assert q.volume == pytest.approx(16.0)


@given(m=st.sampled_from([8, 16, 32]), lo=st.floats(-2, 2), width=st.floats(0, 4))
def test_unit_cubes_contained(m, lo, width):
    omega = Box((lo,), (lo + width,))
    c = enumerate_unit_cubes(omega, 1.0, m)
    for (k,) in c.cubes.tolist():
        assert k >= lo - 1e-12 and k + 1 <= lo + width + 1e-12
