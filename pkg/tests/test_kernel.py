import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from planelike.errors import ValidationError
from planelike.kernel import (KernelSpec, default_rcut, eval_kernel, halfspace_phi_oracle, moments,
                              required_kappa2, tail_moment, validate_assumptions)


def test_eval_k1_inside_support(k1_1d):
    assert eval_kernel(k1_1d, 0.5) == pytest.approx(0.5 ** -1.5, rel=1e-12)


def test_eval_k1_outside_support(k1_1d):
    assert eval_kernel(k1_1d, 1.5) == 0.0


def test_eval_k3_tail():
    k = KernelSpec("K3", dim=1, s1=0.25, s2=0.75, delta=0.5)
    assert eval_kernel(k, 2.0) == pytest.approx(2 ** -2.5, rel=1e-12)


@pytest.mark.parametrize("kind,dim,kw,expected", [
    ("K1", 1, {}, 4.0),
    ("K1", 2, {}, 4 * math.pi * 2 ** 0.25),
    ("K3", 1, {"delta": 1.0}, 8.0),
])
def test_first_moment_closed_forms(kind, dim, kw, expected):
    k = KernelSpec(kind, dim=dim, s1=0.25, **kw)
    assert moments(k).first_moment == pytest.approx(expected, rel=1e-6)


def test_k1_admissible_both_dims():
    for n in (1, 2):
        rep = validate_assumptions(KernelSpec("K1", dim=n), sample_count=10_000)
        assert rep.admissible


def test_k3_admissible():
    k = KernelSpec("K3", dim=2, s1=0.25, s2=0.75, delta=0.5)
    assert validate_assumptions(k, sample_count=10_000).admissible


def test_k2_low_kappa2_fails_with_radius():
    k = KernelSpec("K2", dim=1, delta=0.5)
    need = required_kappa2(k)
    bad = KernelSpec("K2", dim=1, delta=0.5, kappa1=need / 4, kappa2=need / 2)
    rep = validate_assumptions(bad)
    assert not rep.admissible
    clause = rep.clauses["bounds"]
    assert not clause.passed and clause.worst_radius is not None


def test_tabulated_negative_entry_rejected():
    k = KernelSpec("tabulated", dim=1, delta=0.5, table_r=(0.1, 0.5, 1.0), table_k=(5.0, -1.0, 0.5))
    rep = validate_assumptions(k)
    assert not rep.admissible and not rep.clauses["nonneg"].passed


@pytest.mark.parametrize("kw", [{"s1": 0.6}, {"s1": 0.0}, {"s2": 0.4}, {"delta": -1.0}])
def test_parameter_bounds(kw):
    with pytest.raises(ValidationError):
        KernelSpec("K3", dim=1, **{"delta": 0.5, **kw})


def test_halfspace_oracle_values(k1_1d, k1_2d):
    assert halfspace_phi_oracle(k1_1d) == pytest.approx(2.0, rel=1e-8)
    assert halfspace_phi_oracle(k1_2d) == pytest.approx(4 * 2 ** 0.25, rel=1e-8)


def test_halfspace_oracle_rotation_independent(k1_2d):
    vals = [halfspace_phi_oracle(k1_2d, np.array([math.cos(a), math.sin(a)]))
            for a in (0.0, math.pi / 6, math.pi / 4)]
    assert max(vals) - min(vals) <= 1e-8 * vals[0]


def test_tail_moment_nonincreasing():
    k = KernelSpec("K3", dim=1, delta=0.5)
    vals = [tail_moment(k, r) for r in (1.0, 2.0, 4.0, 8.0, 64.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 0.2 * vals[0]


def test_default_rcut_k1_is_support(k1_2d):
    assert default_rcut(k1_2d) == pytest.approx(math.sqrt(2))


@given(r=st.floats(1e-3, 5.0), s=st.floats(0.05, 0.45))
def test_kernel_nonnegative_and_radial(r, s):
    k = KernelSpec("K3", dim=2, s1=s, s2=0.75, delta=0.5)
    v = eval_kernel(k, r)
    assert v >= 0 and math.isfinite(v)
    assert eval_kernel(k, np.array([r, r]))[0] == v
