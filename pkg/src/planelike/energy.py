"""Set and profile energies on lattices.

All set functionals are evaluated on an extended window: the bounding box of
``omega`` padded by the stencil reach.  Cells of the extended window that lie
outside the set's own window take their value from the set's exterior rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _pairsum
from .errors import MarginError, PreconditionError, ValidationError
from .lattice import Box, CubeCover, PairStencil, WindowGrid, check_epsilon, enumerate_unit_cubes


# -- forcing -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ForcingField:
    """Mean-zero, 1-periodic forcing sampled at torus cell centres."""
    values: np.ndarray
    amplitude: float = 0.0
    kind: str = "tabulated"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim not in (1, 2) or len(set(v.shape)) != 1:
            raise ValidationError("forcing values must be a square torus array")
        mean = v.mean()
        if abs(mean) > 1e-12 * max(1.0, np.abs(v).max()):
            raise ValidationError(f"forcing must be mean-zero, mean = {mean:.3e}")
        v = v - mean
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def cosine(cls, dim: int, m: int, amplitude: float) -> "ForcingField":
        """``A prod_i cos(2 pi x_i)`` at cell centres; sums to zero exactly."""
        c = np.cos(2 * np.pi * (np.arange(m) + 0.5) / m)
        v = c if dim == 1 else np.multiply.outer(c, c)
        v = amplitude * v
        return cls(v - v.mean(), float(amplitude), "cosine")

    @classmethod
    def zero(cls, dim: int, m: int) -> "ForcingField":
        return cls(np.zeros((m,) * dim), 0.0, "zero")

    @classmethod
    def from_values(cls, values, recenter: bool = True) -> "ForcingField":
        v = np.asarray(values, float)
        if recenter:
            v = v - v.mean()
        return cls(v, float(np.abs(v).max()) if v.size else 0.0, "tabulated")

    @property
    def dim(self):
        return self.values.ndim

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.values).max())

    def lp_norm(self, q: float) -> float:
        return float(np.mean(np.abs(self.values) ** q) ** (1.0 / q))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def on_window(self, window: WindowGrid) -> np.ndarray:
        if window.m != self.m:
            raise PreconditionError(f"forcing has m={self.m}, window m={window.m}")
        idx = [np.arange(a, b) % self.m for a, b in zip(window.lo, window.hi)]
        return self.values[np.ix_(*idx)]

    def shifted(self, k) -> "ForcingField":
        """Translate by ``k`` cells: ``g'(x) = g(x - k h)``."""
        v = np.roll(self.values, tuple(int(x) for x in np.atleast_1d(k)), axis=tuple(range(self.dim)))
        return ForcingField(v, self.amplitude, self.kind)

    def require_small(self, kappa3: float, factor: float = 0.5) -> None:
        if self.sup_norm > factor * kappa3 * (1 + 1e-12):
            raise PreconditionError(f"|g|_inf = {self.sup_norm} exceeds {factor} * kappa3 = {factor * kappa3}")


def _zero_like(stencil):
    return ForcingField.zero(stencil.dim, stencil.m)


# -- exterior rules --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Exterior:
    """Indicator for every lattice cell, used outside a set's window.

    ``kind`` is ``constant`` (``value``), ``levelset`` (``{u + p.y > t}``
    with ``y = x / scale``; ``u=None`` gives a halfspace) or ``periodic``
    (a torus indicator, also read at ``y = x / scale``).  ``flipped`` negates
    the indicator.
    """
    kind: str
    value: bool = False
    p: tuple = ()
    t: float = 0.0
    u: np.ndarray | None = field(default=None, repr=False)
    scale: float = 1.0
    flipped: bool = False

    def complement(self) -> "Exterior":
        return replace(self, flipped=not self.flipped)

    def blowup(self, eps: float) -> "Exterior":
        return replace(self, scale=self.scale / eps)

    def fill(self, window: WindowGrid) -> np.ndarray:
        if self.kind == "constant":
            out = np.full(window.shape, bool(self.value))
        elif self.kind == "levelset":
            out = levelset_indicator(window, self.u, self.p, self.t, self.scale)
        elif self.kind == "periodic":
            tor = np.asarray(self.u, bool)
            mu = tor.shape[0]
            y = window.centers() / self.scale
            idx = tuple(np.floor(y[j] * mu).astype(np.int64) % mu for j in range(window.dim))
            out = tor[idx]
        else:
            raise ValidationError(f"unknown exterior rule {self.kind!r}")
        return ~out if self.flipped else out

    def describe(self) -> str:
        if self.kind == "constant":
            base = "full" if self.value else "empty"
        elif self.kind == "levelset":
            base = ("halfspace" if self.u is None else "levelset") + f"(p={self.p}, t={self.t})"
        else:
            base = "periodic"
        return ("not " if self.flipped else "") + base


def empty_rule() -> Exterior:
    return Exterior("constant", value=False)


def full_rule() -> Exterior:
    return Exterior("constant", value=True)


def halfspace_rule(p, t: float = 0.0) -> Exterior:
    """``{x : p . x > t}``."""
    return Exterior("levelset", p=tuple(float(v) for v in np.atleast_1d(p)), t=float(t))


def levelset_rule(u, p, t: float, scale: float = 1.0) -> Exterior:
    """``{x : u(x/scale) + p . x/scale > t}`` for a torus profile ``u``."""
    u = np.asarray(u, float)
    return Exterior("levelset", p=tuple(float(v) for v in np.atleast_1d(p)), t=float(t), u=u, scale=scale)


def periodic_rule(indicator, scale: float = 1.0) -> Exterior:
    return Exterior("periodic", u=np.asarray(indicator, bool), scale=scale)


def levelset_values(window: WindowGrid, u, p, scale: float = 1.0) -> np.ndarray:
    """``v(y) = u(y) + p . y`` at the cells of ``window``, ``y = x / scale``."""
    y = window.centers() / scale
    p = np.asarray(p, float)
    v = np.tensordot(p, y, axes=1)
    if u is not None:
        u = np.asarray(u, float)
        mu = u.shape[0]
        idx = tuple(np.floor(y[j] * mu + 1e-9).astype(np.int64) % mu for j in range(window.dim))
        v = v + u[idx]
    return v


def levelset_indicator(window, u, p, t, scale=1.0):
    return levelset_values(window, u, p, scale) > t


# -- lattice sets ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LatticeSet:
    """Binary set on a window plus an exterior rule (``None``: no rule)."""
    window: WindowGrid
    indicator: np.ndarray
    exterior: Exterior | None = None
    label: str = ""

    def __post_init__(self):
        ind = np.asarray(self.indicator, bool)
        if ind.shape != self.window.shape:
            raise PreconditionError(f"indicator shape {ind.shape} != window shape {self.window.shape}")
        object.__setattr__(self, "indicator", ind)

    @classmethod
    def from_rule(cls, window: WindowGrid, rule: Exterior, label: str = "") -> "LatticeSet":
        return cls(window, rule.fill(window), rule, label)

    def complement(self) -> "LatticeSet":
        ext = None if self.exterior is None else self.exterior.complement()
        return LatticeSet(self.window, ~self.indicator, ext, ("not " + self.label) if self.label else "")

    def with_indicator(self, ind) -> "LatticeSet":
        return LatticeSet(self.window, ind, self.exterior, self.label)

    @property
    def m(self):
        return self.window.m

    def values_on(self, ext: WindowGrid) -> np.ndarray:
        """Indicator over ``ext``; outside the own window the exterior rule decides."""
        if ext.m != self.window.m:
            raise PreconditionError("window resolution mismatch")
        if self.window.contains(ext) or self.exterior is None:
            if not self.window.contains(ext):
                raise MarginError("evaluation window leaves the set's window and no exterior rule is set")
            sl = tuple(slice(a - b, c - b) for a, c, b in zip(ext.lo, ext.hi, self.window.lo))
            return self.indicator[sl].copy()
        out = self.exterior.fill(ext)
        lo = [max(a, b) for a, b in zip(ext.lo, self.window.lo)]
        hi = [min(a, b) for a, b in zip(ext.hi, self.window.hi)]
        if all(b > a for a, b in zip(lo, hi)):
            dst = tuple(slice(a - e, b - e) for a, b, e in zip(lo, hi, ext.lo))
            src = tuple(slice(a - w, b - w) for a, b, w in zip(lo, hi, self.window.lo))
            out[dst] = self.indicator[src]
        return out

    def rescaled(self, eps: float) -> "LatticeSet":
        """The blown-up set ``E / eps`` (same cells, finer physical meaning)."""
        c = check_epsilon(eps, self.window.m)
        win = WindowGrid(self.window.dim, c, self.window.lo, self.window.hi)
        ext = None if self.exterior is None else self.exterior.blowup(eps)
        return LatticeSet(win, self.indicator, ext, self.label)

    def volume(self) -> float:
        return float(np.count_nonzero(self.indicator)) * self.window.h ** self.window.dim


# -- energies ----------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyBreakdown:
    functional: str
    interaction_in_in: float
    interaction_in_out: float
    interaction_out_in: float
    forcing: float
    total: float
    truncation_bound: float
    forcing_alt: float | None = None   # the other forcing convention, for the record
    omega: str = ""

    @property
    def perimeter(self) -> float:
        return self.interaction_in_in + self.interaction_in_out + self.interaction_out_in

    def scaled(self, factor: float) -> "EnergyBreakdown":
        return replace(self, interaction_in_in=factor * self.interaction_in_in,
                       interaction_in_out=factor * self.interaction_in_out,
                       interaction_out_in=factor * self.interaction_out_in,
                       forcing=factor * self.forcing, total=factor * self.total,
                       truncation_bound=factor * self.truncation_bound,
                       forcing_alt=None if self.forcing_alt is None else factor * self.forcing_alt)

    def to_dict(self) -> dict:
        return {"functional": self.functional, "omega": self.omega,
                "parts": {"in_in": self.interaction_in_in, "in_out": self.interaction_in_out,
                          "out_in": self.interaction_out_in, "forcing": self.forcing,
                          "forcing_alt": self.forcing_alt},
                "total": self.total, "truncation_bound": self.truncation_bound}


def _domain_setup(E: LatticeSet, omega, stencil: PairStencil):
    if stencil.m != E.window.m:
        raise PreconditionError(f"stencil m={stencil.m} differs from set m={E.window.m}")
    if stencil.dim != E.window.dim:
        raise PreconditionError("stencil/set dimension mismatch")
    lo, hi = omega.bounding(stencil.m)
    R = stencil.reach
    core = WindowGrid(stencil.dim, stencil.m, lo, hi)
    ext = core.grow(R)
    Eext = E.values_on(ext)
    Oext = omega.mask(ext)
    return ext, Eext, Oext


def _omega_volume(Oext, h):
    return float(np.count_nonzero(Oext)) * h ** Oext.ndim


def _parts(E, omega, stencil, method):
    ext, Eext, Oext = _domain_setup(E, omega, stencil)
    is_half = np.zeros(len(stencil), np.bool_)
    is_half[stencil.half] = True
    parts = _pairsum.window_parts(Eext, Oext, stencil.reach, stencil.offsets, stencil.weights,
                                  is_half, method)
    trunc = 2.0 * _omega_volume(Oext, stencil.h) * stencil.tail_mass
    return ext, Eext, Oext, parts, trunc


def perimeter(E: LatticeSet, omega, stencil: PairStencil, method: str = "auto") -> EnergyBreakdown:
    """Nonlocal perimeter of ``E`` relative to ``omega`` as three interaction terms.

    ``method`` is ``direct`` (exact fixed-order sums), ``fft`` (convolutions,
    for large windows) or ``auto``.
    """
    _, _, _, (ii, io, oi, tot), trunc = _parts(E, omega, stencil, method)
    return EnergyBreakdown("P_K", ii, io, oi, 0.0, tot, trunc, omega=repr(omega))


def _forcing_sums(E, ext, Eext, Oext, omega, g, stencil):
    if g is None or g.is_zero():
        return 0.0, 0.0
    vol = stencil.h ** stencil.dim
    G = g.on_window(ext)
    f_J = float(np.sum(G[Eext & Oext])) * vol
    cover = _cover(omega, stencil.m, ext)
    f_F = float(np.sum(G[Eext & cover])) * vol
    return f_J, f_F


def _cover(omega, m, ext):
    cc = enumerate_unit_cubes(omega, 1.0, m=m, window=ext)
    return cc.mask(ext)


def functional_J(E: LatticeSet, omega, stencil: PairStencil, g: ForcingField | None = None,
                 method: str = "auto") -> EnergyBreakdown:
    """``P_K(E, omega) + int_{E cap omega} g``."""
    ext, Eext, Oext, (ii, io, oi, tot), trunc = _parts(E, omega, stencil, method)
    fJ, fF = _forcing_sums(E, ext, Eext, Oext, omega, g, stencil)
    return EnergyBreakdown("J", ii, io, oi, fJ, tot + fJ, trunc, forcing_alt=fF, omega=repr(omega))


def _scaled_omega(omega, eps):
    if isinstance(omega, Box):
        return Box(tuple(v / eps for v in omega.lo), tuple(v / eps for v in omega.hi))
    if hasattr(omega, "scaled"):
        return omega.scaled(1.0 / eps)
    raise PreconditionError("domain cannot be rescaled")


def functional_F(E: LatticeSet, omega, stencil: PairStencil, g: ForcingField | None = None,
                 epsilon: float = 1.0, method: str = "auto") -> EnergyBreakdown:
    """``P_K(E, omega) + int_{E cap Q(omega)_1} g``; for ``epsilon < 1`` the rescaled energy.

    The rescaled energy is computed as ``eps^{n-1} F_1(E/eps, omega/eps)``:
    ``E``'s cells are reinterpreted on the lattice of spacing ``1/(eps m)``,
    which must be the resolution of ``stencil`` and ``g``.
    """
    if epsilon != 1.0:
        Eb = E.rescaled(epsilon)
        ob = _scaled_omega(omega, epsilon)
        res = functional_F(Eb, ob, stencil, g, 1.0, method)
        return replace(res.scaled(epsilon ** (stencil.dim - 1)), functional=f"F_eps(eps={epsilon})",
                       omega=repr(omega))
    ext, Eext, Oext, (ii, io, oi, tot), trunc = _parts(E, omega, stencil, method)
    fJ, fF = _forcing_sums(E, ext, Eext, Oext, omega, g, stencil)
    return EnergyBreakdown("F", ii, io, oi, fF, tot + fF, trunc, forcing_alt=fJ, omega=repr(omega))


def functional_E_trunc(E: LatticeSet, omega, stencil: PairStencil, g: ForcingField | None = None,
                       epsilon: float = 1.0, form: str = "integral", method: str = "auto") -> EnergyBreakdown:
    """Truncated energy.

    ``form="integral"`` (default): pairs ``(x, y)`` with ``x in E cap omega``,
    ``y in E^c`` anywhere, plus the F forcing; equals ``F - L(E\\omega, E^c cap omega)``.
    ``form="subtract"``: ``F - L(E cap omega, E^c \\ omega)``.
    """
    if form not in ("integral", "subtract"):
        raise PreconditionError(f"unknown E_trunc form {form!r}")
    F = functional_F(E, omega, stencil, g, epsilon, method)
    if form == "integral":
        ii, io, oi = F.interaction_in_in, F.interaction_in_out, 0.0
    else:
        ii, io, oi = F.interaction_in_in, 0.0, F.interaction_out_in
    return replace(F, functional=f"E_trunc[{form}]", interaction_in_in=ii, interaction_in_out=io,
                   interaction_out_in=oi, total=ii + io + oi + F.forcing)


def interaction(A: LatticeSet, B: LatticeSet, stencil: PairStencil) -> float:
    """``L_K(A, B)`` for disjoint cell sets on a common window (window cells only)."""
    if A.window != B.window:
        raise PreconditionError("interaction needs both sets on the same window")
    if np.any(A.indicator & B.indicator):
        raise PreconditionError("interaction needs disjoint sets")
    R = stencil.reach
    pad = [(R, R)] * A.window.dim
    Ae = np.pad(A.indicator, pad)
    Be = np.pad(B.indicator, pad)
    hh = stencil.half
    return _pairsum.interaction_sum(Ae, Be, R, stencil.offsets[hh], stencil.weights[hh])


# -- cell energy ---------------------------------------------------------------------

def _check_profile(u, stencil, tol=1e-10):
    u = np.asarray(u, float)
    if u.shape != (stencil.m,) * stencil.dim:
        raise PreconditionError(f"profile shape {u.shape} does not match the torus (m={stencil.m})")
    scale = max(1.0, float(np.abs(u).max()) if u.size else 1.0)
    if abs(u.mean()) > tol * scale:
        raise PreconditionError(f"profile must be mean-zero (mean {u.mean():.3e})")
    return u


def affine_shift(p, stencil, offsets=None):
    """``c_d = p . d h`` for the given offsets (default: positive half)."""
    D = stencil.offsets[stencil.half] if offsets is None else offsets
    return (D @ np.asarray(np.atleast_1d(p), float)) * stencil.h


def pair_term(u, p, stencil: PairStencil) -> float:
    """``sum_i sum_{d>0} w(d) |u_i - u_{i+d} - p.d h|`` (the interaction part of E_p)."""
    hh = stencil.half
    c = affine_shift(p, stencil)
    return _pairsum.torus_abs_sum(u, stencil.m, stencil.dim, stencil.offsets[hh], stencil.weights[hh], c)


def cell_energy(u, p, stencil: PairStencil, g: ForcingField | None = None, check_mean: bool = True) -> float:
    """Discrete cell energy ``E_p(u)``.

    ``(1/2) sum_{i, d} w(d) |u_i - u_{i+d} - p . d h| + sum_i g_i u_i h^n``
    with periodic wrap-around; the half-stencil form is used internally.
    """
    u = _check_profile(u, stencil) if check_mean else np.asarray(u, float)
    val = pair_term(u, p, stencil)
    if g is not None and not g.is_zero():
        val += float(np.sum(g.values * u)) * stencil.h ** stencil.dim
    return val


def energy_at_zero(p, stencil: PairStencil) -> float:
    """``E_p(0) = sum_i sum_{d>0} w(d) |p . d h|``."""
    hh = stencil.half
    c = affine_shift(p, stencil)
    return float(stencil.m ** stencil.dim * np.sum(stencil.weights[hh] * np.abs(c)))


# -- cube bound -------------------------------------------------------------------------

@dataclass(frozen=True)
class CubeBound:
    lhs: float
    rhs: float
    passed: bool
    margin: float


def check_cube_bound(F: LatticeSet, cube, stencil: PairStencil, g: ForcingField | None = None,
                     tol: float | None = None) -> CubeBound:
    """Compare ``L(F cap Q', F^c cap Q') + int_{Q' cap F} g`` with
    ``(kappa3/2 - |g|_inf) min(|F cap Q'|, |F^c cap Q'|)`` on the unit cube
    ``Q' = k + Q`` (``cube`` is the integer vector ``k``)."""
    k = tuple(int(v) for v in np.atleast_1d(cube))
    m = stencil.m
    win = WindowGrid(stencil.dim, m, tuple(v * m for v in k), tuple((v + 1) * m for v in k))
    ind = F.values_on(win)
    A = LatticeSet(win, ind)
    B = LatticeSet(win, ~ind)
    L = interaction(A, B, stencil)
    vol = stencil.h ** stencil.dim
    f = 0.0
    gsup = 0.0
    if g is not None:
        f = float(np.sum(g.on_window(win)[ind])) * vol
        gsup = g.sup_norm
    lhs = L + f
    nin = np.count_nonzero(ind) * vol
    rhs = (stencil.kernel.kappa3 / 2 - gsup) * min(nin, 1.0 - nin)
    if tol is None:
        tol = 1e-10 * stencil.kernel.kappa3
    return CubeBound(lhs, rhs, bool(lhs >= rhs - tol), lhs - rhs)
