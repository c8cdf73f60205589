"""Level sets of ``v_p = u_p + p . x`` and measurements on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _pairsum
from .cellsolver import PeriodicProfile
from .energy import LatticeSet, affine_shift, levelset_rule, pair_term, perimeter
from .errors import PreconditionError
from .lattice import Box, PairStencil, WindowGrid

OMEGA = {1: 2.0, 2: math.pi}


def _base_window(torus, grow=0):
    return WindowGrid(torus.dim, torus.m, (0,) * torus.dim, (torus.m,) * torus.dim).grow(grow)


def nn_boundary(ind: np.ndarray) -> np.ndarray:
    """Cells with a nearest neighbour (along an axis) of the other label.

    Edge cells of the array only look at neighbours inside it.
    """
    out = np.zeros(ind.shape, bool)
    for ax in range(ind.ndim):
        lo = [slice(None)] * ind.ndim
        hi = [slice(None)] * ind.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        diff = ind[tuple(lo)] != ind[tuple(hi)]
        out[tuple(lo)] |= diff
        out[tuple(hi)] |= diff
    return out


# -- level sets --------------------------------------------------------------------

@dataclass
class LevelSetFamily:
    p: tuple
    thresholds: np.ndarray
    sets: list
    in_Tp: np.ndarray
    degenerate: bool = False
    perturbed: list = field(default_factory=list)

    def nested(self) -> bool:
        return all(not np.any(b.indicator & ~a.indicator) for a, b in zip(self.sets, self.sets[1:]))

    def tp_thresholds(self) -> np.ndarray:
        return self.thresholds[self.in_Tp]


def _untie(t, vals, rtol=1e-9):
    # values closer than rtol * spread count as one level (solver round-off);
    # a threshold on a level moves half way to the next level up
    vals = np.unique(vals)
    tol = rtol * max(1.0, float(vals[-1] - vals[0]))
    cut = np.flatnonzero(np.diff(vals) > tol)
    tops = np.append(vals[cut], vals[-1])
    bots = np.insert(vals[cut + 1], 0, vals[0])
    k = np.searchsorted(tops, t - tol)
    if k < len(tops) and bots[k] - tol <= t:
        nxt = bots[k + 1] if k + 1 < len(bots) else tops[k] + 1.0
        return 0.5 * (tops[k] + nxt), True
    return t, False


def boundary_meets_base(u: PeriodicProfile, t: float) -> bool:
    """Whether ``{v_p > t}`` has a nearest-neighbour boundary cell in the base cell."""
    win = _base_window(u.torus, 1)
    ind = u.v_on(win) > t
    b = nn_boundary(ind)
    core = tuple(slice(1, -1) for _ in range(u.torus.dim))
    return bool(b[core].any())


def extract_level_sets(u: PeriodicProfile, p=None, window: WindowGrid | None = None,
                       t_rule="quantiles", count: int = 17) -> LevelSetFamily:
    """Strict superlevel sets ``{v_p > t}`` on ``window``.

    ``t_rule`` is ``"quantiles"`` (``count`` equispaced quantiles of ``v_p``
    over the base cell, ends excluded) or an explicit list of thresholds.
    Thresholds landing on a sample value are moved half a gap up.
    """
    p = u.p if p is None else tuple(int(v) for v in np.atleast_1d(p))
    if tuple(p) != tuple(u.p):
        raise PreconditionError(f"profile was solved for p={u.p}, not {p}")
    window = window or _base_window(u.torus)
    base = u.v_torus().ravel()
    degenerate = np.ptp(base) == 0.0
    if isinstance(t_rule, str):
        if t_rule != "quantiles":
            raise PreconditionError(f"unknown t_rule {t_rule!r}")
        qs = np.linspace(0, 1, count + 2)[1:-1]
        ts = np.quantile(base, qs)
    else:
        ts = np.asarray(t_rule, float)
    ts = np.sort(ts)
    fixed, moved = [], []
    for t in ts:
        t2, mv = _untie(t, base)
        fixed.append(t2)
        if mv:
            moved.append((float(t), float(t2)))
    ts = np.array(fixed)
    vwin = u.v_on(window)
    sets = [LatticeSet(window, vwin > t, levelset_rule(u.values, p, t), f"E_p,t={t:.6g}") for t in ts]
    tp = np.array([boundary_meets_base(u, t) for t in ts], bool)
    return LevelSetFamily(p, ts, sets, tp, bool(degenerate), moved)


def oscillation(u: PeriodicProfile, p=None):
    """``(osc v_p, osc u_p)`` over the base cell."""
    v = u.v_torus()
    return float(np.ptp(v)), float(np.ptp(u.values))


# -- planelike slab ------------------------------------------------------------------

@dataclass
class PlanelikeReport:
    p: tuple
    rows: list          # (t, M(p,t)) for t in T_p
    M: float
    osc_v: float
    osc_u: float

    @property
    def ratio(self) -> float:
        return self.osc_v / float(np.linalg.norm(self.p))

    def to_rows(self):
        return [dict(p=" ".join(map(str, self.p)), t=t, M=Mt) for t, Mt in self.rows]


def planelike_report(u: PeriodicProfile, periods: int = 2, family: LevelSetFamily | None = None) -> PlanelikeReport:
    """Slab half-width ``M(p,t) = max |x . p| / |p|`` over boundary cells of ``E_{p,t}``.

    Boundary cells are searched in the window ``[-periods, periods]^n``.
    """
    p = u.p
    pn = float(np.linalg.norm(p))
    if pn == 0:
        raise PreconditionError("the slab width needs p != 0")
    m = u.torus.m
    win = WindowGrid(u.torus.dim, m, (-periods * m,) * u.torus.dim, (periods * m,) * u.torus.dim)
    family = family or extract_level_sets(u)
    v = u.v_on(win)
    proj = np.abs(np.tensordot(np.asarray(p, float), win.centers(), axes=1)) / pn
    rows = []
    for t, flag in zip(family.thresholds, family.in_Tp):
        if not flag:
            continue
        b = nn_boundary(v > t)
        rows.append((float(t), float(proj[b].max()) if b.any() else math.inf))
    osc_v, osc_u = oscillation(u)
    M = max((r[1] for r in rows), default=math.nan)
    return PlanelikeReport(tuple(p), rows, M, osc_v, osc_u)


# -- density --------------------------------------------------------------------------

@dataclass
class DensityReport:
    radii: list
    min_ratio: float
    max_ratio: float
    per_radius: dict
    worst_point: tuple
    skipped: list
    samples: int

    def passed(self, c0: float, dim: int) -> bool:
        return self.min_ratio >= c0 and self.max_ratio <= OMEGA[dim] - c0


def density_estimates(E: LatticeSet, radii, c0_probe: float = 0.1, max_points: int = 256,
                      margin: float | None = None) -> DensityReport:
    """``|E cap B_r(x0)| / r^n`` at boundary cells ``x0`` of ``E``.

    Only boundary cells at least ``max(radii)`` (or ``margin``) away from the
    window edge are sampled, at most ``max_points`` of them (evenly spaced in
    flat order).  Radii below ``2h`` are skipped.
    """
    win = E.window
    h = win.h
    n = win.dim
    radii = [float(r) for r in radii]
    skipped = [r for r in radii if r < 2 * h]
    radii = [r for r in radii if r >= 2 * h]
    if not radii:
        return DensityReport([], math.nan, math.nan, {}, (), skipped, 0)
    pad = int(math.ceil((margin or max(radii)) / h))
    b = nn_boundary(E.indicator)
    inner = np.zeros_like(b)
    inner[tuple(slice(pad, s - pad) for s in b.shape)] = True
    pts = np.argwhere(b & inner)
    if len(pts) > max_points:
        pts = pts[np.linspace(0, len(pts) - 1, max_points).astype(int)]
    per = {}
    lo, hi, worst = math.inf, -math.inf, ()
    ind = E.indicator
    for r in radii:
        k = int(math.ceil(r / h))
        rng = np.arange(-k, k + 1)
        grids = np.meshgrid(*([rng] * n), indexing="ij")
        ball = sum(gg.astype(float) ** 2 for gg in grids) * h * h < r * r
        offs = np.stack([gg[ball] for gg in grids], 1)
        vals = np.empty(len(pts))
        for a, x0 in enumerate(pts):
            idx = tuple((x0[None, :] + offs).T)
            vals[a] = np.count_nonzero(ind[idx]) * h ** n / r ** n
        per[r] = (float(vals.min()), float(vals.max()))
        if vals.min() < lo:
            lo = float(vals.min())
            worst = tuple(int(v) for v in pts[int(vals.argmin())])
        hi = max(hi, float(vals.max()))
    return DensityReport(radii, lo, hi, per, worst, skipped, len(pts))


# -- coarea -----------------------------------------------------------------------------

def layer_cake_pair_sum(u, p, stencil: PairStencil) -> float:
    """Pair term of ``E_p`` rebuilt from the perimeters of all level sets.

    The distinct values of ``v`` on the torus cells and their neighbours are
    sorted; for each gap between consecutive values the binary pair sum of the
    superlevel set is accumulated with a difference array.
    """
    m, n = stencil.m, stencil.dim
    u = np.asarray(u, float).ravel()
    hh = stencil.half
    D = stencil.offsets[hh]
    w = stencil.weights[hh]
    c = affine_shift(p, stencil)
    # pairs (a, b) with a = v_i, b = v_{i+d} expressed relative to v_i
    A, B, W = [], [], []
    for k in range(len(hh)):
        j = _pairsum.torus_neighbor(m, n, D[k])
        A.append(u)
        B.append(u[j] + c[k])
        W.append(np.full(u.shape, w[k]))
    A = np.concatenate(A)
    B = np.concatenate(B)
    W = np.concatenate(W)
    lo = np.minimum(A, B)
    hi = np.maximum(A, B)
    levels, inv = np.unique(np.concatenate([lo, hi]), return_inverse=True)
    rl, rh = inv[:len(lo)], inv[len(lo):]
    # extended precision throughout: weights span ~9 decades and the running
    # sum crosses ~1e6 levels in 2D, which costs ~1e-10 in plain doubles
    ld = np.longdouble
    Wl = W.astype(ld)
    diff = np.zeros(len(levels), ld)
    np.add.at(diff, rl, Wl)
    np.add.at(diff, rh, -Wl)
    per = np.cumsum(diff)      # pair sum of {v > t} for t in [levels[k], levels[k+1])
    gaps = np.diff(levels.astype(ld))
    return float(math.fsum((per[:-1] * gaps).astype(float)))


def coarea_check(u, p, stencil: PairStencil, g=None) -> float:
    """Relative defect between the pair term and its layer-cake reconstruction."""
    vals = u.values if isinstance(u, PeriodicProfile) else np.asarray(u, float)
    A = pair_term(vals, p, stencil)
    B = layer_cake_pair_sum(vals, p, stencil)
    return abs(A - B) / max(A, 1e-30)


# -- perimeter lower bound -----------------------------------------------------------------

@dataclass
class LowerBoundProbe:
    perimeter: float
    count: int
    zeta: float

    @property
    def ratio(self) -> float:
        return self.perimeter / self.count if self.count else math.nan


def perimeter_lower_bound_probe(E: LatticeSet, omega: Box, stencil: PairStencil) -> LowerBoundProbe:
    """``P_K(E, omega)`` and the number of zeta-cubes meeting the boundary of ``E``.

    ``zeta = delta / (8 sqrt n)`` rounded to whole cells (at least one).  A
    cube counts when its three-fold enlargement lies in ``omega`` and it holds
    a nearest-neighbour boundary cell.
    """
    m, n = stencil.m, stencil.dim
    c = max(1, int(round(stencil.kernel.delta / (8 * math.sqrt(n)) * m)))
    P = perimeter(E, omega, stencil).total
    lo, hi = omega.cell_range(m)
    win = WindowGrid(n, m, lo, hi).grow(1)
    b = nn_boundary(E.values_on(win))[tuple(slice(1, -1) for _ in range(n))]
    count = 0
    ranges = [range(a + c, bb - 2 * c + 1, c) for a, bb in zip(lo, hi)]
    for corner in np.array(np.meshgrid(*ranges, indexing="ij")).reshape(n, -1).T:
        sl = tuple(slice(k - a, k - a + c) for k, a in zip(corner, lo))
        if b[sl].any():
            count += 1
    return LowerBoundProbe(P, count, c / m)
