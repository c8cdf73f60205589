"""Exact minimization of ``J`` or ``F`` in a box with fixed exterior data.

With the exterior fixed, the energy of a configuration ``x`` of the free
cells (those of ``omega``) is

    const + sum_i a_i x_i + sum_{i<j free} w_ij |x_i - x_j|

where ``a_i`` collects the forcing and the pairs to fixed cells.  That is
a cut function with nonnegative pair weights, minimized exactly by one
maximum flow on integer-scaled capacities.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _pairsum
from .energy import ForcingField, LatticeSet, functional_F, functional_J
from .errors import CapacityOverflow, PreconditionError, ResourceError
from .lattice import Box, PairStencil, WindowGrid, enumerate_unit_cubes
from .maxflow import build_graph, max_flow, reaches_sink

MIN_RESOLUTION = 16.0   # smallest positive capacity, in integer units
MAX_TOTAL = 2.0 ** 62
BRUTE_LIMIT = 20


@dataclass
class CutModel:
    """Reduced pairwise model of one plateau problem."""
    window: WindowGrid          # bounding window of omega
    free: np.ndarray            # bool mask over window
    labels: np.ndarray          # exterior labels over window.grow(reach)
    ext: WindowGrid
    const: float
    unary: np.ndarray           # a_i per free cell (flat order of free cells)
    pi: np.ndarray              # pair endpoints (indices into free cells)
    pj: np.ndarray
    pw: np.ndarray

    @property
    def n_free(self) -> int:
        return len(self.unary)

    def value(self, x) -> float:
        x = np.asarray(x, float)
        pair = float(np.sum(self.pw * np.abs(x[self.pi] - x[self.pj])))
        return self.const + float(self.unary @ x) + pair

    def indicator(self, x) -> np.ndarray:
        """Full indicator over ``ext`` with free cells set to ``x``."""
        out = self.labels.copy()
        R = [a - b for a, b in zip(self.window.lo, self.ext.lo)]
        sl = tuple(slice(r, r + s) for r, s in zip(R, self.window.shape))
        core = out[sl]
        core[self.free] = np.asarray(x, bool)
        out[sl] = core
        return out


@dataclass
class PlateauResult:
    set: LatticeSet
    optimum: float
    rounding_bound: float
    scale: float
    n_free: int
    functional: str


def _forcing_mask(omega, functional, window, m):
    if functional == "J":
        return omega.mask(window)
    if functional == "F":
        return enumerate_unit_cubes(omega, 1.0, m=m, window=window).mask(window)
    raise PreconditionError(f"functional must be 'J' or 'F', got {functional!r}")


def cut_model(exterior: LatticeSet, omega, stencil: PairStencil, g: ForcingField | None = None,
              functional: str = "J") -> CutModel:
    """Reduce the plateau problem on ``omega`` to unary and pair terms."""
    m, n = stencil.m, stencil.dim
    if exterior.window.m != m:
        raise PreconditionError("exterior resolution differs from the stencil")
    lo, hi = omega.bounding(m)
    win = WindowGrid(n, m, lo, hi)
    R = stencil.reach
    ext = win.grow(R)
    labels = exterior.values_on(ext)
    Oext = omega.mask(ext)
    free = omega.mask(win)
    fid = -np.ones(ext.shape, np.int64)
    fid[Oext] = np.arange(int(Oext.sum()))
    cells = np.flatnonzero(Oext)
    nf = len(cells)
    unary = np.zeros(nf)
    if g is not None and not g.is_zero():
        G = g.on_window(ext)
        fm = np.zeros(ext.shape, bool)
        core = tuple(slice(R, R + s) for s in win.shape)
        fm[core] = _forcing_mask(omega, functional, win, m)
        unary += np.where(fm[Oext], G[Oext], 0.0) * stencil.h ** n
    else:
        _forcing_mask(omega, functional, win, m)
    lab = labels.ravel()
    fflat = fid.ravel()
    dflat = _pairsum.flat_offsets(stencil.offsets, ext.shape)
    hh = stencil.half
    is_half = np.zeros(len(stencil), bool)
    is_half[hh] = True
    const = 0.0
    pi, pj, pw = [], [], []
    for k in range(len(stencil)):
        w = float(stencil.weights[k])
        j = cells + dflat[k]
        fj = fflat[j]
        fixed = fj < 0
        on = lab[j[fixed]]
        src = fid.ravel()[cells[fixed]]
        # pair to a fixed cell: cost w if labels differ
        np.add.at(unary, src[~on], w)
        np.add.at(unary, src[on], -w)
        const += w * np.count_nonzero(on)
        if is_half[k]:
            sel = ~fixed
            pi.append(np.arange(nf)[sel])
            pj.append(fj[sel])
            pw.append(np.full(np.count_nonzero(sel), w))
    cat = lambda a, dt: np.concatenate(a).astype(dt) if a else np.zeros(0, dt)
    return CutModel(win, free, labels, ext, const, unary, cat(pi, np.int64), cat(pj, np.int64), cat(pw, float))


def _min_cut(model: CutModel):
    nf = model.n_free
    s, t = nf, nf + 1
    a = model.unary
    const = model.const + float(a[a < 0].sum())
    tails = np.concatenate([np.where(a > 0, np.arange(nf), s), model.pi])
    heads = np.concatenate([np.where(a > 0, t, np.arange(nf)), model.pj])
    fcap = np.concatenate([np.abs(a), model.pw])
    rcap = np.concatenate([np.zeros(nf), model.pw])
    total = float(fcap.sum() + rcap.sum())
    if total == 0.0:
        return np.ones(nf, bool), const, 0.0, 1.0
    pos = np.concatenate([fcap, rcap])
    small = float(pos[pos > 0].min())
    scale = 2.0 ** math.floor(math.log2(MAX_TOTAL / total))
    if scale * small < MIN_RESOLUTION:
        raise CapacityOverflow(f"int64 scaling (total {total:.3g}) rounds capacity {small:.3g} to "
                               f"{scale * small:.3g} units; use a smaller window or milder forcing")
    ic = np.rint(fcap * scale).astype(np.int64)
    ir = np.rint(rcap * scale).astype(np.int64)
    start, to, cap, rev = build_graph(nf + 2, tails, heads, ic, ir)
    max_flow(start, to, cap, rev, s, t)
    # largest minimizer: everything that cannot reach the sink
    x = ~reaches_sink(start, to, cap, rev, t)[:nf]
    bound = 0.5 * len(fcap) * 2 / scale
    return x, const, bound, scale


def _result(model, x, exterior, functional, bound, scale):
    ind = model.indicator(x)
    E = LatticeSet(model.ext, ind, exterior.exterior, exterior.label)
    return PlateauResult(E, model.value(x), bound, scale, model.n_free, functional)


def _empty(omega, m) -> bool:
    lo, hi = omega.bounding(m)
    return any(b <= a for a, b in zip(lo, hi))


def solve_plateau(exterior: LatticeSet, omega, stencil: PairStencil, g: ForcingField | None = None,
                  functional: str = "J") -> PlateauResult:
    """Global minimizer of ``functional`` over sets agreeing with ``exterior`` outside ``omega``."""
    if _empty(omega, stencil.m):
        return PlateauResult(exterior, 0.0, 0.0, 1.0, 0, functional)
    model = cut_model(exterior, omega, stencil, g, functional)
    if model.n_free == 0:
        return _result(model, np.zeros(0, bool), exterior, functional, 0.0, 1.0)
    x, _, bound, scale = _min_cut(model)
    return _result(model, x, exterior, functional, bound, scale)


def brute_force_plateau(exterior: LatticeSet, omega, stencil: PairStencil, g: ForcingField | None = None,
                        functional: str = "J", chunk: int = 1 << 14) -> PlateauResult:
    """Exhaustive enumeration; ties go to the lexicographically smallest indicator."""
    if _empty(omega, stencil.m):
        return PlateauResult(exterior, 0.0, 0.0, 1.0, 0, functional)
    model = cut_model(exterior, omega, stencil, g, functional)
    nf = model.n_free
    if nf > BRUTE_LIMIT:
        raise ResourceError(f"{nf} free cells exceed the brute-force limit {BRUTE_LIMIT}")
    best, best_x = math.inf, np.zeros(nf, bool)
    bits = 1 << np.arange(nf)[::-1]    # first free cell is the most significant bit
    for c0 in range(0, 1 << nf, chunk):
        codes = np.arange(c0, min(c0 + chunk, 1 << nf))
        X = ((codes[:, None] & bits) > 0).astype(float)
        vals = model.const + X @ model.unary
        if len(model.pw):
            vals = vals + np.abs(X[:, model.pi] - X[:, model.pj]) @ model.pw
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, best_x = float(vals[k]), X[k].astype(bool)
    return _result(model, best_x, exterior, functional, 0.0, 1.0)


def set_value(E: LatticeSet, omega, stencil: PairStencil, g: ForcingField | None = None,
              functional: str = "J") -> float:
    """Value of ``E`` in the reduced model (same numbers as the energy module)."""
    model = cut_model(E, omega, stencil, g, functional)
    R = [a - b for a, b in zip(model.window.lo, model.ext.lo)]
    sl = tuple(slice(r, r + s) for r, s in zip(R, model.window.shape))
    return model.value(model.labels[sl][model.free])


def evaluate(E: LatticeSet, omega, stencil, g=None, functional="J"):
    fn = functional_J if functional == "J" else functional_F
    return fn(E, omega, stencil, g)


@dataclass
class ClassACheck:
    worst_gap: float
    gaps: list
    boxes: list
    min_gap: float

    def passed(self, tol: float) -> bool:
        return self.min_gap >= -tol and self.worst_gap <= tol


def classA_window_check(E: LatticeSet, windows, stencil: PairStencil, g: ForcingField | None = None,
                        functional: str = "J") -> ClassACheck:
    """``J(E, box) - min J`` over the given boxes; small gaps certify local minimality."""
    gaps = []
    for box in windows:
        res = solve_plateau(E, box, stencil, g, functional)
        gaps.append(set_value(E, box, stencil, g, functional) - res.optimum)
    gaps_arr = np.asarray(gaps) if gaps else np.zeros(1)
    return ClassACheck(float(gaps_arr.max()), gaps, list(windows), float(gaps_arr.min()))


def unit_boxes(lo, hi, dim: int = 1):
    """Unit boxes ``k + (0,1)^n`` tiling ``[lo, hi)^n`` (integer bounds)."""
    rng = range(int(lo), int(hi))
    return [Box(tuple(float(v) for v in k), tuple(float(v) + 1 for v in k))
            for k in itertools.product(rng, repeat=dim)]
