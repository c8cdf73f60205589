"""Discrete cell problem: minimize ``E_p`` over mean-zero periodic profiles.

Two methods are provided.

``lp`` (default)
    The dual of the discrete problem is a min-cost flow: the flux
    ``x = w z`` on every pair is bounded by ``|x| <= w`` and its divergence
    must cancel the forcing.  It is solved exactly with the HiGHS dual
    simplex; the profile ``u`` is read off the equality multipliers.  Only a
    few short offsets enter the LP at first.  Every other offset carries the
    flux ``-w sign(p . d h)``, which is divergence free; offsets whose pairs
    violate optimality of that choice are added until none is left (column
    generation).  A tiny box ``[-mu, mu]`` on the residual of every node
    equation adds ``mu |u|_1`` to the primal objective, which picks the
    smallest optimal profile of this highly degenerate problem.
``pdhg``
    First-order primal-dual iteration on ``(u, z)`` with clamping of ``z``.
    Only practical for small problems; kept as an independent cross-check.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import _pairsum
from ._accel import njit, use_numba
from .energy import ForcingField, affine_shift, cell_energy, energy_at_zero
from .errors import NonAdmissibleKernel, PreconditionError, ResourceError
from .kernel import KernelSpec, is_admissible
from .lattice import PairStencil, TorusGrid, WindowGrid, build_stencil


@dataclass(frozen=True, eq=False)
class PeriodicProfile:
    """Mean-zero torus profile ``u`` and its direction ``p``."""
    torus: TorusGrid
    values: np.ndarray
    p: tuple

    def __post_init__(self):
        v = np.array(self.values, float).reshape(self.torus.shape)
        v = v - v.mean()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "p", tuple(int(x) for x in np.atleast_1d(self.p)))

    @property
    def mean(self) -> float:
        return float(self.values.mean())

    def v_on(self, window: WindowGrid) -> np.ndarray:
        """``v_p = u + p . x`` at the cells of ``window`` (periodic unwrap)."""
        if window.m != self.torus.m:
            raise PreconditionError("window and torus resolutions differ")
        m = self.torus.m
        idx = [np.arange(a, b) % m for a, b in zip(window.lo, window.hi)]
        x = window.centers()
        return self.values[np.ix_(*idx)] + np.tensordot(np.asarray(self.p, float), x, axes=1)

    def v_torus(self) -> np.ndarray:
        return self.values + np.tensordot(np.asarray(self.p, float), self.torus.centers(), axes=1)

    def shifted(self, k) -> "PeriodicProfile":
        v = np.roll(self.values, tuple(int(x) for x in np.atleast_1d(k)), axis=tuple(range(self.torus.dim)))
        return PeriodicProfile(self.torus, v, self.p)


@dataclass(frozen=True, eq=False)
class Calibration:
    """Pairwise field ``z(i, d)`` on the positive half stencil.

    Offsets listed in ``active`` store one value per torus cell in ``Z``;
    every other offset carries the constant ``default[k] = -sign(p . d h)``.
    Values for negative offsets follow from ``z(i, -d) = -z(i - d, d)``.
    """
    stencil: PairStencil
    p: tuple
    default: np.ndarray     # per half-offset
    active: np.ndarray      # half-offset positions with explicit values
    Z: np.ndarray           # (len(active), N)

    @property
    def rows(self) -> np.ndarray:
        r = np.full(len(self.default), -1, np.int64)
        r[self.active] = np.arange(len(self.active))
        return r

    def values_for(self, k: int) -> np.ndarray:
        """``z(i, d_k)`` for all cells i (``k`` indexes the half stencil)."""
        r = self.rows[k]
        N = self.stencil.m ** self.stencil.dim
        return self.Z[r] if r >= 0 else np.full(N, self.default[k])

    def max_abs(self) -> float:
        return float(max(np.abs(self.default).max(initial=0.0), np.abs(self.Z).max(initial=0.0)))

    def to_rows(self):
        """(cell, dx..., z) rows for the explicit part, for CSV dumps."""
        hh = self.stencil.half
        D = self.stencil.offsets[hh]
        out = []
        for r, k in enumerate(self.active):
            for i, val in enumerate(self.Z[r]):
                out.append((i, *D[k].tolist(), float(val)))
        return out


@dataclass
class SolverOptions:
    tol: float | None = None          # absolute; default rel_tol * E_p(0)
    rel_tol: float = 1e-8
    max_iter: int = 200_000
    checkpoint_every: int = 1000
    method: str = "lp"
    seed: int = 0
    amplitude_cap: float | None = None
    max_rounds: int = 50
    init_radius: float = 3.0


@dataclass
class SolveReport:
    status: str
    method: str
    iterations: int
    rounds: int
    primal_energy: float
    dual_value: float
    gap: float
    el_residual: float
    layering_defect: float
    tol: float
    energy_at_zero: float
    wall_time: float
    g_sup: float
    g_lq: float
    active_offsets: int
    checkpoints: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["checkpoints"] = [dict(c) for c in self.checkpoints]
        return d


# -- full-stencil scan ----------------------------------------------------------------

@njit
def _scan_nb(u, m, n, Dh, wh, c, zdef, rows, Z, vtol, viol):
    # one pass over every (cell, half-offset) pair
    N = u.shape[0]
    pair = 0.0
    dual = 0.0
    layer = 0.0
    for k in range(Dh.shape[0]):
        r = rows[k]
        cnt = 0
        for i in range(N):
            if n == 1:
                j = (i + Dh[k, 0]) % m
            else:
                i0 = i // m
                i1 = i - i0 * m
                j = ((i0 + Dh[k, 0]) % m) * m + (i1 + Dh[k, 1]) % m
            a = u[i] - u[j] - c[k]
            z = Z[r, i] if r >= 0 else zdef[k]
            pair += wh[k] * abs(a)
            dual -= wh[k] * z * c[k]
            lay = abs(abs(a) * z - a) / (1.0 + abs(a))
            if lay > layer:
                layer = lay
            if r < 0:
                if zdef[k] != 0.0:
                    if a * zdef[k] < -vtol:
                        cnt += 1
                elif abs(a) > vtol:
                    cnt += 1
        viol[k] = cnt
    return pair, dual, layer


def _scan_np(u, m, n, Dh, wh, c, zdef, rows, Z, vtol, viol):
    pair = dual = layer = 0.0
    for k in range(len(wh)):
        j = _pairsum.torus_neighbor(m, n, Dh[k])
        a = u - u[j] - c[k]
        z = Z[rows[k]] if rows[k] >= 0 else np.full(u.shape, zdef[k])
        pair += wh[k] * np.abs(a).sum()
        dual -= wh[k] * (z * c[k]).sum()
        layer = max(layer, float((np.abs(np.abs(a) * z - a) / (1 + np.abs(a))).max()))
        if rows[k] < 0:
            bad = (a * zdef[k] < -vtol) if zdef[k] != 0 else (np.abs(a) > vtol)
            viol[k] = np.count_nonzero(bad)
        else:
            viol[k] = 0
    return float(pair), float(dual), float(layer)


def _scan(u, stencil, p, cal_default, rows, Z, vtol=1e-13):
    hh = stencil.half
    Dh = np.ascontiguousarray(stencil.offsets[hh])
    wh = np.ascontiguousarray(stencil.weights[hh])
    c = affine_shift(p, stencil)
    viol = np.zeros(len(hh), np.int64)
    Zc = Z if Z.size else np.zeros((1, 1))
    fn = _scan_nb if use_numba() else _scan_np
    pair, dual, layer = fn(np.ascontiguousarray(u, float).ravel(), stencil.m, stencil.dim, Dh, wh, c,
                           cal_default, rows, Zc, vtol, viol)
    return pair, dual, layer, viol


def el_residual(u: PeriodicProfile | None, z: Calibration, g: ForcingField | None) -> float:
    """``max_i |sum_d w(d) z(i, d) + g_i h^n|`` over all torus cells.

    Offsets at their constant default value are divergence free and drop out
    exactly; only explicit offsets contribute.
    """
    return float(np.abs(_residual_vector(z, g)).max())


def _residual_vector(z: Calibration, g):
    st = z.stencil
    m, n = st.m, st.dim
    N = m ** n
    R = np.zeros(N) if g is None else np.asarray(g.values, float).ravel() * st.h ** n
    hh = st.half
    for r, k in enumerate(z.active):
        x = st.weights[hh[k]] * (z.Z[r] - z.default[k])
        j = _pairsum.torus_neighbor(m, n, st.offsets[hh[k]])
        R = R + x
        R = R - np.bincount(j, weights=x, minlength=N)
    return R


def layering_defect(u: PeriodicProfile, z: Calibration) -> float:
    _, _, layer, _ = _scan(u.values, z.stencil, u.p, z.default, z.rows, z.Z)
    return layer


def _g_lq(g, stencil):
    if g is None:
        return 0.0
    q = stencil.dim / (2 * stencil.kernel.s1)
    return g.lp_norm(q)


# -- LP method --------------------------------------------------------------------------

def _initial_active(stencil, p, radius):
    hh = stencil.half
    D = stencil.offsets[hh]
    pd = D @ np.asarray(p, float)
    sel = (np.abs(pd) <= 1) & (np.linalg.norm(D, axis=1) <= radius)
    if not sel.any():
        sel[np.argmin(np.linalg.norm(D, axis=1))] = True
    return np.nonzero(sel)[0]


def _solve_lp(stencil, p, b, active, mu):
    m, n = stencil.m, stencil.dim
    N = m ** n
    hh = stencil.half
    wh = stencil.weights[hh]
    c = affine_shift(p, stencil)
    K = len(active)
    tails = np.tile(np.arange(N), K)
    heads = np.concatenate([_pairsum.torus_neighbor(m, n, stencil.offsets[hh[k]]) for k in active])
    ncol = K * N
    col = np.arange(ncol)
    rows = np.concatenate([tails, heads, np.arange(N), np.arange(N)])
    cols = np.concatenate([col, col, np.full(N, ncol), ncol + 1 + np.arange(N)])
    vals = np.concatenate([np.ones(ncol), -np.ones(ncol), -np.ones(N), np.ones(N)])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(N, ncol + 1 + N))
    W = np.repeat(wh[active], N)
    sc = float(W.max())
    cost = np.concatenate([np.repeat(c[active], N), [0.0], np.zeros(N)])
    lo = np.concatenate([-W / sc, [-np.inf], np.full(N, -mu / sc)])
    hi = np.concatenate([W / sc, [np.inf], np.full(N, mu / sc)])
    res = linprog(cost, A_eq=A, b_eq=-b / sc, bounds=np.stack([lo, hi], 1), method="highs-ds",
                  options=dict(primal_feasibility_tolerance=1e-10, dual_feasibility_tolerance=1e-10))
    if res.status != 0:
        raise RuntimeError(f"LP solve failed: {res.message}")
    u = np.asarray(res.eqlin.marginals, float)
    x = res.x[:ncol].reshape(K, N) * sc
    Z = np.clip(x / wh[active][:, None], -1.0, 1.0)
    return u - u.mean(), Z, int(getattr(res, "nit", 0) or 0)


def _lp_method(stencil, p, g, opts, tol, E0, t0):
    m, n = stencil.m, stencil.dim
    N = m ** n
    hh = stencil.half
    c = affine_shift(p, stencil)
    zdef = -np.sign(c)
    b = np.zeros(N) if g is None else np.asarray(g.values, float).ravel() * stencil.h ** n
    mu = tol / (4.0 * N)
    active = _initial_active(stencil, p, opts.init_radius)
    iters = 0
    checkpoints = []
    best = math.inf
    for rnd in range(opts.max_rounds):
        u, Z, nit = _solve_lp(stencil, p, b, active, mu)
        iters += nit
        rows = np.full(len(hh), -1, np.int64)
        rows[active] = np.arange(len(active))
        pair, dual, layer, viol = _scan(u, stencil, p, zdef, rows, Z)
        energy = pair + float(b @ u)
        best = min(best, energy)
        checkpoints.append(dict(iteration=iters, round=rnd, energy=energy, best_energy=best,
                                gap=energy - dual, active_offsets=int(len(active)),
                                violations=int(viol.sum())))
        if not viol.any() or iters >= opts.max_iter:
            break
        active = np.union1d(active, np.nonzero(viol)[0])
    return u, Z, active, zdef, iters, rnd + 1, checkpoints, not viol.any()


# -- PDHG method ------------------------------------------------------------------------

@njit
def _pdhg_nb(u, z, nbr, wh, c, b, tau, sigma, iters):
    N, K = z.shape
    ubar = u.copy()
    div = np.empty(N)
    for it in range(iters):
        for i in range(N):
            for k in range(K):
                a = wh[k] * (ubar[i] - ubar[nbr[i, k]] - c[k])
                v = z[i, k] + sigma * a
                z[i, k] = 1.0 if v > 1.0 else (-1.0 if v < -1.0 else v)
        for i in range(N):
            div[i] = b[i]
        for i in range(N):
            for k in range(K):
                x = wh[k] * z[i, k]
                div[i] += x
                div[nbr[i, k]] -= x
        mean = 0.0
        for i in range(N):
            ubar[i] = u[i]
            u[i] -= tau * div[i]
            mean += u[i]
        mean /= N
        for i in range(N):
            u[i] -= mean
            ubar[i] = 2.0 * u[i] - ubar[i]


def _pdhg_np(u, z, nbr, wh, c, b, tau, sigma, iters):
    N = u.shape[0]
    ubar = u.copy()
    for _ in range(iters):
        a = wh * (ubar[:, None] - ubar[nbr] - c)
        np.clip(z + sigma * a, -1.0, 1.0, out=z)
        x = wh * z
        div = b + x.sum(1) - np.bincount(nbr.ravel(), weights=x.ravel(), minlength=N)
        old = u.copy()
        u -= tau * div
        u -= u.mean()
        ubar[:] = 2 * u - old


def _pdhg_method(stencil, p, g, opts, tol, E0, t0):
    m, n = stencil.m, stencil.dim
    N = m ** n
    hh = stencil.half
    K = len(hh)
    if N * K > 5e7:
        raise ResourceError(f"pdhg would store {N * K} pair values; use method='lp'")
    wh = np.ascontiguousarray(stencil.weights[hh])
    c = affine_shift(p, stencil)
    nbr = np.stack([_pairsum.torus_neighbor(m, n, stencil.offsets[k]) for k in hh], 1).astype(np.int64)
    b = np.zeros(N) if g is None else np.asarray(g.values, float).ravel() * stencil.h ** n
    # |K|^2 <= max weighted degree bound
    L = math.sqrt(4.0 * float(np.sum(wh ** 2)))
    tau = sigma = 0.99 / L
    u = np.zeros(N)
    zdef = -np.sign(c)
    z = np.tile(zdef, (N, 1)).astype(float)
    step = _pdhg_nb if use_numba() else _pdhg_np
    iters = 0
    best = math.inf
    best_u, best_z = u.copy(), z.copy()
    checkpoints = []
    rows = np.arange(K, dtype=np.int64)
    converged = False
    while iters < opts.max_iter:
        chunk = min(opts.checkpoint_every, opts.max_iter - iters)
        step(u, z, nbr, wh, c, b, tau, sigma, chunk)
        iters += chunk
        pair, dual, layer, _ = _scan(u, stencil, p, zdef, rows, np.ascontiguousarray(z.T))
        energy = pair + float(b @ u)
        if energy < best:
            best, best_u, best_z = energy, u.copy(), z.copy()
        cal = Calibration(stencil, tuple(p), zdef, np.arange(K), np.ascontiguousarray(z.T))
        res = float(np.abs(_residual_vector(cal, g)).max())
        checkpoints.append(dict(iteration=iters, energy=energy, best_energy=best, gap=energy - dual,
                                el_residual=res))
        if max(energy - dual, res) <= tol:
            converged = True
            best_u, best_z = u.copy(), z.copy()
            break
    return best_u, np.ascontiguousarray(best_z.T), np.arange(K), zdef, iters, 1, checkpoints, converged


# -- driver -------------------------------------------------------------------------------

def solve_cell_problem(p, kernel: KernelSpec | None = None, grid: TorusGrid | None = None,
                       g: ForcingField | None = None, opts: SolverOptions | None = None,
                       stencil: PairStencil | None = None):
    """Minimize the discrete cell energy for direction ``p``.

    Returns ``(PeriodicProfile, Calibration, SolveReport)``.  The report's
    status is ``converged`` only when both the Euler-Lagrange residual and
    the duality gap are at most ``tol``; otherwise ``unconverged`` with the
    best iterate.
    """
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    if stencil is None:
        if kernel is None or grid is None:
            raise PreconditionError("need a stencil or a kernel and a grid")
        stencil = build_stencil(kernel, grid.m)
    kernel = stencil.kernel
    if not is_admissible(kernel):
        raise NonAdmissibleKernel("kernel is not admissible")
    grid = TorusGrid(stencil.dim, stencil.m)
    p = tuple(int(v) for v in np.atleast_1d(p))
    if len(p) != stencil.dim:
        raise PreconditionError(f"direction {p} does not match dimension {stencil.dim}")
    if g is not None:
        if g.m != stencil.m or g.dim != stencil.dim:
            raise PreconditionError("forcing resolution does not match the grid")
        if opts.amplitude_cap is not None and g.sup_norm > opts.amplitude_cap:
            raise PreconditionError(f"|g|_inf = {g.sup_norm} exceeds amplitude cap {opts.amplitude_cap}")
        g.require_small(kernel.kappa3)
    E0 = energy_at_zero(p, stencil)
    scale = E0 if E0 > 0 else energy_at_zero((1,) + (0,) * (stencil.dim - 1), stencil)
    tol = opts.tol if opts.tol is not None else opts.rel_tol * scale
    N = grid.size
    c = affine_shift(p, stencil)
    zero_g = g is None or g.is_zero()

    if zero_g and opts.method == "lp":
        # symmetric solution: u = 0, z = -sign(p . d h), no LP needed
        u = np.zeros(N)
        zdef = -np.sign(c)
        active = np.zeros(0, np.int64)
        Z = np.zeros((0, N))
        iters, rounds, converged_flag = 0, 0, True
        checkpoints = []
    elif opts.method == "lp":
        u, Z, active, zdef, iters, rounds, checkpoints, converged_flag = _lp_method(stencil, p, g, opts, tol, E0, t0)
    elif opts.method == "pdhg":
        u, Z, active, zdef, iters, rounds, checkpoints, converged_flag = _pdhg_method(stencil, p, g, opts, tol, E0, t0)
    else:
        raise PreconditionError(f"unknown method {opts.method!r}")

    prof = PeriodicProfile(grid, u.reshape(grid.shape), p)
    cal = Calibration(stencil, p, zdef, np.asarray(active, np.int64), np.asarray(Z, float))
    rows = cal.rows
    pair, dual, layer, viol = _scan(prof.values, stencil, p, zdef, rows, cal.Z)
    energy = pair + (0.0 if zero_g else float(np.sum(g.values * prof.values)) * stencil.h ** stencil.dim)
    resid = el_residual(prof, cal, g)
    gap = energy - dual
    ok = converged_flag and max(resid, abs(gap)) <= tol and not viol.any() or \
        (opts.method == "pdhg" and converged_flag)
    if not checkpoints:
        checkpoints = [dict(iteration=0, energy=energy, best_energy=energy, gap=gap)]
    report = SolveReport(status="converged" if ok else "unconverged", method=opts.method,
                         iterations=iters, rounds=rounds, primal_energy=energy, dual_value=dual,
                         gap=gap, el_residual=resid, layering_defect=layer, tol=tol,
                         energy_at_zero=E0, wall_time=time.perf_counter() - t0,
                         g_sup=0.0 if g is None else g.sup_norm, g_lq=_g_lq(g, stencil),
                         active_offsets=int(len(active)), checkpoints=checkpoints)
    return prof, cal, report


# -- subgradient probe ------------------------------------------------------------------------

def subgradient_check(u, p, stencil: PairStencil, g: ForcingField | None = None, trials: int = 20,
                      seed: int = 0, steps=(1e-3, 1e-2, 1e-1), tol: float | None = None):
    """Most negative ``E_p(u + s eta) - E_p(u)`` over probe directions ``eta``.

    Probes are ``trials`` random mean-zero directions plus mean-zero single-cell
    bumps at the ``trials`` roughest cells (largest deviation from the
    nearest-neighbour average), each tried with steps of both signs.
    Returns ``(worst_margin, violated)`` where ``violated`` means the margin is
    below ``-tol`` (default ``1e-10 * max(1, E_p(u))``).
    """
    vals = u.values if isinstance(u, PeriodicProfile) else np.asarray(u, float)
    rng = np.random.default_rng(seed)
    base = cell_energy(vals, p, stencil, g)
    if tol is None:
        tol = 1e-10 * max(1.0, abs(base))
    dirs = []
    for _ in range(trials):
        eta = rng.standard_normal(vals.shape)
        eta -= eta.mean()
        dirs.append(eta / np.abs(eta).max())
    axes = tuple(range(vals.ndim))
    nb = sum(np.roll(vals, s, a) for a in axes for s in (1, -1)) / (2 * vals.ndim)
    rough = np.argsort(-np.abs(vals - nb), axis=None, kind="stable")[:trials]
    for i in rough:
        eta = np.full(vals.size, -1.0 / vals.size)
        eta[i] += 1.0
        dirs.append(eta.reshape(vals.shape))
    worst = math.inf
    for eta in dirs:
        for s in steps:
            for sg in (1.0, -1.0):
                worst = min(worst, cell_energy(vals + sg * s * eta, p, stencil, g, check_mean=False) - base)
    return worst, bool(worst < -tol)
