"""Stable norm estimates and the scaling experiments built on them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cellsolver import PeriodicProfile
from .energy import (ForcingField, LatticeSet, empty_rule, functional_F, halfspace_rule, levelset_rule,
                     perimeter)
from .errors import PreconditionError
from .geometry import extract_level_sets
from .kernel import KernelSpec, halfspace_phi_oracle
from .lattice import Box, PairStencil, RotatedSquare, TorusGrid, WindowGrid, build_stencil

__all__ = [
    "StableNormEstimate", "stable_norm_estimate", "richardson_h", "halfspace_phi_oracle",
    "phi_direction_sweep", "convexity_probe", "GammaExperiment", "gamma_limsup_experiment",
    "isoperimetric_scan", "fit_slope", "large_domain_scan", "short_range_ratio", "strip_energy_proxy",
]


def fit_inverse(R, vals):
    """Least-squares ``a + b / R``; returns ``(a, b, max residual)``."""
    R = np.asarray(R, float)
    A = np.stack([np.ones_like(R), 1.0 / R], 1)
    (a, b), *_ = np.linalg.lstsq(A, np.asarray(vals, float), rcond=None)
    res = float(np.abs(A @ np.array([a, b]) - vals).max())
    return float(a), float(b), res


@dataclass
class StableNormEstimate:
    p: tuple
    sizes: list
    values: list
    truncation: list
    extrapolated: float
    error_band: float
    fit: tuple
    t: float
    m: int
    model: str = "a + b/R, last three sizes"

    @property
    def differences(self):
        return list(np.diff(self.values))

    @property
    def phi_tilde(self) -> float:
        """The 1-homogeneous value ``|p| phi(p/|p|)``."""
        return self.extrapolated * float(np.linalg.norm(self.p))

    def rows(self):
        ps = " ".join(map(str, self.p))
        return [dict(p=ps, R=R, value=v, truncation_bound=tb)
                for R, v, tb in zip(self.sizes, self.values, self.truncation)]


def _median_tp(u: PeriodicProfile) -> float:
    fam = extract_level_sets(u)
    ts = fam.tp_thresholds()
    if len(ts) == 0:
        ts = fam.thresholds
    return float(np.median(ts))


def stable_norm_estimate(p, stencil: PairStencil, profile: PeriodicProfile | None = None,
                         g: ForcingField | None = None, sizes=(4, 8, 16), t: float | None = None,
                         method: str = "auto") -> StableNormEstimate:
    """``F(E_p, Q^p_R) / R^{n-1}`` over ``sizes`` and its ``a + b/R`` extrapolation.

    ``E_p = {v_p > t}`` with ``t`` the median of the thresholds in ``T_p``
    (``profile=None`` means ``u = 0``, the solution for ``g = 0``).  ``Q^p_R``
    is the square of side ``R`` with a face orthogonal to ``p``, centred at
    the lattice point nearest to ``t p / |p|^2`` so the interface crosses its
    middle.
    """
    p = tuple(int(v) for v in np.atleast_1d(p))
    n, m = stencil.dim, stencil.m
    if len(p) != n or not any(p):
        raise PreconditionError(f"need a nonzero integer direction in dimension {n}, got {p}")
    if profile is None:
        profile = PeriodicProfile(TorusGrid(n, m), np.zeros((m,) * n), p)
    if tuple(profile.p) != p:
        raise PreconditionError(f"profile solved for {profile.p}, not {p}")
    if t is None:
        t = _median_tp(profile)
    pv = np.asarray(p, float)
    center = tuple(np.round(t * pv / (pv @ pv) * m) / m)
    base = WindowGrid(n, m, (0,) * n, (m,) * n)
    rule = levelset_rule(profile.values, p, t)
    E = LatticeSet.from_rule(base, rule, f"E_p(p={p})")
    vals, trunc = [], []
    for R in sizes:
        Q = RotatedSquare(center, p, float(R))
        res = functional_F(E, Q, stencil, g, method=method)
        vals.append(res.total / R ** (n - 1))
        trunc.append(res.truncation_bound / R ** (n - 1))
    k = min(3, len(sizes))
    if k >= 2:
        a, b, _ = fit_inverse(sizes[-k:], vals[-k:])
    else:
        a, b = vals[-1], 0.0
    return StableNormEstimate(p, list(sizes), vals, trunc, a, abs(a - vals[-1]), (a, b), float(t), m)


def richardson_h(coarse: float, fine: float, exponent: float, ratio: float = 2.0) -> float:
    """Remove an ``h^exponent`` error term from estimates at ``h`` and ``h / ratio``."""
    f = ratio ** exponent
    return (f * fine - coarse) / (f - 1.0)


# -- direction sweep and convexity -------------------------------------------------------

@dataclass
class SweepRow:
    p: tuple
    angle: float
    phi_tilde: float
    phi: float
    error: float


def phi_direction_sweep(estimates: dict, errors: dict | None = None):
    """Rows ``(p, angle, phi_tilde(p), phi(p/|p|))`` sorted by angle and the
    largest ``|phi(a) - phi(b)| / angle(a, b)`` between neighbours.

    ``estimates`` maps integer directions to ``phi(p/|p|)``.
    """
    errors = errors or {}
    rows = []
    for p, phi in estimates.items():
        pv = np.asarray(p, float)
        ang = math.atan2(pv[1], pv[0]) if len(pv) == 2 else (0.0 if pv[0] > 0 else math.pi)
        rows.append(SweepRow(tuple(p), ang, float(np.linalg.norm(pv)) * phi, float(phi), float(errors.get(p, 0.0))))
    rows.sort(key=lambda r: r.angle)
    mod = 0.0
    for a, b in zip(rows, rows[1:]):
        d = b.angle - a.angle
        if d > 0:
            mod = max(mod, abs(b.phi - a.phi) / d)
    return rows, mod


@dataclass
class ConvexityReport:
    triples: list
    worst_margin: float
    violations: int


def convexity_probe(phi_tilde: dict, errors: dict | None = None, tol: float = 0.0) -> ConvexityReport:
    """Check ``phi~(p+q) <= phi~(p) + phi~(q)`` on every available triple.

    A triple counts as a violation only when the shortfall exceeds the sum of
    the three estimate errors plus ``tol``.
    """
    errors = errors or {}
    keys = [tuple(k) for k in phi_tilde]
    triples = []
    worst = math.inf
    bad = 0
    for i, p in enumerate(keys):
        for q in keys[i:]:
            s = tuple(a + b for a, b in zip(p, q))
            if s not in phi_tilde:
                continue
            margin = phi_tilde[p] + phi_tilde[q] - phi_tilde[s]
            err = errors.get(p, 0.0) + errors.get(q, 0.0) + errors.get(s, 0.0) + tol
            triples.append((p, q, s, margin, err))
            worst = min(worst, margin)
            if margin < -err:
                bad += 1
    return ConvexityReport(triples, worst, bad)


# -- Gamma-limsup construction ---------------------------------------------------------------

@dataclass
class GammaExperiment:
    polygon: list
    faces: list           # (p, length)
    epsilons: list
    values: list
    target: float
    symdiff: list
    errors: list = field(default_factory=list)

    def rows(self):
        return [dict(epsilon=e, value=v, target=self.target, rel_error=r, symdiff=s)
                for e, v, r, s in zip(self.epsilons, self.values, self.errors, self.symdiff)]


def _primitive(v, tol=1e-9):
    v = np.asarray(v, float)
    nz = np.abs(v[np.abs(v) > tol])
    for k in range(1, 9):
        c = v / nz.min() * k
        if np.allclose(c, np.round(c), atol=1e-7):
            r = np.round(c).astype(int)
            gcd = np.gcd.reduce(np.abs(r[r != 0]))
            return tuple(int(x) for x in r // gcd)
    return None


def _faces(polygon):
    """Faces of a counter-clockwise polygon (or a 1D interval) as
    ``(p, length, point, s)``: ``p`` is the inward integer normal and the face
    lies on ``{p_hat . x = s}``."""
    P = [np.atleast_1d(np.asarray(v, float)) for v in polygon]
    if len(P[0]) == 1:
        a, b = float(P[0][0]), float(P[1][0])
        return [((1,), 1.0, np.array([a]), a), ((-1,), 1.0, np.array([b]), -b)]
    out = []
    for i in range(len(P)):
        a, b = P[i], P[(i + 1) % len(P)]
        d = b - a
        L = float(np.linalg.norm(d))
        inward = np.array([-d[1], d[0]]) / L
        p = _primitive(inward)
        if p is None:
            raise PreconditionError(f"face {i} has no integer normal")
        ph = np.asarray(p, float) / np.linalg.norm(p)
        out.append((p, L, 0.5 * (a + b), float(ph @ a), a, b))
    return out


def _inside_polygon(x, polygon):
    if x.shape[0] == 1:
        a, b = float(polygon[0][0] if np.ndim(polygon[0]) else polygon[0]), \
            float(polygon[1][0] if np.ndim(polygon[1]) else polygon[1])
        return (x[0] > a) & (x[0] < b)
    inside = np.ones(x.shape[1:], bool)
    P = [np.asarray(v, float) for v in polygon]
    for i in range(len(P)):
        a, b = P[i], P[(i + 1) % len(P)]
        d = b - a
        inside &= (d[0] * (x[1] - a[1]) - d[1] * (x[0] - a[0])) > 0
    return inside


def _seg_dist(x, a, b):
    d = b - a
    rel = x - a.reshape((-1,) + (1,) * (x.ndim - 1))
    s = np.clip(np.tensordot(d, rel, axes=1) / (d @ d), 0, 1)
    q = rel - d.reshape((-1,) + (1,) * (x.ndim - 1)) * s
    return np.sqrt((q ** 2).sum(0))


def gamma_limsup_experiment(polygon, epsilons, family: dict, stencil: PairStencil, g: ForcingField | None,
                            omega: Box, phi: dict, method: str = "auto") -> GammaExperiment:
    """Recovery sequence for a polygon (2D, counter-clockwise vertices) or an
    interval (1D, two endpoints).

    Inside ``omega`` each cell takes the value of the translated planelike set
    ``x_j + eps E_{p_j}`` of the face ``j`` nearest to it (Voronoi partition by
    faces at lattice resolution); outside ``omega`` it follows the polygon.
    ``family`` maps each inward face normal ``p_j`` to ``(profile, t)``;
    ``phi`` maps it to the estimate of ``phi(p_j/|p_j|)``.  Energies are
    computed on the blown-up picture, ``F_eps(E, omega) = eps^{n-1} F(E/eps, omega/eps)``.
    """
    n, m = stencil.dim, stencil.m
    faces = _faces(polygon)
    missing = sorted({f[0] for f in faces if f[0] not in family or f[0] not in phi})
    if missing:
        raise PreconditionError(f"no solved planelike set for directions {missing}")
    target = sum(phi[f[0]] * f[1] for f in faces)
    vals, sym, errs = [], [], []
    for eps in epsilons:
        ob = Box(tuple(v / eps for v in omega.lo), tuple(v / eps for v in omega.hi))
        lo, hi = ob.cell_range(m)
        win = WindowGrid(n, m, lo, hi).grow(stencil.reach)
        y = win.centers()
        x = y * eps
        inside = _inside_polygon(x, polygon)
        if n == 1:
            dist = np.stack([np.abs(x[0] - f[2][0]) for f in faces])
        else:
            dist = np.stack([_seg_dist(x, f[4], f[5]) for f in faces])
        owner = np.argmin(dist, 0)
        Eb = inside.copy()
        Om = ob.mask(win)
        for j, f in enumerate(faces):
            p = f[0]
            prof, t = family[p]
            pv = np.asarray(p, float)
            pn = float(np.linalg.norm(pv))
            # shift a (in cells) so that {v_p(y - a) > t} has its interface on the face
            a = (f[3] * pn / eps - t) / (pv @ pv) * pv
            k = np.round(a * m).astype(int)
            sh = WindowGrid(n, m, tuple(np.subtract(win.lo, k)), tuple(np.subtract(win.hi, k)))
            Sj = prof.v_on(sh) > t
            sel = Om & (owner == j)
            Eb[sel] = Sj[sel]
        E = LatticeSet(win, Eb, None, "E_eps")
        res = functional_F(E, ob, stencil, g, method=method)
        v = res.total * eps ** (n - 1)
        vals.append(v)
        sym.append(float(np.count_nonzero(Eb != inside)) * (eps / m) ** n)
        errs.append(abs(v - target) / abs(target))
    return GammaExperiment([tuple(np.atleast_1d(v).tolist()) for v in polygon],
                           [(f[0], f[1]) for f in faces], list(epsilons), vals, float(target), sym, errs)


# -- isoperimetric and large-domain scans -------------------------------------------------

def fit_slope(x, y) -> float:
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ScanReport:
    radii: list
    values: list
    m: int
    flags: list = field(default_factory=list)

    def slope(self, lo: float = 0.0, hi: float = math.inf) -> float:
        sel = [(r, v) for r, v in zip(self.radii, self.values) if lo <= r <= hi]
        if len(sel) < 2:
            return math.nan
        return fit_slope(*zip(*sel))

    def ratios(self, power: float):
        return [v / r ** power for r, v in zip(self.radii, self.values)]


def lattice_ball(m: int, dim: int, r: float) -> LatticeSet:
    k = int(math.ceil(r * m)) + 1
    win = WindowGrid(dim, m, (-k,) * dim, (k,) * dim)
    x = win.centers()
    return LatticeSet(win, (x ** 2).sum(0) < r * r, empty_rule(), f"B_{r}")


def isoperimetric_scan(kernel: KernelSpec, radii, m: int, method: str = "auto") -> ScanReport:
    """``P_K(B_r)`` for lattice balls ``B_r`` (cells with centre in the ball).

    Radii below ``4h`` are flagged as unresolved.
    """
    st = build_stencil(kernel, m)
    vals, flags = [], []
    for r in radii:
        B = lattice_ball(m, kernel.dim, r)
        om = Box(tuple(v / m for v in B.window.lo), tuple(v / m for v in B.window.hi))
        vals.append(perimeter(B, om, st, method).total)
        flags.append("unresolved" if r < 4.0 / m else "")
    return ScanReport(list(radii), vals, m, flags)


def large_domain_scan(kernel: KernelSpec, sizes, m: int, method: str = "auto") -> ScanReport:
    """``P_K((0,R)^n) / R^{n-1}``; sizes within the kernel's reach are flagged."""
    st = build_stencil(kernel, m)
    reach = min(kernel.support, st.rcut)
    vals, flags = [], []
    for R in sizes:
        box = Box((0.0,) * kernel.dim, (float(R),) * kernel.dim)
        lo, hi = box.cell_range(m)
        E = LatticeSet(WindowGrid(kernel.dim, m, lo, hi), np.ones(tuple(b - a for a, b in zip(lo, hi)), bool),
                       empty_rule(), f"box_{R}")
        vals.append(perimeter(E, box, st, method).total / R ** (kernel.dim - 1))
        flags.append("pre-asymptotic" if R <= 2 * reach else "")
    return ScanReport(list(sizes), vals, m, flags)


# -- short-range norm ratio --------------------------------------------------------------------

def _gagliardo_parts(u, s, delta):
    """Full and short-range (``|x-y| < delta``) sums of ``|u_i - u_j| / |x_i - x_j|^{n+2s}`` over
    ordered pairs of distinct cells of the unit cube (no wrap), with ``h^{2n}`` cell weights."""
    u = np.asarray(u, float)
    n = u.ndim
    m = u.shape[0]
    h = 1.0 / m
    full = short = 0.0
    for d in np.ndindex(*((2 * m - 1,) * n)):
        d = np.array(d) - (m - 1)
        if not d.any() or not _lex_pos(d):
            continue
        src = tuple(slice(max(0, -k), m - max(0, k)) for k in d)
        dst = tuple(slice(max(0, k), m - max(0, -k)) for k in d)
        r = float(np.linalg.norm(d)) * h
        val = 2.0 * np.abs(u[src] - u[dst]).sum() * h ** (2 * n) / r ** (n + 2 * s)
        full += val
        if r < delta:
            short += val
    return full, short


def _lex_pos(d):
    for v in d:
        if v:
            return v > 0
    return False


@dataclass
class ShortRangeReport:
    ratios: list
    max_ratio: float
    skipped: int


def short_range_ratio(samples, s: float = 0.25, delta: float = 0.5) -> ShortRangeReport:
    """Ratio of the full to the short-range Gagliardo sum on the unit cube per sample."""
    ratios, skipped = [], 0
    for u in samples:
        u = np.asarray(u, float)
        u = u - u.mean()
        full, short = _gagliardo_parts(u, s, delta)
        if short == 0.0:
            skipped += 1
            continue
        ratios.append(full / short)
    return ShortRangeReport(ratios, max(ratios) if ratios else math.nan, skipped)


# -- far-strip energy -----------------------------------------------------------------------------

@dataclass(frozen=True)
class Strip:
    """``{L1 < |p_hat . x| < L2, |p_hat^perp . x| < R}`` at lattice resolution."""
    p: tuple
    L1: float
    L2: float
    R: float

    @property
    def dim(self):
        return len(self.p)

    def bounding(self, m):
        ext = max(self.L2, self.R) * (math.sqrt(2.0) if self.dim == 2 else 1.0)
        k = int(math.ceil(ext * m)) + 1
        return (-k,) * self.dim, (k,) * self.dim

    def mask(self, window: WindowGrid):
        x = window.centers()
        q = np.asarray(self.p, float) / np.linalg.norm(self.p)
        a = np.abs(np.tensordot(q, x, axes=1))
        out = (a > self.L1) & (a < self.L2)
        if self.dim == 2:
            out &= np.abs(-q[1] * x[0] + q[0] * x[1]) < self.R
        return out


def strip_energy_proxy(stencil: PairStencil, p, sizes, alpha: float | None = None,
                       profile: PeriodicProfile | None = None, g: ForcingField | None = None,
                       t: float = 0.0, method: str = "auto"):
    """``F(E, A_{R, R^{1+alpha}, R}) / R^{n-1}`` for each ``R`` in ``sizes``.

    ``alpha`` defaults to ``(2 s2 - 1) / 2``; ``E = {v_p > t}`` (a halfspace
    when ``profile`` is None).
    """
    n, m = stencil.dim, stencil.m
    p = tuple(int(v) for v in np.atleast_1d(p))
    if alpha is None:
        alpha = (2 * stencil.kernel.s2 - 1) / 2
    u = None if profile is None else profile.values
    base = WindowGrid(n, m, (0,) * n, (m,) * n)
    rule = halfspace_rule(p, t) if u is None else levelset_rule(u, p, t)
    E = LatticeSet.from_rule(base, rule)
    out = []
    for R in sizes:
        A = Strip(p, float(R), float(R) ** (1 + alpha), float(R))
        res = functional_F(E, A, stencil, g, method=method)
        out.append((float(R), res.total / R ** (n - 1), res.truncation_bound / R ** (n - 1)))
    return out
