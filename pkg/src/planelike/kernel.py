"""Radial interaction kernels, their structural assumptions and moments.

Three model kernels are built in, all singular like ``r^{-n-2 s1}`` at the
origin:

* ``K1``: ``r^{-n-2s1}`` on ``r < sqrt(n)``, zero beyond,
* ``K2``: ``r^{-n-2s1}`` on ``r < delta``, ``exp(-r)`` beyond,
* ``K3``: ``r^{-n-2s1}`` on ``r < delta``, ``r^{-n-2s2}`` beyond,

plus ``tabulated`` radial kernels given as (radius, value) samples with
log-log interpolation between samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize

from .errors import DomainError, QuadratureError, ValidationError

KINDS = ("K1", "K2", "K3", "tabulated")
QUAD_TOL = 1e-8


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 points in 1D)."""
    return {1: 2.0, 2: 2.0 * math.pi}[n]


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of a radial kernel.

    ``kappa2`` and ``kappa3`` default to the smallest admissible values
    (``required_kappa2`` and the sampled infimum of K over ``(0, sqrt(n))``).
    ``delta`` defaults to ``sqrt(n)`` for K1 and 0.5 otherwise.
    """
    kind: str
    dim: int = 1
    s1: float = 0.25
    s2: float = 0.75
    delta: float | None = None
    kappa1: float = 1.0
    kappa2: float | None = None
    kappa3: float | None = None
    table_r: tuple = field(default=(), repr=False)
    table_k: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kernel.kind must be one of {KINDS}, got {self.kind!r}")
        if self.dim not in (1, 2):
            raise ValidationError(f"kernel.dim must be 1 or 2, got {self.dim}")
        if not 0.0 < self.s1 < 0.5:
            raise ValidationError(f"kernel.s1 must lie in (0, 1/2), got {self.s1}")
        if not 0.5 < self.s2 < 1.0:
            raise ValidationError(f"kernel.s2 must lie in (1/2, 1), got {self.s2}")
        if self.kind == "tabulated":
            r = np.asarray(self.table_r, float)
            k = np.asarray(self.table_k, float)
            if r.ndim != 1 or r.size < 2 or r.shape != k.shape:
                raise ValidationError("tabulated kernel needs matching radius/value columns (>= 2 rows)")
            if not (r[0] > 0 and np.all(np.diff(r) > 0)):
                raise ValidationError("tabulated radii must be positive and strictly increasing")
            object.__setattr__(self, "table_r", tuple(r.tolist()))
            object.__setattr__(self, "table_k", tuple(k.tolist()))
        delta = self.delta
        if delta is None:
            delta = math.sqrt(self.dim) if self.kind == "K1" else 0.5
        if not delta > 0:
            raise ValidationError(f"kernel.delta must be > 0, got {delta}")
        if self.kind == "K1" and delta > math.sqrt(self.dim) * (1 + 1e-12):
            raise ValidationError("K1 vanishes beyond sqrt(n); delta must be <= sqrt(n)")
        object.__setattr__(self, "delta", float(delta))
        # explicit constants are checked here; derived ones may come out
        # inconsistent for a bad table, which validate_assumptions reports
        given2, given3 = self.kappa2 is not None, self.kappa3 is not None
        if not given2:
            object.__setattr__(self, "kappa2", max(required_kappa2(self), self.kappa1))
        if not given3:
            object.__setattr__(self, "kappa3", sampled_kappa3(self))
        if given2 and not self.kappa1 <= self.kappa2:
            raise ValidationError(f"kernel needs kappa1 <= kappa2, got {self.kappa1} > {self.kappa2}")
        if given3 and not self.kappa3 > 0:
            raise ValidationError(f"kernel.kappa3 must be > 0, got {self.kappa3}")

    def __call__(self, r):
        return eval_kernel(self, r)

    # piecewise analytic description: (lo, hi, kind, exponent)
    @property
    def pieces(self):
        n, a = self.dim, -self.dim - 2 * self.s1
        if self.kind == "K1":
            return ((0.0, math.sqrt(n), "pow", a),)
        if self.kind == "K2":
            return ((0.0, self.delta, "pow", a), (self.delta, math.inf, "exp", 0.0))
        if self.kind == "K3":
            return ((0.0, self.delta, "pow", a), (self.delta, math.inf, "pow", -n - 2 * self.s2))
        return ()

    @property
    def support(self) -> float:
        if self.kind == "K1":
            return math.sqrt(self.dim)
        if self.kind == "tabulated":
            return self.table_r[-1]
        return math.inf

    @property
    def breakpoints(self):
        bps = {self.delta, 1.0, math.sqrt(self.dim)}
        if self.kind == "tabulated":
            bps |= {self.table_r[0], self.table_r[-1]}
        if math.isfinite(self.support):
            bps = {b for b in bps if b <= self.support}
        return tuple(sorted(bps))

    def to_dict(self) -> dict:
        d = dict(kind=self.kind, dim=self.dim, s1=self.s1, s2=self.s2, delta=self.delta,
                 kappa1=self.kappa1, kappa2=self.kappa2, kappa3=self.kappa3)
        return d


def eval_kernel(spec: KernelSpec, r):
    """K(r) for r > 0 (scalar or array). ``r <= 0`` raises DomainError."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 0)):
        raise DomainError("kernel evaluated at r <= 0 (self-interaction is never evaluated)")
    out = _eval_raw(spec, r_arr)
    return float(out) if np.ndim(r) == 0 else out


def _eval_raw(spec, r):
    n, s1 = spec.dim, spec.s1
    if spec.kind == "K1":
        return np.where(r < math.sqrt(n), r ** (-n - 2 * s1), 0.0)
    if spec.kind == "K2":
        return np.where(r < spec.delta, r ** (-n - 2 * s1), np.exp(-r))
    if spec.kind == "K3":
        return np.where(r < spec.delta, r ** (-n - 2 * s1), r ** (-n - 2 * spec.s2))
    return _eval_table(spec, r)


def _eval_table(spec, r):
    tr = np.asarray(spec.table_r)
    tk = np.asarray(spec.table_k)
    if np.any(r < tr[0] * (1 - 1e-12)):
        raise DomainError(f"tabulated kernel queried below its first radius {tr[0]} (no extrapolation)")
    rr = np.clip(r, tr[0], tr[-1])
    i = np.clip(np.searchsorted(tr, rr, side="right") - 1, 0, tr.size - 2)
    r0, r1, k0, k1 = tr[i], tr[i + 1], tk[i], tk[i + 1]
    lam = (rr - r0) / (r1 - r0)
    lin = k0 + lam * (k1 - k0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ll = np.exp(np.log(np.where(k0 > 0, k0, 1.0))
                    + np.log(rr / r0) / np.log(r1 / r0)
                    * (np.log(np.where(k1 > 0, k1, 1.0)) - np.log(np.where(k0 > 0, k0, 1.0))))
    val = np.where((k0 > 0) & (k1 > 0), ll, lin)
    # the table's last radius ends the support
    return np.where(r > tr[-1], 0.0, val)


def envelope(spec: KernelSpec, r):
    """Upper envelope ``min(r^{-n-2s1}, r^{-n-2s2})`` (without kappa2)."""
    n = spec.dim
    return np.minimum(r ** (-n - 2 * spec.s1), r ** (-n - 2 * spec.s2))


def _radial_samples(spec, count, hi=None):
    """Deterministic log-spaced radii plus both sides of every breakpoint."""
    lo = 1e-4 * min(spec.delta, 1.0)
    if spec.kind == "tabulated":
        lo = spec.table_r[0]
    if hi is None:
        hi = spec.support if math.isfinite(spec.support) else 8.0 * max(spec.delta, math.sqrt(spec.dim), 1.0)
    r = np.geomspace(lo, hi, count)
    extra = []
    for b in spec.breakpoints:
        extra += [b * (1 - 1e-12), b * (1 + 1e-12)]
    r = np.concatenate([r, [x for x in extra if lo <= x <= hi]])
    return np.unique(r)


def required_kappa2(spec: KernelSpec, count: int = 20001) -> float:
    """Smallest kappa2 making the upper envelope hold on the sample grid."""
    r = _radial_samples(spec, count)
    k = _eval_raw(spec, r)
    return _round_sig(float(np.max(k / envelope(spec, r))), up=True)


def sampled_kappa3(spec: KernelSpec, count: int = 20001) -> float:
    """Sampled infimum of K over the open interval (0, sqrt(n))."""
    rmax = math.sqrt(spec.dim) * (1 - 1e-12)
    r = _radial_samples(spec, count, hi=rmax)
    r = r[r <= rmax]
    return _round_sig(float(np.min(_eval_raw(spec, r))), up=False)


def _round_sig(x, up, digits=10):
    # samples sit 1e-12 inside breakpoints; snap to 10 significant digits, conservatively
    if x <= 0 or not math.isfinite(x):
        return x
    e = math.floor(math.log10(x)) - digits + 1
    q = x / 10.0 ** e
    q = math.ceil(q - 1e-6) if up else math.floor(q + 1e-6)
    return q * 10.0 ** e


@dataclass(frozen=True)
class ClauseResult:
    passed: bool
    worst_radius: float | None
    worst_margin: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    kernel: KernelSpec
    sample_count: int
    clauses: dict

    @property
    def admissible(self) -> bool:
        return all(c.passed for c in self.clauses.values())

    def to_dict(self):
        return {"admissible": self.admissible, "sample_count": self.sample_count,
                "clauses": {k: dict(passed=c.passed, worst_radius=c.worst_radius,
                                    worst_margin=c.worst_margin, detail=c.detail)
                            for k, c in self.clauses.items()}}


def validate_assumptions(spec: KernelSpec, sample_count: int = 10_000, rtol: float = 1e-12) -> ValidationReport:
    """Check the structural kernel bounds on a deterministic radial grid.

    Clauses: ``nonneg``; ``bounds`` (kappa1 lower bound on (0, delta) and
    kappa2 envelope); ``kappa3`` (infimum over (0, sqrt(n))); ``moment``
    (first moment finite by adaptive quadrature).
    """
    if sample_count < 100:
        raise ValidationError("sample_count must be >= 100")
    n = spec.dim
    r = _radial_samples(spec, sample_count)
    k = _eval_raw(spec, r)
    clauses = {}

    neg = np.where(k < 0)[0]
    clauses["nonneg"] = ClauseResult(neg.size == 0, float(r[neg[0]]) if neg.size else None,
                                     float(k.min()), "K(r) >= 0")

    lower = np.where(r < spec.delta, spec.kappa1 * r ** (-n - 2 * spec.s1), 0.0)
    upper = spec.kappa2 * envelope(spec, r)
    m_lo = (k - lower) / np.maximum(lower, 1e-300)
    m_up = (upper - k) / np.maximum(upper, 1e-300)
    margin = np.minimum(np.where(lower > 0, m_lo, np.inf), m_up)
    i = int(np.argmin(margin))
    clauses["bounds"] = ClauseResult(bool(margin[i] >= -rtol), float(r[i]), float(margin[i]),
                                     "kappa1 r^{-n-2s1} 1{r<delta} <= K <= kappa2 min(r^{-n-2s1}, r^{-n-2s2})")

    rmax = math.sqrt(n) * (1 - 1e-12)
    inside = r <= rmax
    j = int(np.argmin(np.where(inside, k, np.inf)))
    m3 = (k[j] - spec.kappa3) / spec.kappa3
    clauses["kappa3"] = ClauseResult(bool(m3 >= -rtol and spec.kappa3 > 0), float(r[j]), float(m3), "inf_(0,sqrt n) K >= kappa3")

    if neg.size:
        clauses["moment"] = ClauseResult(False, None, math.nan, "skipped: negative kernel")
    else:
        try:
            fm = first_moment(spec)
            clauses["moment"] = ClauseResult(bool(math.isfinite(fm)), None, fm, "first moment finite")
        except QuadratureError as exc:
            clauses["moment"] = ClauseResult(False, None, math.nan, str(exc))
    return ValidationReport(spec, sample_count, clauses)


@lru_cache(maxsize=64)
def is_admissible(spec: KernelSpec) -> bool:
    return validate_assumptions(spec, 2000).admissible


def _segments(spec, lo=0.0, hi=math.inf):
    pts = [lo] + [b for b in spec.breakpoints if lo < b < hi] + [hi]
    if spec.kind == "tabulated":
        pts = [max(p, spec.table_r[0]) for p in pts]
        pts = [min(p, spec.support) for p in pts]
        pts = sorted(set(pts))
    elif math.isfinite(spec.support):
        pts = sorted({min(p, spec.support) for p in pts})
    return [(a, b) for a, b in zip(pts[:-1], pts[1:]) if b > a]


def _radial_integral(spec, power, lo=0.0, hi=math.inf, tol=QUAD_TOL):
    """int_lo^hi r^power K(r) dr, split at kernel breakpoints."""
    total, err = 0.0, 0.0
    for a, b in _segments(spec, lo, hi):
        if a == 0.0 and spec.kind != "tabulated":
            # r^power K(r) = r^{power-n-2s1} near 0: integrate the smooth factor against that weight
            alpha = power - spec.dim - 2 * spec.s1
            f = lambda t, p=power, a_=alpha: (t ** p * _eval_raw(spec, np.float64(t)) / t ** a_) if t > 0 else 1.0
            val, e = integrate.quad(f, a, b, weight="alg", wvar=(alpha, 0.0), epsabs=0, epsrel=tol, limit=200)
        else:
            f = lambda t, p=power: t ** p * float(_eval_raw(spec, np.float64(t)))
            val, e = integrate.quad(f, a, b, epsabs=0, epsrel=tol, limit=200)
        total += val
        err += e
        if not math.isfinite(val) or e > max(1e3 * tol * abs(total), 1e-300) and e > 1e-14:
            raise QuadratureError(f"radial quadrature did not converge on [{a}, {b}] (err {e:.3g})", (a, b))
    return total, err


@dataclass(frozen=True)
class KernelMoments:
    first_moment: float
    quad_tol: float
    spec: KernelSpec

    def tail_mass(self, rcut: float) -> float:
        return tail_mass(self.spec, rcut)


def moments(spec: KernelSpec, quad_tol: float = QUAD_TOL) -> KernelMoments:
    return KernelMoments(first_moment(spec, quad_tol), quad_tol, spec)


@lru_cache(maxsize=256)
def first_moment(spec: KernelSpec, quad_tol: float = QUAD_TOL) -> float:
    """int_{R^n} |h| K(|h|) dh by adaptive quadrature."""
    val, _ = _radial_integral(spec, spec.dim, tol=quad_tol)
    return sphere_area(spec.dim) * val


@lru_cache(maxsize=1024)
def tail_mass(spec: KernelSpec, rcut: float, quad_tol: float = QUAD_TOL) -> float:
    """int_{|h| > rcut} K(|h|) dh."""
    if rcut >= spec.support:
        return 0.0
    val, _ = _radial_integral(spec, spec.dim - 1, lo=rcut, tol=quad_tol)
    return sphere_area(spec.dim) * val


def tail_moment(spec: KernelSpec, rcut: float, quad_tol: float = QUAD_TOL) -> float:
    """int_{|h| > rcut} |h| K(|h|) dh (first moment of the neglected tail)."""
    if rcut >= spec.support:
        return 0.0
    val, _ = _radial_integral(spec, spec.dim, lo=rcut, tol=quad_tol)
    return sphere_area(spec.dim) * val


def tail_envelope_bound(spec: KernelSpec, rcut: float) -> float:
    """kappa2 * int_{|h|>rcut} min(r^{-n-2s1}, r^{-n-2s2}) dh, in closed form."""
    n, a, b = spec.dim, 2 * spec.s1, 2 * spec.s2
    S = sphere_area(n)
    if rcut >= 1.0:
        return spec.kappa2 * S * rcut ** (-b) / b
    # r^{-1-2s1} on (rcut, 1), r^{-1-2s2} beyond
    return spec.kappa2 * S * ((rcut ** (-a) - 1.0) / a + 1.0 / b)


def default_rcut(spec: KernelSpec, rel: float = 1e-4) -> float:
    """Smallest radius whose tail mass is at most ``rel * first_moment``."""
    if math.isfinite(spec.support):
        return spec.support
    target = rel * first_moment(spec)
    f = lambda lr: tail_mass(spec, float(math.exp(lr))) - target
    lo = math.log(max(spec.delta, 1e-3))
    if f(lo) <= 0:
        return spec.delta
    hi = lo + 1.0
    while f(hi) > 0:
        hi += 1.0
        if hi > 30:
            raise QuadratureError("no finite cutoff radius reaches the tail target", (lo, hi))
    return float(math.exp(optimize.brentq(f, lo, hi, xtol=1e-10)))


def halfspace_phi_oracle(spec: KernelSpec, p_hat=None, quad_tol: float = QUAD_TOL) -> float:
    """Per-area perimeter of a flat halfspace, ``(1/2) int |h . p_hat| K(h) dh``.

    For ``g = 0`` this is the stable norm in every direction.
    """
    radial, _ = _radial_integral(spec, spec.dim, tol=quad_tol)
    if spec.dim == 1:
        return 0.5 * 2.0 * radial
    if p_hat is None:
        p_hat = (1.0, 0.0)
    p = np.asarray(p_hat, float)
    alpha = math.atan2(p[1], p[0])
    # |cos(theta - alpha)| is kinked at alpha +- pi/2
    kinks = sorted(((alpha + math.pi / 2) % (2 * math.pi), (alpha - math.pi / 2) % (2 * math.pi)))
    ang, _ = integrate.quad(lambda t: abs(math.cos(t - alpha)), 0.0, 2 * math.pi,
                            points=kinks, epsabs=0, epsrel=quad_tol, limit=200)
    return 0.5 * ang * radial


# -- closed-form radial antiderivatives used by the cell-averaged stencil --

def radial_antiderivative(spec: KernelSpec, j: int, rho, rcut: float = math.inf):
    """A_j(rho) = int_0^rho t^{j+n-1} K(t) dt for the truncated kernel ``K 1{t<rcut}``.

    Vectorized over ``rho``.  For j = 0 the integral diverges at 0; the
    returned value then drops the divergent constant, which is harmless
    wherever it is only used in differences.
    """
    rho = np.asarray(rho, float)
    n = spec.dim
    out = np.zeros_like(rho)
    for lo, hi, kind, e in spec.pieces:
        hi = min(hi, rcut)
        if lo >= hi:
            continue
        top = np.clip(rho, lo, hi)
        if kind == "pow":
            q = j + n - 1 + e
            F = (lambda t, q=q: np.log(np.where(t > 0, t, 1.0)) if q == -1 else
                 np.where(t > 0, t, 1.0) ** (q + 1) / (q + 1) * (t > 0))
        else:
            q = j + n - 1
            F = lambda t, q=q: -np.exp(-t) * sum(math.factorial(q) / math.factorial(q - i) * t ** (q - i)
                                                 for i in range(q + 1))
        base = 0.0 if lo == 0.0 else F(np.float64(lo))
        out += np.where(rho > lo, F(top) - base, 0.0)
    return out
