"""Lattice discretization: tori, windows, pair stencils and cube covers.

Two quadrature rules are available for the pair weights:

``"cell"`` (default)
    ``w(d) = int_{cell_0} int_{cell_d} K(|x - y|) dx dy``, the exact
    interaction of two lattice cells.  Energies of lattice sets are then exact
    integrals of the continuum functional, and flat axis-aligned interfaces
    reproduce the continuum perimeter exactly.
``"midpoint"``
    ``w(d) = h^{2n} K(|d| h)``.  Cheap, but its error near the singularity
    decays only like ``h^{1-2 s1}``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from . import kernel as _k
from .errors import AlignmentError, NonAdmissibleKernel, PreconditionError, ResourceError

MAX_OFFSETS = 10_000_000
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _as_int(x: float, what: str) -> int:
    k = round(x)
    if abs(x - k) > 1e-9 * max(1.0, abs(x)):
        raise AlignmentError(f"{what} = {x!r} is not lattice aligned")
    return int(k)


@dataclass(frozen=True)
class TorusGrid:
    """Periodic lattice on the unit cell with ``m`` cells per axis."""
    dim: int
    m: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise PreconditionError("dim must be 1 or 2")
        if self.m < 8:
            raise PreconditionError(f"torus needs m >= 8, got {self.m}")

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def shape(self):
        return (self.m,) * self.dim

    @property
    def size(self) -> int:
        return self.m ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    def centers(self):
        """Cell centres as an array of shape ``(dim, m, ..., m)``."""
        c = (np.arange(self.m) + 0.5) * self.h
        return np.array(np.meshgrid(*([c] * self.dim), indexing="ij"))


@dataclass(frozen=True)
class WindowGrid:
    """Finite axis-aligned block of lattice cells ``lo <= k < hi`` (per axis).

    Cell ``k`` occupies ``[k h, (k+1) h)`` in physical units.
    """
    dim: int
    m: int
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(int(v) for v in self.hi))
        if len(self.lo) != self.dim or len(self.hi) != self.dim:
            raise PreconditionError("window bounds must have one entry per axis")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise PreconditionError("window must be non-empty")

    @classmethod
    def from_extent(cls, m, lo, hi):
        lo = np.atleast_1d(np.asarray(lo, float))
        hi = np.atleast_1d(np.asarray(hi, float))
        klo = tuple(_as_int(v * m, "window lower bound * m") for v in lo)
        khi = tuple(_as_int(v * m, "window upper bound * m") for v in hi)
        return cls(len(klo), m, klo, khi)

    @property
    def h(self):
        return 1.0 / self.m

    @property
    def shape(self):
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def origin(self):
        """Physical coordinates of the window's lower corner."""
        return tuple(a * self.h for a in self.lo)

    def axes(self):
        return [(np.arange(a, b) + 0.5) * self.h for a, b in zip(self.lo, self.hi)]

    def centers(self):
        return np.array(np.meshgrid(*self.axes(), indexing="ij"))

    def index_grid(self):
        """Global integer cell indices, shape ``(dim, *shape)``."""
        return np.array(np.meshgrid(*[np.arange(a, b) for a, b in zip(self.lo, self.hi)], indexing="ij"))

    def grow(self, cells: int) -> "WindowGrid":
        return WindowGrid(self.dim, self.m, tuple(a - cells for a in self.lo), tuple(b + cells for b in self.hi))

    def contains(self, other: "WindowGrid") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))


@dataclass(frozen=True, eq=False)
class PairStencil:
    """Symmetric pair stencil.

    ``offsets`` lists every retained displacement (both signs) in
    lexicographic order; ``weights[i]`` belongs to ``offsets[i]``.  ``half``
    indexes the lexicographically positive half, one entry per unordered
    direction pair.
    """
    dim: int
    m: int
    offsets: np.ndarray
    weights: np.ndarray
    rcut: float
    rule: str
    tail_mass: float
    tail_moment: float
    kernel: _k.KernelSpec = field(repr=False)

    @property
    def h(self):
        return 1.0 / self.m

    @property
    def tail_bound(self) -> float:
        """Neglected kernel mass per unit volume of the first argument."""
        return self.tail_mass

    @cached_property
    def half(self):
        return _positive_half(self.offsets)

    @property
    def reach(self) -> int:
        """Largest |offset| component, in cells."""
        return int(np.abs(self.offsets).max())

    def __len__(self):
        return len(self.weights)

    def disp(self):
        """Physical displacements ``d h`` (shape (K, dim))."""
        return self.offsets * self.h


def _positive_half(offsets):
    """Mask of offsets that are lexicographically > 0."""
    first = np.zeros(len(offsets), bool)
    decided = np.zeros(len(offsets), bool)
    for j in range(offsets.shape[1]):
        col = offsets[:, j]
        first |= ~decided & (col > 0)
        decided |= col != 0
    return np.nonzero(first)[0]


@lru_cache(maxsize=32)
def build_stencil(kernel: _k.KernelSpec, m: int, rcut: float | None = None, rule: str = "cell") -> PairStencil:
    """Pair stencil for ``kernel`` on a lattice of spacing ``1/m``.

    ``rcut`` defaults to :func:`planelike.kernel.default_rcut`.  The cell
    rule integrates the kernel truncated at ``rcut`` exactly over cell pairs
    and keeps every offset whose cells come closer than ``rcut``; the
    midpoint rule keeps offsets with ``0 < |d| h <= rcut``.
    """
    if not _k.is_admissible(kernel):
        raise NonAdmissibleKernel("kernel fails validate_assumptions; refusing to build a stencil")
    h = 1.0 / m
    if rcut is None:
        rcut = _k.default_rcut(kernel)
    rcut = float(rcut)
    if rcut < 2 * h:
        raise PreconditionError(f"Rcut={rcut} must be at least 2h={2 * h}")
    if rcut < kernel.delta * (1 - 1e-12):
        raise PreconditionError(f"Rcut={rcut} must be at least delta={kernel.delta}")
    if rule == "cell" and kernel.kind == "tabulated":
        rule = "midpoint"
    if rule not in ("cell", "midpoint"):
        raise PreconditionError(f"unknown quadrature rule {rule!r}")
    n = kernel.dim
    reach = int(math.floor(rcut * m + 1e-9)) + (1 if rule == "cell" else 0)
    est = (2 * reach + 1) ** n
    if est > 4 * MAX_OFFSETS:
        raise ResourceError(f"stencil would hold ~{est} offsets (limit {MAX_OFFSETS})")
    rng = np.arange(-reach, reach + 1)
    D = np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64) if n == 1 else \
        np.stack(np.meshgrid(rng, rng, indexing="ij"), -1).reshape(-1, 2).astype(np.int64)
    D = D[np.any(D != 0, axis=1)]
    reff = min(rcut, kernel.support)
    if rule == "midpoint":
        r = np.linalg.norm(D, axis=1) * h
        D = D[r <= rcut * (1 + 1e-12)]
        w = h ** (2 * n) * _k._eval_raw(kernel, np.linalg.norm(D, axis=1) * h)
    else:
        gap = np.linalg.norm(np.maximum(np.abs(D) - 1, 0), axis=1) * h
        D = D[gap < reff]
        w = _cell_weights(kernel, m, D, reff)
    keep = w > 0
    D, w = D[keep], w[keep]
    if len(D) > MAX_OFFSETS:
        raise ResourceError(f"stencil holds {len(D)} offsets (limit {MAX_OFFSETS})")
    # lexicographic order
    order = np.lexsort(D.T[::-1])
    D, w = np.ascontiguousarray(D[order]), np.ascontiguousarray(w[order])
    D.setflags(write=False)
    w.setflags(write=False)
    return PairStencil(n, m, D, w, rcut, rule, _k.tail_mass(kernel, rcut), _k.tail_moment(kernel, rcut), kernel)


def _cell_weights(kernel, m, D, rcut):
    """Exact cell-pair weights for offsets ``D`` (any sign), using symmetry."""
    n = kernel.dim
    h = 1.0 / m
    A = np.abs(D)
    if n == 2:
        A = np.sort(A, axis=1)[:, ::-1]  # canonical d1 >= d2 >= 0
    uniq, inv = np.unique(A, axis=0, return_inverse=True)
    inv = inv.ravel()
    wu = np.zeros(len(uniq))
    chunk = 4096
    for s in range(0, len(uniq), chunk):
        wu[s:s + chunk] = _canonical_weights(kernel, h, uniq[s:s + chunk], rcut)
    return wu[inv]


def _canonical_weights(kernel, h, U, rcut):
    if kernel.dim == 1:
        d = U[:, 0].astype(float)
        A0 = lambda t: _k.radial_antiderivative(kernel, 0, t, rcut)
        A1 = lambda t: _k.radial_antiderivative(kernel, 1, t, rcut)
        y0, y1, y2 = (d - 1) * h, d * h, (d + 1) * h
        # tent: y - y0 on [y0, y1], y2 - y on [y1, y2]
        left = A1(y1) - A1(y0) - np.where(y0 > 0, y0 * (A0(y1) - A0(y0)), 0.0)
        right = y2 * (A0(y2) - A0(y1)) - (A1(y2) - A1(y1))
        return left + right
    total = np.zeros(len(U))
    d1, d2 = U[:, 0].astype(float), U[:, 1].astype(float)
    for a, b in itertools.product((-1, 0), repeat=2):
        x0, x1 = (d1 + a) * h, (d1 + a + 1) * h
        y0, y1 = (d2 + b) * h, (d2 + b + 1) * h
        # tent factor along each axis: (alpha + beta * y)
        al1, be1 = (h * (1 - d1), 1.0) if a == -1 else (h * (1 + d1), -1.0)
        al2, be2 = (h * (1 - d2), 1.0) if b == -1 else (h * (1 + d2), -1.0)
        total += _square_integral(kernel, rcut, x0, x1, y0, y1, al1, be1, al2, be2)
    return total


def _square_integral(kernel, rcut, x0, x1, y0, y1, al1, be1, al2, be2):
    """int over [x0,x1]x[y0,y1] of (al1+be1 y1)(al2+be2 y2) K(|y|) dy, vectorized.

    Polar coordinates about the origin: the radial integral is done in closed
    form, the angular one by Gauss-Legendre on pieces between the angles of
    the square's corners and of the circles where the kernel changes formula.
    Requires x0 >= 0 and the origin outside the square's interior.
    """
    B = len(x0)
    angs = [np.arctan2(yy, xx) for xx in (x0, x1) for yy in (y0, y1)]
    th_lo = np.min(angs, axis=0)
    th_hi = np.max(angs, axis=0)
    cuts = list(angs)
    radii = [b for b in kernel.breakpoints if b < rcut] + [rcut]
    for b in radii:
        if not math.isfinite(b):
            continue
        for xe in (x0, x1):
            yy = np.sqrt(np.maximum(b * b - xe * xe, 0.0))
            for sgn in (1.0, -1.0):
                ok = (b > xe) & (sgn * yy >= y0) & (sgn * yy <= y1)
                cuts.append(np.where(ok, np.arctan2(sgn * yy, xe), th_lo))
        for ye in (y0, y1):
            xx = np.sqrt(np.maximum(b * b - ye * ye, 0.0))
            ok = (b > np.abs(ye)) & (xx >= x0) & (xx <= x1)
            cuts.append(np.where(ok, np.arctan2(ye, xx), th_lo))
    C = np.sort(np.clip(np.stack(cuts, 1), th_lo[:, None], th_hi[:, None]), axis=1)
    a, b = C[:, :-1], C[:, 1:]
    half = 0.5 * (b - a)
    th = (0.5 * (a + b))[..., None] + half[..., None] * _GL_NODES  # (B, P, G)
    wq = half[..., None] * _GL_WEIGHTS
    c, s = np.cos(th), np.sin(th)
    X0, X1, Y0, Y1 = (v[:, None, None] for v in (x0, x1, y0, y1))
    with np.errstate(divide="ignore", invalid="ignore"):
        tx0 = np.where(c > 0, X0 / c, -np.inf)
        tx1 = np.where(c > 0, X1 / c, np.inf)
        ty_a = np.where(s != 0, Y0 / s, -np.inf)
        ty_b = np.where(s != 0, Y1 / s, np.inf)
    ty0 = np.where(s > 0, ty_a, np.where(s < 0, ty_b, np.where((Y0 <= 0) & (Y1 >= 0), -np.inf, np.inf)))
    ty1 = np.where(s > 0, ty_b, np.where(s < 0, ty_a, np.where((Y0 <= 0) & (Y1 >= 0), np.inf, -np.inf)))
    rin = np.maximum(np.maximum(tx0, ty0), 0.0)
    rout = np.minimum(tx1, ty1)
    rout = np.maximum(rout, rin)
    AL1, BE1 = np.broadcast_to(np.asarray(al1)[..., None, None] if np.ndim(al1) else al1, th.shape), be1
    AL2, BE2 = np.broadcast_to(np.asarray(al2)[..., None, None] if np.ndim(al2) else al2, th.shape), be2
    c0 = AL1 * AL2
    c1 = AL1 * BE2 * s + AL2 * BE1 * c
    c2 = BE1 * BE2 * c * s
    F = lambda j, r: _k.radial_antiderivative(kernel, j, r, rcut)
    pos = rin > 0
    d0 = np.where(pos, F(0, rout) - F(0, np.where(pos, rin, rout)), 0.0)
    d1 = F(1, rout) - F(1, rin)
    d2 = F(2, rout) - F(2, rin)
    integrand = c0 * d0 + c1 * d1 + c2 * d2
    return np.sum(integrand * wq, axis=(1, 2))


# -- domains and cube covers -------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned open box ``prod (lo_i, hi_i)`` in physical units."""
    lo: tuple
    hi: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in np.atleast_1d(self.lo)))
        object.__setattr__(self, "hi", tuple(float(v) for v in np.atleast_1d(self.hi)))
        if len(self.lo) != len(self.hi) or any(b < a for a, b in zip(self.lo, self.hi)):
            raise PreconditionError("box needs lo <= hi per axis")

    @property
    def dim(self):
        return len(self.lo)

    @property
    def volume(self):
        return float(np.prod(np.subtract(self.hi, self.lo)))

    def cell_range(self, m):
        """Integer cell bounds; the box must be lattice aligned."""
        lo = tuple(_as_int(v * m, "box lower bound * m") for v in self.lo)
        hi = tuple(_as_int(v * m, "box upper bound * m") for v in self.hi)
        return lo, hi

    def mask(self, window: WindowGrid):
        lo, hi = self.cell_range(window.m)
        idx = window.index_grid()
        out = np.ones(window.shape, bool)
        for j in range(window.dim):
            out &= (idx[j] >= lo[j]) & (idx[j] < hi[j])
        return out

    def bounding(self, m):
        return self.cell_range(m)


@dataclass(frozen=True)
class CubeCover:
    """Integer translates ``eps (k + Q)`` contained in a domain."""
    cubes: np.ndarray
    epsilon: float
    m: int

    @property
    def count(self):
        return len(self.cubes)

    def cells_per_side(self):
        return _as_int(self.epsilon * self.m, "epsilon * m")

    def cell_ranges(self):
        c = self.cells_per_side()
        return [(tuple(int(v) * c for v in k), tuple((int(v) + 1) * c for v in k)) for k in self.cubes]

    def mask(self, window: WindowGrid):
        """Cells of ``window`` covered by some cube."""
        out = np.zeros(window.shape, bool)
        for lo, hi in self.cell_ranges():
            sl = tuple(slice(max(a - w0, 0), max(b - w0, 0)) for a, b, w0 in zip(lo, hi, window.lo))
            out[sl] = True
        return out


@dataclass(frozen=True)
class RotatedSquare:
    """Square of side ``side`` centred at ``center`` with one axis along ``p``.

    Realized at lattice resolution: a cell belongs to it when its centre does.
    In 1D this is the interval of length ``side`` about ``center``.
    """
    center: tuple
    p: tuple
    side: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in np.atleast_1d(self.center)))
        object.__setattr__(self, "p", tuple(float(v) for v in np.atleast_1d(self.p)))

    @property
    def dim(self):
        return len(self.center)

    @property
    def volume(self):
        return float(self.side) ** self.dim

    def bounding(self, m):
        c = np.asarray(self.center)
        rad = 0.5 * self.side * (math.sqrt(2.0) if self.dim == 2 else 1.0)
        lo = tuple(int(math.floor((v - rad) * m)) - 1 for v in c)
        hi = tuple(int(math.ceil((v + rad) * m)) + 1 for v in c)
        return lo, hi

    def scaled(self, f: float) -> "RotatedSquare":
        return RotatedSquare(tuple(v * f for v in self.center), self.p, self.side * f)

    def mask(self, window: WindowGrid):
        x = window.centers()
        c = np.asarray(self.center).reshape((-1,) + (1,) * window.dim)
        y = x - c
        q = np.asarray(self.p) / np.linalg.norm(self.p)
        a = 0.5 * self.side
        along = np.tensordot(q, y, axes=1)
        if window.dim == 1:
            return np.abs(along) < a
        across = -q[1] * y[0] + q[0] * y[1]
        return (np.abs(along) < a) & (np.abs(across) < a)


def check_epsilon(epsilon: float, m: int) -> int:
    """Cells per epsilon-cube; raises AlignmentError unless eps * m is a positive integer."""
    if not epsilon > 0:
        raise AlignmentError(f"epsilon must be positive, got {epsilon}")
    c = epsilon * m
    k = round(c)
    if k < 1 or abs(c - k) > 1e-9 * max(1.0, c):
        raise AlignmentError(f"epsilon={epsilon} is not an integer multiple of h=1/{m}")
    return int(k)


def enumerate_unit_cubes(omega, epsilon: float = 1.0, m: int | None = None, window: WindowGrid | None = None) -> CubeCover:
    """All translates ``eps (k + Q)`` lying inside ``omega``.

    ``omega`` is a :class:`Box` (containment decided exactly from its
    bounds) or any domain object with ``mask(window)``; the latter keeps the
    cubes whose cells are all in the mask.
    """
    if m is None:
        m = window.m if window is not None else None
    if m is None:
        raise PreconditionError("need m or a window to check alignment")
    c = check_epsilon(epsilon, m)
    if isinstance(omega, Box):
        ranges = []
        for a, b in zip(omega.lo, omega.hi):
            klo = math.ceil(a / epsilon - 1e-9)
            khi = math.floor(b / epsilon + 1e-9) - 1
            ranges.append(range(klo, khi + 1))
        cubes = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, omega.dim)
        return CubeCover(cubes, float(epsilon), m)
    if window is None:
        raise PreconditionError("mask domains need a window")
    mask = omega.mask(window)
    n = window.dim
    lo = [math.ceil(a / c) for a in window.lo]
    hi = [math.floor(b / c) for b in window.hi]
    cubes = []
    for k in itertools.product(*[range(a, b) for a, b in zip(lo, hi)]):
        sl = tuple(slice(k[j] * c - window.lo[j], (k[j] + 1) * c - window.lo[j]) for j in range(n))
        if mask[sl].all():
            cubes.append(k)
    return CubeCover(np.array(cubes, dtype=np.int64).reshape(-1, n), float(epsilon), m)
