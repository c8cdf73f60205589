"""Acceptance criteria 1-13 as callable checks.

Each runner returns a :class:`CriterionResult` with the measured values and
any tabular artifacts.  A :class:`Context` caches solved cell problems within
one run; the determinism criterion replays every other criterion with a fresh
context and compares the serialized artifacts byte for byte.
"""
from __future__ import annotations

import io
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernel as K
from .cellsolver import PeriodicProfile, el_residual, solve_cell_problem
from .energy import (ForcingField, LatticeSet, check_cube_bound, energy_at_zero, halfspace_rule,
                     levelset_rule, empty_rule)
from .geometry import (OMEGA, coarea_check, density_estimates, extract_level_sets, oscillation,
                       planelike_report)
from .lattice import Box, TorusGrid, WindowGrid, build_stencil
from .plateau import brute_force_plateau, classA_window_check, solve_plateau, unit_boxes
from .stablenorm import (convexity_probe, gamma_limsup_experiment, isoperimetric_scan, large_domain_scan,
                         phi_direction_sweep, richardson_h, stable_norm_estimate)

ORACLE_2D = None   # filled lazily


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    measured: dict
    detail: str = ""
    artifacts: dict = field(default_factory=dict)   # filename -> list of row dicts
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.id:2d} {self.name}: {self.detail}"

    def to_dict(self) -> dict:
        return {"id": self.id, "name": self.name, "passed": self.passed, "measured": _plain(self.measured),
                "detail": self.detail}


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


class Context:
    """Per-run cache of cell solutions keyed by (dim, m, p, amplitude)."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._solves = {}

    def kernel(self, dim):
        return K.KernelSpec("K1", dim=dim)

    def forcing(self, dim, m, amp):
        return ForcingField.cosine(dim, m, amp) if amp else None

    def solve(self, dim, m, p, amp):
        key = (dim, m, tuple(p), amp)
        if key not in self._solves:
            st = build_stencil(self.kernel(dim), m)
            self._solves[key] = solve_cell_problem(p, stencil=st, g=self.forcing(dim, m, amp))
        return self._solves[key]


def _oracle2():
    global ORACLE_2D
    if ORACLE_2D is None:
        ORACLE_2D = K.halfspace_phi_oracle(K.KernelSpec("K1", dim=2))
    return ORACLE_2D


# -- 1 ------------------------------------------------------------------------------------

def crit_admissibility(ctx: Context) -> CriterionResult:
    specs = {"K1 n=1": K.KernelSpec("K1", dim=1), "K1 n=2": K.KernelSpec("K1", dim=2),
             "K3 n=1": K.KernelSpec("K3", dim=1, delta=0.5), "K3 n=2": K.KernelSpec("K3", dim=2, delta=0.5)}
    ok = {}
    for name, s in specs.items():
        ok[name] = K.validate_assumptions(s, sample_count=10_000).admissible
    fm = K.first_moment(specs["K1 n=1"])
    rel = abs(fm - 4.0) / 4.0
    passed = all(ok.values()) and rel <= 1e-6
    return CriterionResult(1, "kernel admissibility", passed, {"admissible": ok, "first_moment": fm, "rel_err": rel},
                           f"all admissible={all(ok.values())}, first_moment={fm:.10g} (rel err {rel:.1e})")


# -- 2 ------------------------------------------------------------------------------------

def _random_profile(rng, shape):
    kind = rng.integers(3)
    if kind == 0:
        u = rng.standard_normal(shape)
    elif kind == 1:
        u = rng.uniform(-1, 1, shape) * rng.uniform(0.1, 5)
    else:
        u = np.zeros(shape)
        idx = tuple(rng.integers(0, s, 5) for s in shape)
        u[idx] = rng.standard_normal(5) * 3
    return u - u.mean()


def crit_coarea(ctx: Context, count: int = 50) -> CriterionResult:
    worst = {}
    rows = []
    for dim, m in ((1, 64), (2, 24)):
        rng = np.random.default_rng(ctx.seed + 100 + dim)
        st = build_stencil(ctx.kernel(dim), m)
        w = 0.0
        for i in range(count):
            u = _random_profile(rng, (m,) * dim)
            p = tuple(int(v) for v in rng.integers(-3, 4, dim))
            d = coarea_check(u, p, st)
            rows.append({"dim": dim, "sample": i, "p": " ".join(map(str, p)), "defect": d})
            w = max(w, d)
        worst[dim] = w
    passed = all(v <= 1e-12 for v in worst.values())
    return CriterionResult(2, "discrete coarea identity", passed, {"worst_defect": worst},
                           "worst defect " + ", ".join(f"{d}D {v:.2e}" for d, v in worst.items()),
                           {"coarea.csv": rows})


# -- 3 ------------------------------------------------------------------------------------

def crit_el(ctx: Context) -> CriterionResult:
    cases = [(1, 64, (1,)), (2, 48, (1, 0)), (2, 48, (1, 1))]
    rows = []
    ok = True
    for dim, m, p in cases:
        u, z, rep = ctx.solve(dim, m, p, 0.05)
        good = rep.converged and rep.el_residual <= rep.tol and abs(rep.gap) <= rep.tol and rep.iterations <= 200_000
        rows.append({"dim": dim, "m": m, "p": " ".join(map(str, p)), "forcing": "cosine", "energy": rep.primal_energy,
                     "E_p(0)": rep.energy_at_zero, "el_residual": rep.el_residual, "gap": rep.gap, "tol": rep.tol,
                     "iterations": rep.iterations, "status": rep.status})
        ok &= good
        u0, z0, rep0 = ctx.solve(dim, m, p, 0.0)
        good0 = (not np.any(u0.values)) and abs(rep0.primal_energy - rep0.energy_at_zero) <= 1e-10 * max(1, rep0.energy_at_zero) \
            and rep0.el_residual <= 1e-10
        rows.append({"dim": dim, "m": m, "p": " ".join(map(str, p)), "forcing": "zero", "energy": rep0.primal_energy,
                     "E_p(0)": rep0.energy_at_zero, "el_residual": rep0.el_residual, "gap": rep0.gap,
                     "tol": rep0.tol, "iterations": rep0.iterations, "status": rep0.status})
        ok &= good0
    worst = max(max(r["el_residual"], abs(r["gap"])) / r["tol"] for r in rows)
    return CriterionResult(3, "EL certification", bool(ok), {"rows": rows, "worst_over_tol": worst},
                           f"max(residual, gap)/tol = {worst:.3g} over {len(rows)} solves", {"el.csv": rows})


# -- 4 ------------------------------------------------------------------------------------

def crit_classA(ctx: Context, instances: int = 200) -> CriterionResult:
    m = 64
    u, z, rep = ctx.solve(1, m, (1,), 0.05)
    st = build_stencil(ctx.kernel(1), m)
    g = ctx.forcing(1, m, 0.05)
    fam = extract_level_sets(u)
    win = WindowGrid(1, m, (-m,), (6 * m,))
    worst = -math.inf
    low = math.inf
    for t in fam.tp_thresholds():
        E = LatticeSet(win, u.v_on(win) > t, levelset_rule(u.values, u.p, t))
        chk = classA_window_check(E, unit_boxes(0, 5), st, g)
        worst = max(worst, chk.worst_gap)
        low = min(low, chk.min_gap)
    gap_ok = worst <= 10 * rep.tol and low >= -10 * rep.tol
    # oracle agreement on small random instances
    rng = np.random.default_rng(ctx.seed + 4)
    mism = 0
    rows = []
    for i in range(instances):
        dim = 1 if i % 2 == 0 else 2
        mm = 8
        st_i = build_stencil(ctx.kernel(dim), mm)
        if dim == 1:
            a = int(rng.integers(0, mm))
            nf = int(rng.integers(1, 13))
            om = Box((a / mm,), ((a + nf) / mm,))
        else:
            a, b = rng.integers(0, mm, 2)
            w1 = int(rng.integers(1, 5))
            w2 = int(rng.integers(1, 12 // w1 + 1))
            om = Box((a / mm, b / mm), ((a + w1) / mm, (b + w2) / mm))
        lo, hi = om.cell_range(mm)
        wv = WindowGrid(dim, mm, lo, hi).grow(st_i.reach + 2)
        ext = LatticeSet(wv, rng.random(wv.shape) < rng.uniform(0.2, 0.8), empty_rule() if rng.random() < .5 else
                         halfspace_rule((1,) * dim, 0.3))
        g_i = ForcingField.from_values(rng.standard_normal((mm,) * dim) * rng.uniform(0, 2))
        fn = "J" if rng.random() < 0.7 else "F"
        r1 = solve_plateau(ext, om, st_i, g_i, fn)
        r2 = brute_force_plateau(ext, om, st_i, g_i, fn)
        same = r1.optimum == r2.optimum
        mism += not same
        rows.append({"instance": i, "dim": dim, "free": r1.n_free, "functional": fn, "flow": r1.optimum,
                     "brute": r2.optimum, "equal": same})
    passed = gap_ok and mism == 0
    return CriterionResult(4, "class-A / plateau oracle", passed,
                           {"worst_gap": worst, "min_gap": low, "tol": rep.tol, "mismatches": mism},
                           f"max gap {worst:.2e} (10 tol = {10 * rep.tol:.1e}); flow vs brute force mismatches {mism}/{instances}",
                           {"plateau_oracle.csv": rows})


# -- 5 ------------------------------------------------------------------------------------

def _random_set(rng, win, kind):
    x = win.centers()
    if kind == 0:
        return rng.random(win.shape) < rng.uniform(0.05, 0.95)
    if kind == 1:
        q = rng.standard_normal(win.dim)
        return np.tensordot(q, x - x.mean(axis=tuple(range(1, x.ndim)), keepdims=True), axes=1) > rng.normal() * 0.3
    if kind == 2:
        c = np.array([rng.uniform(lo, hi) for lo, hi in zip(np.array(win.lo) / win.m, np.array(win.hi) / win.m)])
        r = rng.uniform(0.05, 0.8)
        return ((x - c.reshape((-1,) + (1,) * win.dim)) ** 2).sum(0) < r * r
    k = int(rng.integers(1, 5))
    return (np.floor(x * k).astype(int).sum(0) % 2) == 0


def crit_cube(ctx: Context, count: int = 1000) -> CriterionResult:
    res = {}
    rows = []
    for dim, m in ((1, 32), (2, 16)):
        rng = np.random.default_rng(ctx.seed + 50 + dim)
        kern = ctx.kernel(dim)
        st = build_stencil(kern, m)
        g = ForcingField.cosine(dim, m, kern.kappa3 / 4)
        bad = 0
        worst = math.inf
        for i in range(count):
            k = tuple(int(v) for v in rng.integers(-2, 3, dim))
            win = WindowGrid(dim, m, tuple(v * m for v in k), tuple((v + 1) * m for v in k))
            F = LatticeSet(win, _random_set(rng, win, i % 4))
            cb = check_cube_bound(F, k, st, g)
            bad += not cb.passed
            worst = min(worst, cb.margin)
        res[dim] = {"violations": bad, "worst_margin": worst}
        rows.append({"dim": dim, "sets": count, "violations": bad, "worst_margin": worst})
    passed = all(v["violations"] == 0 for v in res.values())
    return CriterionResult(5, "per-cube positivity", passed, res,
                           ", ".join(f"{d}D violations {v['violations']}/{count}" for d, v in res.items()),
                           {"cube_bound.csv": rows})


# -- 6 ------------------------------------------------------------------------------------

def crit_stable_norm(ctx: Context) -> CriterionResult:
    rows = []
    out = {}
    sizes = (4, 8, 16)
    e1 = stable_norm_estimate((1,), build_stencil(ctx.kernel(1), 64), sizes=sizes)
    out["1D"] = (e1.extrapolated, 2.0)
    rows += [dict(r, case="1D m=64") for r in e1.rows()]
    e2 = stable_norm_estimate((1, 0), build_stencil(ctx.kernel(2), 32), sizes=sizes)
    out["2D p=(1,0)"] = (e2.extrapolated, _oracle2())
    rows += [dict(r, case="2D m=32") for r in e2.rows()]
    s1 = ctx.kernel(2).s1
    ec = stable_norm_estimate((1, 1), build_stencil(ctx.kernel(2), 64), sizes=sizes)
    ef = stable_norm_estimate((1, 1), build_stencil(ctx.kernel(2), 128), sizes=sizes)
    rich = richardson_h(ec.extrapolated, ef.extrapolated, 1 - 2 * s1)
    out["2D p=(1,1)"] = (rich, _oracle2())
    out["2D p=(1,1) raw m=128"] = (ef.extrapolated, _oracle2())
    rows += [dict(r, case="2D m=64") for r in ec.rows()] + [dict(r, case="2D m=128") for r in ef.rows()]
    rel = {k: abs(a - b) / b for k, (a, b) in out.items()}
    passed = all(v <= 0.02 for k, v in rel.items() if "raw" not in k)
    return CriterionResult(6, "stable-norm oracle (g=0)", passed, {"estimates": out, "rel_err": rel},
                           ", ".join(f"{k} {v:.2%}" for k, v in rel.items()), {"stable_norm.csv": rows})


# -- 7 ------------------------------------------------------------------------------------

def crit_planelike(ctx: Context) -> CriterionResult:
    m = 48
    Ms = {}
    rows = []
    finite = True
    for p in ((1, 0), (1, 1), (2, 1)):
        u, _, _ = ctx.solve(2, m, p, 0.05)
        rep = planelike_report(u)
        finite &= bool(rep.rows) and all(math.isfinite(r[1]) for r in rep.rows)
        Ms[p] = rep.M
        rows += rep.to_rows()
    ratio = max(Ms.values()) / min(Ms.values())
    osc = {}
    for k in (1, 2, 4):
        u, _, _ = ctx.solve(2, m, (k, 0), 0.05)
        osc[k] = oscillation(u)[0] / k
    var = max(osc.values()) / min(osc.values()) - 1
    passed = finite and ratio <= 3 and var <= 0.2
    return CriterionResult(7, "planelike / oscillation", passed,
                           {"M": {str(k): v for k, v in Ms.items()}, "M_ratio": ratio, "osc_over_p": osc, "osc_var": var},
                           f"M finite={finite}, max/min M={ratio:.3f}, osc/|p| variation {var:.1%}", {"planelike.csv": rows})


# -- 8 ------------------------------------------------------------------------------------

def crit_density(ctx: Context) -> CriterionResult:
    p = (1, 1)
    res = {}
    rows = []
    for m in (64, 128):
        u, _, _ = ctx.solve(2, m, p, 0.05)
        fam = extract_level_sets(u)
        ts = fam.tp_thresholds()
        t = float(np.median(ts))
        win = WindowGrid(2, m, (-m, -m), (2 * m, 2 * m))
        E = LatticeSet(win, u.v_on(win) > t, levelset_rule(u.values, p, t))
        h = 1.0 / m
        d = density_estimates(E, [4 * h, 8 * h, 16 * h], max_points=256)
        res[m] = (d.min_ratio, d.max_ratio)
        for r, (lo, hi) in d.per_radius.items():
            rows.append({"m": m, "r_over_h": round(r * m), "min_ratio": lo, "max_ratio": hi})
    (a0, a1), (b0, b1) = res[64], res[128]
    bounds = all(lo >= 0.1 and hi <= OMEGA[2] - 0.1 for lo, hi in res.values())
    stab = max(abs(b0 - a0) / a0, abs(b1 - a1) / a1)
    passed = bounds and stab <= 0.25
    return CriterionResult(8, "density estimates", passed, {"ratios": res, "stability": stab},
                           f"m=64 [{a0:.3f}, {a1:.3f}], m=128 [{b0:.3f}, {b1:.3f}], change {stab:.1%}",
                           {"density.csv": rows})


# -- 9 ------------------------------------------------------------------------------------

def crit_isoperimetric(ctx: Context) -> CriterionResult:
    kern = ctx.kernel(2)
    m = 128
    small = [4.0 / m * 2 ** (k / 2) for k in range(6)]
    small = [r for r in small if r <= kern.delta / 8 + 1e-12]
    s = isoperimetric_scan(kern, small, m)
    big = [4 * kern.delta * 2 ** (k / 2) for k in range(4)]
    b = isoperimetric_scan(kern, big, 8)
    s_small, s_big = s.slope(), b.slope()
    passed = abs(s_small - 1.5) <= 0.15 and abs(s_big - 1.0) <= 0.15
    rows = [{"regime": "small", "m": m, "r": r, "P_K": v} for r, v in zip(s.radii, s.values)] + \
           [{"regime": "large", "m": 8, "r": r, "P_K": v} for r, v in zip(b.radii, b.values)]
    return CriterionResult(9, "isoperimetric scaling", passed, {"small_slope": s_small, "large_slope": s_big},
                           f"small-r slope {s_small:.3f} (1.5 +- 0.15), large-r slope {s_big:.3f} (1 +- 0.15)",
                           {"isoperimetric.csv": rows})


# -- 10 -----------------------------------------------------------------------------------

def crit_large_domain(ctx: Context) -> CriterionResult:
    d2 = large_domain_scan(ctx.kernel(2), [4, 8, 16], 8)
    last = abs(d2.values[-1] - d2.values[-2]) / d2.values[-2]
    d1 = large_domain_scan(ctx.kernel(1), [3, 4, 8, 16], 32)
    dev = max(abs(v - 4.0) / 4.0 for v in d1.values)
    passed = last <= 0.25 and dev <= 1e-6
    rows = [{"dim": 2, "R": R, "ratio": v} for R, v in zip(d2.radii, d2.values)] + \
           [{"dim": 1, "R": R, "ratio": v} for R, v in zip(d1.radii, d1.values)]
    return CriterionResult(10, "large-domain scaling", passed, {"ratios_2d": d2.values, "last_two_change": last,
                                                               "ratios_1d": d1.values, "dev_1d": dev},
                           f"2D last-two change {last:.1%}, 1D max deviation from 4: {dev:.1e}", {"large_domain.csv": rows})


# -- 11 -----------------------------------------------------------------------------------

def crit_gamma(ctx: Context) -> CriterionResult:
    m = 16
    st = build_stencil(ctx.kernel(2), m)
    dirs = [(1, 0), (0, 1), (-1, 0), (0, -1)]
    sq = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    om = Box((-0.75, -0.75), (0.75, 0.75))
    eps = [1 / 4, 1 / 8, 1 / 16]
    zero = {p: (PeriodicProfile(TorusGrid(2, m), np.zeros((m, m)), p), 0.0) for p in dirs}
    G0 = gamma_limsup_experiment(sq, eps, zero, st, None, om, {p: _oracle2() for p in dirs})
    g = ctx.forcing(2, m, 0.05)
    fam, phi = {}, {}
    for p in dirs:
        u, _, _ = ctx.solve(2, m, p, 0.05)
        e = stable_norm_estimate(p, st, u, g)
        fam[p] = (u, e.t)
        phi[p] = e.extrapolated
    G1 = gamma_limsup_experiment(sq, eps, fam, st, g, om, phi)
    dec = all(b < a for a, b in zip(G0.errors, G0.errors[1:]))
    passed = G0.errors[-1] <= 0.10 and dec and G1.errors[-1] <= 0.15
    rows = [dict(r, forcing="zero") for r in G0.rows()] + [dict(r, forcing="cosine") for r in G1.rows()]
    return CriterionResult(11, "Gamma-limsup trend", passed,
                           {"errors_zero": G0.errors, "errors_cosine": G1.errors, "target_zero": G0.target,
                            "target_cosine": G1.target},
                           f"g=0 errors {', '.join(f'{e:.2%}' for e in G0.errors)}; cosine at eps=1/16 {G1.errors[-1]:.2%}",
                           {"gamma.csv": rows})


# -- 12 -----------------------------------------------------------------------------------

def crit_convexity(ctx: Context) -> CriterionResult:
    kern = ctx.kernel(2)
    dirs = [(1, 0), (2, 1), (1, 1), (1, 2), (0, 1)]
    mc, mf = 32, 64
    phi, err, rows = {}, {}, []
    for p in dirs:
        est = {}
        for m in (mc, mf):
            u, _, _ = ctx.solve(2, m, p, 0.05)
            est[m] = stable_norm_estimate(p, build_stencil(kern, m), u, ctx.forcing(2, m, 0.05))
        axis = sum(1 for v in p if v) == 1
        if axis:
            val = est[mf].extrapolated
            e = est[mf].error_band + abs(est[mf].extrapolated - est[mc].extrapolated)
        else:
            val = richardson_h(est[mc].extrapolated, est[mf].extrapolated, 1 - 2 * kern.s1)
            e = abs(val - est[mf].extrapolated) + est[mf].error_band
        phi[p], err[p] = val, e
        rows.append({"p": " ".join(map(str, p)), "phi": val, "error": e, "coarse": est[mc].extrapolated,
                     "fine": est[mf].extrapolated})
    norms = {p: float(np.linalg.norm(p)) for p in dirs}
    conv = convexity_probe({p: norms[p] * phi[p] for p in dirs}, {p: norms[p] * err[p] for p in dirs})
    table, modulus = phi_direction_sweep(phi, err)
    # g = 0: the oracle is the same in every direction
    angles = np.deg2rad(np.arange(0, 91, 15))
    zero = [K.halfspace_phi_oracle(kern, (math.cos(a), math.sin(a))) for a in angles]
    spread = (max(zero) - min(zero)) / min(zero)
    passed = conv.violations == 0 and len(conv.triples) > 0 and spread <= 10 * K.QUAD_TOL
    return CriterionResult(12, "convexity / continuity probes", passed,
                           {"phi": {str(k): v for k, v in phi.items()}, "errors": {str(k): v for k, v in err.items()},
                            "worst_margin": conv.worst_margin, "violations": conv.violations,
                            "triples": len(conv.triples), "modulus": modulus, "zero_spread": spread},
                           f"{conv.violations} violations over {len(conv.triples)} triples (worst margin "
                           f"{conv.worst_margin:.3f}); continuity modulus {modulus:.3g}; g=0 spread {spread:.1e}",
                           {"direction_sweep.csv": rows})


# -- 13 -----------------------------------------------------------------------------------

RUNNERS = {
    1: ("admissibility", crit_admissibility),
    2: ("coarea", crit_coarea),
    3: ("el", crit_el),
    4: ("classa", crit_classA),
    5: ("cube", crit_cube),
    6: ("stablenorm", crit_stable_norm),
    7: ("planelike", crit_planelike),
    8: ("density", crit_density),
    9: ("isoperimetric", crit_isoperimetric),
    10: ("largedomain", crit_large_domain),
    11: ("gamma", crit_gamma),
    12: ("convexity", crit_convexity),
}
NAMES = {name: i for i, (name, _) in RUNNERS.items()}
NAMES["determinism"] = 13


def resolve_ids(items) -> list:
    """Criterion ids from numbers, names or ``all``; unknown entries raise KeyError."""
    out = []
    for it in items:
        s = str(it).lower()
        if s == "all":
            out.extend(range(1, 14))
        elif s.isdigit() and 1 <= int(s) <= 13:
            out.append(int(s))
        elif s in NAMES:
            out.append(NAMES[s])
        else:
            raise KeyError(f"unknown criterion {it!r}")
    return sorted(set(out))


def serialize(results) -> dict:
    """Artifact bytes for a set of results (report JSON plus one CSV per table)."""
    blobs = {"acceptance.json": json.dumps({"format_version": 1, "criteria": [r.to_dict() for r in results]},
                                           indent=2, sort_keys=True).encode()}
    for r in results:
        for name, rows in r.artifacts.items():
            blobs[f"c{r.id:02d}_{name}"] = rows_to_csv(rows).encode()
    return blobs


def rows_to_csv(rows) -> str:
    import csv
    buf = io.StringIO()
    if not rows:
        return ""
    keys = list(rows[0].keys())
    for r in rows[1:]:
        keys += [k for k in r if k not in keys]
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def run_one(cid: int, ctx: Context) -> CriterionResult:
    name, fn = RUNNERS[cid]
    t0 = time.perf_counter()
    res = fn(ctx)
    res.seconds = time.perf_counter() - t0
    return res


def crit_determinism(ctx: Context, previous=None, ids=None) -> CriterionResult:
    """Replay criteria ``ids`` (default 1-12) twice with fresh contexts, or once
    against ``previous`` results, and compare artifacts byte for byte."""
    ids = ids or list(RUNNERS)
    if previous is None:
        previous = [run_one(i, Context(ctx.seed)) for i in ids]
    again = [run_one(i, Context(ctx.seed)) for i in ids]
    a, b = serialize(previous), serialize(again)
    diff = sorted(k for k in set(a) | set(b) if a.get(k) != b.get(k))
    return CriterionResult(13, "determinism", not diff, {"artifacts": len(a), "differing": diff},
                           f"{len(a)} artifacts compared, {len(diff)} differ" + (f": {diff}" if diff else ""))


def run_check(ids, seed: int = 0, echo=None):
    """Run the requested criteria; returns the list of results in id order."""
    ctx = Context(seed)
    results = []
    for cid in ids:
        if cid == 13:
            prev = [r for r in results if r.id in RUNNERS]
            others = [r.id for r in prev]
            res = crit_determinism(ctx, prev if others else None, others or None)
        else:
            res = run_one(cid, ctx)
        results.append(res)
        if echo:
            echo(res.line())
    return results
