"""Command line entry point: ``planelike <subcommand> ...``.

Exit codes: 0 success, 2 validation or usage error, 3 check failure,
4 resource guard.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import shutil
import sys
import tempfile
import time

import numpy as np

from . import __version__, _accel
from . import config as C
from .errors import PlanelikeError, ValidationError

log = logging.getLogger("planelike")

SUBCOMMANDS = ("validate-kernel", "solve-cell", "plateau", "levelsets", "stable-norm", "gamma",
               "scan-perimeter", "check")


class CheckFailed(Exception):
    exit_code = 3


# -- artifact staging ------------------------------------------------------------------------

class Outputs:
    """Collects artifacts in a staging directory; ``commit`` moves them into place,
    ``discard`` removes them (partial outputs never survive a failure)."""

    def __init__(self, root: str, chash: str = ""):
        self.root = root
        self.chash = chash
        os.makedirs(root, exist_ok=True)
        self.stage = tempfile.mkdtemp(prefix=".partial-", dir=root)
        self.files = []

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.stage, name)

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_versioned(obj, self.chash), fh, indent=2, sort_keys=True, default=_default)
            fh.write("\n")

    def csv(self, name, rows):
        from .acceptance import rows_to_csv
        with open(self.path(name), "w") as fh:
            fh.write(f"# format_version={C.FORMAT_VERSION} config_hash={self.chash}\n")
            fh.write(rows_to_csv(rows))

    def raw(self, name, data: bytes):
        with open(self.path(name), "wb") as fh:
            fh.write(data)

    def commit(self):
        for name in self.files:
            shutil.move(os.path.join(self.stage, name), os.path.join(self.root, name))
        shutil.rmtree(self.stage, ignore_errors=True)

    def discard(self):
        shutil.rmtree(self.stage, ignore_errors=True)


def _versioned(obj, chash=None):
    if isinstance(obj, dict) and "format_version" not in obj:
        obj = {"format_version": C.FORMAT_VERSION, **obj}
        if chash:
            obj["config_hash"] = chash
    return obj


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def _sha(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def _versions():
    import scipy
    out = {"planelike": __version__, "python": platform.python_version(), "numpy": np.__version__,
           "scipy": scipy.__version__, "backend": _accel.backend()}
    if _accel.HAS_NUMBA:
        out["numba"] = _accel.numba.__version__
    return out


# -- experiments ----------------------------------------------------------------------------

def _p(cfg, default=None):
    p = cfg["solver"].get("p", default)
    if p is None:
        p = [1] + [0] * (cfg["kernel"]["dim"] - 1)
    return tuple(int(v) for v in p)


def exp_validate_kernel(cfg, out: Outputs):
    from .kernel import default_rcut, first_moment, halfspace_phi_oracle, validate_assumptions
    kern = C.build_kernel(cfg)
    count = int(cfg["experiment"].get("sample_count", 10_000))
    rep = validate_assumptions(kern, sample_count=count)
    summary = {"kernel": kern.to_dict(), "validation": rep.to_dict()}
    if rep.admissible:
        summary["first_moment"] = first_moment(kern)
        summary["default_rcut"] = default_rcut(kern)
        summary["halfspace_phi"] = halfspace_phi_oracle(kern)
    out.json("kernel_report.json", summary)
    if not rep.admissible:
        raise CheckFailed("kernel is not admissible: " + ", ".join(c.name for c in rep.clauses if not c.passed))


def _solve(cfg, p=None, m=None):
    from .cellsolver import solve_cell_problem
    st = C.build_stencil(cfg, m)
    g = C.build_forcing(cfg, st.m)
    return st, g, solve_cell_problem(p or _p(cfg), stencil=st, g=None if g.is_zero() else g,
                                     opts=C.build_solver_options(cfg))


def exp_solve_cell(cfg, out: Outputs):
    st, g, (u, z, rep) = _solve(cfg)
    out.json("solve_report.json", rep.to_dict())
    out.csv("profile.csv", [{"cell": i, "value": float(v)} for i, v in enumerate(u.values.ravel())])
    hh = st.half
    D = st.offsets[hh]
    out.csv("calibration_default.csv", [{"offset": " ".join(map(str, D[k])), "z": float(z.default[k])}
                                        for k in range(len(hh))])
    out.csv("calibration.csv", [dict(zip(["cell"] + [f"d{j}" for j in range(st.dim)] + ["z"], r)) for r in z.to_rows()])
    out.csv("checkpoints.csv", rep.checkpoints)
    if not rep.converged:
        raise CheckFailed(f"solver did not converge (residual {rep.el_residual:.3e}, gap {rep.gap:.3e}, tol {rep.tol:.3e})")


def _read_indicator(path, window_dim):
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2).astype(np.int64)
    idx, lab = data[:, :window_dim], data[:, window_dim]
    return idx, lab.astype(bool)


def exp_plateau(cfg, out: Outputs):
    from .energy import LatticeSet, empty_rule, halfspace_rule
    from .lattice import Box, WindowGrid
    from .plateau import set_value, solve_plateau
    ex = cfg["experiment"]
    n = cfg["kernel"]["dim"]
    st = C.build_stencil(cfg)
    g = C.build_forcing(cfg, st.m)
    m = st.m
    try:
        omega = Box(tuple(ex["omega_lo"]), tuple(ex["omega_hi"]))
    except KeyError as exc:
        raise ValidationError(f"experiment.{exc.args[0]}: required for plateau") from None
    lo, hi = omega.cell_range(m)
    win = WindowGrid(n, m, lo, hi).grow(st.reach + 1)
    kind = ex.get("exterior", "halfspace")
    if kind == "halfspace":
        rule = halfspace_rule(ex.get("p", [1] + [0] * (n - 1)), float(ex.get("t", 0.0)))
        E0 = LatticeSet.from_rule(win, rule)
    elif kind == "csv":
        if "path" not in ex:
            raise ValidationError("experiment.path: csv exterior needs a path")
        idx, lab = _read_indicator(ex["path"], n)
        ind = np.zeros(win.shape, bool)
        for k, v in zip(idx, lab):
            loc = tuple(int(a - b) for a, b in zip(k, win.lo))
            if all(0 <= c < s for c, s in zip(loc, win.shape)):
                ind[loc] = v
        E0 = LatticeSet(win, ind, empty_rule())
    else:
        raise ValidationError("experiment.exterior: must be 'halfspace' or 'csv'")
    fn = ex.get("functional", "J")
    res = solve_plateau(E0, omega, st, None if g.is_zero() else g, fn)
    cand = set_value(E0, omega, st, None if g.is_zero() else g, fn)
    from .plateau import evaluate
    parts = evaluate(res.set, omega, st, None if g.is_zero() else g, fn)
    out.json("plateau.json", {"optimum": res.optimum, "parts": parts.to_dict(), "gap_to_candidate": cand - res.optimum,
                              "rounding_bound": res.rounding_bound, "free_cells": res.n_free, "functional": fn})
    idx = res.set.window.index_grid().reshape(n, -1).T
    out.csv("minimizer.csv", [dict(zip([f"k{j}" for j in range(n)] + ["inside"], (*map(int, k), int(v))))
                              for k, v in zip(idx, res.set.indicator.ravel())])


def exp_levelsets(cfg, out: Outputs):
    from .geometry import coarea_check, density_estimates, extract_level_sets, planelike_report
    from .energy import LatticeSet, levelset_rule
    from .lattice import WindowGrid
    ex = cfg["experiment"]
    st, g, (u, z, rep) = _solve(cfg)
    fam = extract_level_sets(u, count=int(ex.get("count", 17)))
    periods = int(ex.get("periods", 2))
    summary = {"p": list(u.p), "thresholds": fam.thresholds.tolist(), "in_T_p": fam.in_Tp.tolist(),
               "nested": fam.nested(), "perturbed": fam.perturbed, "degenerate": fam.degenerate,
               "coarea_defect": coarea_check(u, u.p, st), "solver_status": rep.status}
    if any(u.p):
        pr = planelike_report(u, periods, fam)
        summary.update(M=pr.M, osc_v=pr.osc_v, osc_u=pr.osc_u)
        out.csv("planelike.csv", pr.to_rows())
    radii = ex.get("radii", [4 / st.m, 8 / st.m, 16 / st.m])
    m = st.m
    win = WindowGrid(st.dim, m, (-m,) * st.dim, (2 * m,) * st.dim)
    rows = []
    for t in fam.tp_thresholds():
        E = LatticeSet(win, u.v_on(win) > t, levelset_rule(u.values, u.p, t))
        d = density_estimates(E, radii)
        for r, (lo, hi) in d.per_radius.items():
            rows.append({"t": float(t), "r": r, "min_ratio": lo, "max_ratio": hi})
    out.csv("density.csv", rows)
    out.json("levelsets.json", summary)
    if not summary["nested"] or summary["coarea_defect"] > 1e-12:
        raise CheckFailed("level-set invariants failed")


def exp_stable_norm(cfg, out: Outputs):
    from .cellsolver import PeriodicProfile
    from .lattice import TorusGrid
    from .stablenorm import richardson_h, stable_norm_estimate
    ex = cfg["experiment"]
    n = cfg["kernel"]["dim"]
    dirs = [tuple(d) for d in ex.get("directions", [[1] + [0] * (n - 1)])]
    sizes = tuple(ex.get("sizes", [4, 8, 16]))
    m = cfg["grid"]["m"]
    fine = int(ex.get("fine_m", 2 * m))
    rich = bool(ex.get("richardson", False))
    kern = C.build_kernel(cfg)
    rows, summary = [], {}
    for p in dirs:
        vals = {}
        for mm in ((m, fine) if rich else (m,)):
            st = C.build_stencil(cfg, mm)
            g = C.build_forcing(cfg, mm)
            if g.is_zero():
                e = stable_norm_estimate(p, st, sizes=sizes)
            else:
                _, _, (u, _, _) = _solve(cfg, p, mm)
                e = stable_norm_estimate(p, st, u, g, sizes=sizes)
            vals[mm] = e
            rows += [dict(r, m=mm) for r in e.rows()]
        entry = {f"m={k}": {"extrapolated": v.extrapolated, "fit": v.fit, "band": v.error_band, "t": v.t}
                 for k, v in vals.items()}
        if rich:
            entry["richardson"] = richardson_h(vals[m].extrapolated, vals[fine].extrapolated, 1 - 2 * kern.s1)
        summary[" ".join(map(str, p))] = entry
    out.csv("stable_norm.csv", rows)
    out.json("stable_norm.json", {"model": "a + b/R least squares on the last three sizes", "directions": summary})


def exp_gamma(cfg, out: Outputs):
    from .cellsolver import PeriodicProfile
    from .kernel import halfspace_phi_oracle
    from .lattice import Box, TorusGrid
    from .stablenorm import _faces, gamma_limsup_experiment, stable_norm_estimate
    ex = cfg["experiment"]
    n = cfg["kernel"]["dim"]
    poly = [tuple(v) if isinstance(v, list) else (v,) for v in ex["polygon"]]
    eps = [float(e) for e in ex.get("epsilons", [0.25, 0.125, 0.0625])]
    omega = Box(tuple(ex["omega_lo"]), tuple(ex["omega_hi"]))
    st = C.build_stencil(cfg)
    g = C.build_forcing(cfg, st.m)
    kern = st.kernel
    fam, phi = {}, {}
    for f in _faces(poly):
        p = f[0]
        if p in fam:
            continue
        if g.is_zero():
            fam[p] = (PeriodicProfile(TorusGrid(n, st.m), np.zeros((st.m,) * n), p), 0.0)
            phi[p] = halfspace_phi_oracle(kern, np.asarray(p, float))
        else:
            _, _, (u, _, _) = _solve(cfg, p)
            e = stable_norm_estimate(p, st, u, g)
            fam[p], phi[p] = (u, e.t), e.extrapolated
    G = gamma_limsup_experiment(poly, eps, fam, st, None if g.is_zero() else g, omega, phi)
    out.csv("gamma.csv", G.rows())
    out.json("gamma.json", {"target": G.target, "faces": [[list(p), L] for p, L in G.faces],
                            "phi": {" ".join(map(str, k)): v for k, v in phi.items()}, "values": G.values,
                            "rel_errors": G.errors, "symdiff": G.symdiff})


def exp_scan_perimeter(cfg, out: Outputs):
    from .stablenorm import isoperimetric_scan, large_domain_scan
    ex = cfg["experiment"]
    kern = C.build_kernel(cfg)
    m = cfg["grid"]["m"]
    mode = ex.get("mode", "isoperimetric")
    if mode == "isoperimetric":
        radii = ex.get("radii", [4 / m, 8 / m, 16 / m])
        s = isoperimetric_scan(kern, radii, m)
        out.csv("isoperimetric.csv", [{"r": r, "P_K": v, "flag": f} for r, v, f in zip(s.radii, s.values, s.flags)])
        out.json("scan.json", {"mode": mode, "slope": s.slope()})
    elif mode == "large-domain":
        sizes = ex.get("sizes", [4, 8, 16])
        s = large_domain_scan(kern, sizes, m)
        out.csv("large_domain.csv", [{"R": r, "ratio": v, "flag": f} for r, v, f in zip(s.radii, s.values, s.flags)])
        out.json("scan.json", {"mode": mode, "ratios": s.values,
                               "last_two_change": abs(s.values[-1] - s.values[-2]) / s.values[-2] if len(sizes) > 1 else None})
    else:
        raise ValidationError("experiment.mode: must be 'isoperimetric' or 'large-domain'")


def exp_check(cfg, out: Outputs, criteria=None):
    from .acceptance import resolve_ids, run_check, serialize
    items = criteria or cfg["experiment"].get("criteria", ["all"])
    try:
        ids = resolve_ids(items)
    except KeyError as exc:
        raise ValidationError(str(exc.args[0])) from None
    results = run_check(ids, seed=int(cfg.get("seed", 0)), echo=print)
    for name, blob in serialize(results).items():
        out.raw(name, blob)
    failed = [r.id for r in results if not r.passed]
    if failed:
        raise CheckFailed(f"criteria failed: {failed}")


EXPERIMENTS = {
    "validate-kernel": exp_validate_kernel,
    "solve-cell": exp_solve_cell,
    "plateau": exp_plateau,
    "levelsets": exp_levelsets,
    "stable-norm": exp_stable_norm,
    "gamma": exp_gamma,
    "scan-perimeter": exp_scan_perimeter,
    "check": exp_check,
}

DEFAULT_CHECK_CONFIG = {"kernel": {"kind": "K1", "dim": 1}, "experiment": {"kind": "check", "criteria": ["all"]}}


# -- driver -------------------------------------------------------------------------------------

def run(cfg: dict, outdir: str | None = None, kind: str | None = None, **kw) -> int:
    """Run one experiment; returns the exit code."""
    kind = kind or cfg["experiment"]["kind"]
    root = C.output_dir(cfg, outdir)
    out = Outputs(root, C.config_hash(cfg))
    t0 = time.perf_counter()
    status, message = 0, "ok"
    try:
        EXPERIMENTS[kind](cfg, out, **kw)
    except CheckFailed as exc:
        # the report itself is complete; keep it and signal the failure
        status, message = 3, str(exc)
    except BaseException:
        out.discard()
        raise
    manifest = {"experiment": kind, "config_hash": C.config_hash(cfg), "versions": _versions(),
                "wall_time": time.perf_counter() - t0, "status": status, "message": message,
                "artifacts": {}}
    out.commit()
    for name in out.files:
        manifest["artifacts"][name] = _sha(os.path.join(root, name))
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump(_versioned(manifest), fh, indent=2, sort_keys=True, default=_default)
        fh.write("\n")
    if status:
        log.error(message)
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="planelike", description="Lattice experiments for nonlocal planelike minimizers.")
    ap.add_argument("--threads", type=int, default=None, help="cap on worker threads")
    ap.add_argument("--out", default=None, help=f"output directory (overrides config and ${C.OUTPUT_ENV})")
    ap.add_argument("--backend", choices=("numba", "numpy"), default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS[:-1]:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("config", help="TOML experiment config")
    sp = sub.add_parser("check", help="run acceptance criteria")
    sp.add_argument("criteria", nargs="*", default=["all"], help="ids 1-13, names, or 'all'")
    sp.add_argument("--config", default=None)
    sp = sub.add_parser("run", help="run the experiment named in the config")
    sp.add_argument("config")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.backend:
        _accel.set_backend(args.backend)
    if args.threads:
        _accel.set_threads(args.threads)
    try:
        if args.command == "check":
            cfg = C.load(args.config) if args.config else C.validate(DEFAULT_CHECK_CONFIG)
            from .acceptance import resolve_ids
            try:
                resolve_ids(args.criteria)
            except KeyError as exc:
                ap.error(str(exc.args[0]))
            return run(cfg, args.out, "check", criteria=args.criteria)
        cfg = C.load(args.config)
        kind = cfg["experiment"]["kind"] if args.command == "run" else args.command
        if args.command != "run" and cfg["experiment"]["kind"] != kind:
            cfg["experiment"] = {"kind": kind}
        return run(cfg, args.out, kind)
    except PlanelikeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
