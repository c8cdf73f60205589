"""Experiment configuration (TOML) with strict validation.

Layout::

    format_version = 1
    seed = 0
    output_dir = "out"

    [kernel]      kind, dim, s1, s2, delta, kappa1, kappa2, kappa3, table, rcut, rule
    [grid]        m
    [forcing]     kind = "cosine" | "zero" | "csv", amplitude, path
    [solver]      p, tol, rel_tol, max_iter, checkpoint_every, method, seed, amplitude_cap
    [experiment]  kind plus kind-specific keys (see EXPERIMENT_KEYS)

Unknown keys anywhere are rejected with their key path.
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
import sys

import numpy as np

from .errors import ValidationError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

FORMAT_VERSION = 1
OUTPUT_ENV = "PLANELIKE_OUTPUT_DIR"

TOP_KEYS = {"format_version", "seed", "output_dir", "kernel", "grid", "forcing", "solver", "experiment"}
KERNEL_KEYS = {"kind", "dim", "s1", "s2", "delta", "kappa1", "kappa2", "kappa3", "table", "rcut", "rule"}
GRID_KEYS = {"m"}
FORCING_KEYS = {"kind", "amplitude", "path"}
SOLVER_KEYS = {"p", "tol", "rel_tol", "max_iter", "checkpoint_every", "method", "seed", "amplitude_cap"}
EXPERIMENT_KEYS = {
    "validate-kernel": {"sample_count"},
    "solve-cell": set(),
    "plateau": {"exterior", "p", "t", "path", "omega_lo", "omega_hi", "functional", "window_periods"},
    "levelsets": {"count", "periods", "radii"},
    "stable-norm": {"directions", "sizes", "richardson", "fine_m"},
    "gamma": {"polygon", "epsilons", "omega_lo", "omega_hi"},
    "scan-perimeter": {"mode", "radii", "sizes"},
    "check": {"criteria"},
}
KINDS = ("K1", "K2", "K3", "tabulated")

DEFAULTS = {
    "format_version": FORMAT_VERSION,
    "seed": 0,
    "output_dir": "planelike_out",
    "grid": {"m": 64},
    "forcing": {"kind": "zero", "amplitude": 0.0},
    "solver": {"rel_tol": 1e-8, "max_iter": 200_000, "checkpoint_every": 1000, "method": "lp", "seed": 0},
    "experiment": {"kind": "check"},
}


def _err(path, msg):
    return ValidationError(f"{path}: {msg}")


def _check_keys(table, allowed, path):
    if not isinstance(table, dict):
        raise _err(path, "must be a table")
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise _err(f"{path}.{extra[0]}" if path else extra[0], "unknown key")


def _num(table, key, path, lo=None, hi=None, open_lo=False, open_hi=False, integer=False):
    if key not in table:
        return
    v = table[key]
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if not ok or isinstance(v, bool):
        raise _err(f"{path}.{key}", f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    bad_lo = lo is not None and (v < lo or (open_lo and v == lo))
    bad_hi = hi is not None and (v > hi or (open_hi and v == hi))
    if bad_lo or bad_hi:
        if lo is not None and hi is not None:
            iv = f"{'(' if open_lo else '['}{_frac(lo)}, {_frac(hi)}{')' if open_hi else ']'}"
            raise _err(f"{path}.{key}", f"must lie in {iv}, got {v}")
        if bad_lo:
            raise _err(f"{path}.{key}", f"must be {'>' if open_lo else '>='} {lo}, got {v}")
        raise _err(f"{path}.{key}", f"must be {'<' if open_hi else '<='} {hi}, got {v}")


def _frac(x):
    return "1/2" if x == 0.5 else f"{x:g}"


def validate(cfg: dict) -> dict:
    """Check types, ranges and key names; returns a copy with defaults filled."""
    _check_keys(cfg, TOP_KEYS, "")
    out = copy.deepcopy(DEFAULTS)
    for k, v in cfg.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k].update(v)
        else:
            out[k] = v
    if out["format_version"] != FORMAT_VERSION:
        raise _err("format_version", f"unsupported version {out['format_version']!r} (expected {FORMAT_VERSION})")
    _num(out, "seed", "", lo=0, integer=True)
    if "kernel" not in out:
        raise _err("kernel", "missing required table")
    ker = out["kernel"]
    _check_keys(ker, KERNEL_KEYS, "kernel")
    if ker.get("kind") not in KINDS:
        raise _err("kernel.kind", f"must be one of {', '.join(KINDS)}, got {ker.get('kind')!r}")
    if ker.get("dim") not in (1, 2):
        raise _err("kernel.dim", f"must be 1 or 2, got {ker.get('dim')!r}")
    _num(ker, "s1", "kernel", 0, 0.5, True, True)
    _num(ker, "s2", "kernel", 0.5, 1, True, True)
    for k in ("delta", "kappa1", "kappa2", "kappa3", "rcut"):
        _num(ker, k, "kernel", 0, None, True)
    if ker.get("rule", "cell") not in ("cell", "midpoint"):
        raise _err("kernel.rule", "must be 'cell' or 'midpoint'")
    if ker["kind"] == "tabulated" and "table" not in ker:
        raise _err("kernel.table", "tabulated kernels need a CSV path")
    _check_keys(out["grid"], GRID_KEYS, "grid")
    _num(out["grid"], "m", "grid", 8, None, integer=True)
    fo = out["forcing"]
    _check_keys(fo, FORCING_KEYS, "forcing")
    if fo.get("kind") not in ("cosine", "zero", "csv"):
        raise _err("forcing.kind", "must be 'cosine', 'zero' or 'csv'")
    _num(fo, "amplitude", "forcing", 0)
    if fo["kind"] == "csv" and "path" not in fo:
        raise _err("forcing.path", "csv forcing needs a path")
    so = out["solver"]
    _check_keys(so, SOLVER_KEYS, "solver")
    for k in ("tol", "rel_tol", "amplitude_cap"):
        _num(so, k, "solver", 0, None, True)
    for k in ("max_iter", "checkpoint_every"):
        _num(so, k, "solver", 1, None, integer=True)
    _num(so, "seed", "solver", 0, integer=True)
    if so.get("method") not in ("lp", "pdhg"):
        raise _err("solver.method", "must be 'lp' or 'pdhg'")
    if "p" in so:
        p = so["p"]
        if not isinstance(p, list) or len(p) != ker["dim"] or not all(isinstance(v, int) and not isinstance(v, bool) for v in p):
            raise _err("solver.p", f"must be a list of {ker['dim']} integers")
    ex = out["experiment"]
    if not isinstance(ex, dict) or ex.get("kind") not in EXPERIMENT_KEYS:
        raise _err("experiment.kind", f"must be one of {', '.join(EXPERIMENT_KEYS)}")
    _check_keys(ex, EXPERIMENT_KEYS[ex["kind"]] | {"kind"}, "experiment")
    return out


def load(path) -> dict:
    """Read and validate a TOML config file."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    cfg = validate(raw)
    base = os.path.dirname(os.path.abspath(path))
    for tbl, key in (("kernel", "table"), ("forcing", "path")):
        v = cfg.get(tbl, {}).get(key)
        if v and not os.path.isabs(v):
            cfg[tbl][key] = os.path.join(base, v)
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def output_dir(cfg: dict, override: str | None = None) -> str:
    return override or os.environ.get(OUTPUT_ENV) or cfg.get("output_dir", DEFAULTS["output_dir"])


# -- builders ---------------------------------------------------------------------------

def build_kernel(cfg: dict):
    from .kernel import KernelSpec
    ker = dict(cfg["kernel"])
    kw = {k: ker[k] for k in ("s1", "s2", "delta", "kappa1", "kappa2", "kappa3") if k in ker}
    if ker["kind"] == "tabulated":
        data = np.loadtxt(ker["table"], delimiter=",", comments="#", ndmin=2)
        kw["table_r"] = tuple(data[:, 0])
        kw["table_k"] = tuple(data[:, 1])
    return KernelSpec(ker["kind"], dim=ker["dim"], **kw)


def build_stencil(cfg: dict, m: int | None = None):
    from .lattice import build_stencil as _bs
    ker = cfg["kernel"]
    return _bs(build_kernel(cfg), int(m or cfg["grid"]["m"]), ker.get("rcut"), ker.get("rule", "cell"))


def build_forcing(cfg: dict, m: int | None = None):
    from .energy import ForcingField
    fo = cfg["forcing"]
    dim = cfg["kernel"]["dim"]
    m = int(m or cfg["grid"]["m"])
    if fo["kind"] == "zero":
        return ForcingField.zero(dim, m)
    if fo["kind"] == "cosine":
        return ForcingField.cosine(dim, m, float(fo.get("amplitude", 0.0)))
    vals = np.loadtxt(fo["path"], delimiter=",", comments="#")
    return ForcingField.from_values(vals.reshape((m,) * dim))


def build_solver_options(cfg: dict):
    from .cellsolver import SolverOptions
    so = cfg["solver"]
    kw = {k: so[k] for k in ("tol", "rel_tol", "max_iter", "checkpoint_every", "method", "seed", "amplitude_cap")
          if k in so}
    return SolverOptions(**kw)
