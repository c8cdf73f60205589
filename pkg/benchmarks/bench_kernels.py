"""Compare the numba kernels with their numpy fallbacks.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each row times one hot loop under both backends (best of ``repeat``, after a
warm-up call so JIT compilation is excluded) and checks the two agree.
"""
import argparse
import time

import numpy as np

from planelike import _accel
from planelike.energy import ForcingField, LatticeSet, cell_energy, empty_rule, perimeter
from planelike.kernel import KernelSpec
from planelike.lattice import Box, WindowGrid, build_stencil
from planelike.maxflow import build_graph, max_flow


def _best(fn, repeat):
    fn()
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases():
    rng = np.random.default_rng(0)
    st2 = build_stencil(KernelSpec("K1", dim=2), 32)
    u = rng.standard_normal((32, 32))
    u -= u.mean()
    g = ForcingField.cosine(2, 32, 0.05)
    yield "cell energy (2D m=32)", lambda: cell_energy(u, (1, 1), st2, g)

    win = WindowGrid(2, 32, (-32, -32), (64, 64))
    E = LatticeSet(win, rng.random(win.shape) < 0.5, empty_rule())
    yield "perimeter, direct (2D m=32)", lambda: perimeter(E, Box((0, 0), (1, 1)), st2, method="direct").total

    n = 4000
    t = rng.integers(0, n, 8 * n)
    h = rng.integers(0, n, 8 * n)
    keep = t != h
    graph = build_graph(n, t[keep], h[keep], rng.integers(1, 1000, keep.sum()).astype(np.int64))
    yield "max flow (4000 nodes)", lambda: max_flow(*[a.copy() for a in graph], 0, n - 1)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAS_NUMBA:
        print("numba is not installed; nothing to compare")
        return
    print(f"{'kernel':32s} {'numba [s]':>11s} {'numpy [s]':>11s} {'speed-up':>9s}  agree")
    for name, fn in cases():
        with _accel.backend_scope("numba"):
            tn, a = _best(fn, args.repeat)
        with _accel.backend_scope("numpy"):
            tp, b = _best(fn, max(1, args.repeat // 2))
        ok = np.allclose(a, b, rtol=1e-10, atol=0)
        print(f"{name:32s} {tn:11.4f} {tp:11.4f} {tp / tn:9.1f}  {ok}")


if __name__ == "__main__":
    main()
