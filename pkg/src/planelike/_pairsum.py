"""Hot pair-sum loops (numba) and their numpy twins.

Every public helper takes a ``backend`` choice from :mod:`._accel`; the numpy
versions loop over stencil offsets and vectorize over cells, the numba ones
loop over cells and offsets in a fixed order.
"""
import math

import numpy as np
from scipy import signal

from ._accel import njit, use_numba


def flat_offsets(D, shape):
    """Row-major flat displacement of each offset on a C-ordered array."""
    strides = np.cumprod((shape[1:] + (1,))[::-1])[::-1]
    return (D * np.asarray(strides, dtype=np.int64)).sum(axis=1).astype(np.int64)


# -- window perimeter parts ----------------------------------------------------

@njit
def _window_parts_nb(E, O, cells, dflat, w, is_half):
    in_in = 0.0
    in_out = 0.0
    out_in = 0.0
    total = 0.0
    for a in range(cells.shape[0]):
        i = cells[a]
        ei = E[i]
        for k in range(dflat.shape[0]):
            j = i + dflat[k]
            if E[j] == ei:
                continue
            if O[j]:
                if not is_half[k]:
                    continue
                in_in += w[k]
            elif ei:
                in_out += w[k]
            else:
                out_in += w[k]
            total += w[k]
    return in_in, in_out, out_in, total


def _window_parts_np(Eext, Oext, reach, D, w, is_half):
    shape = Eext.shape
    core = tuple(slice(reach, s - reach) for s in shape)
    Ei = Eext[core]
    Oi = Oext[core]
    parts = np.zeros(4)
    for k in range(len(w)):
        sl = tuple(slice(reach + d, s - reach + d) for d, s in zip(D[k], shape))
        Ej = Eext[sl]
        Oj = Oext[sl]
        dis = Oi & (Ej != Ei)
        ii = np.count_nonzero(dis & Oj) if is_half[k] else 0
        io = np.count_nonzero(dis & ~Oj & Ei)
        oi = np.count_nonzero(dis & ~Oj & ~Ei)
        parts += w[k] * np.array([ii, io, oi, ii + io + oi])
    return tuple(float(x) for x in parts)


def _window_parts_fft(Eext, Oext, reach, D, w):
    n = Eext.ndim
    W = np.zeros((2 * reach + 1,) * n)
    W[tuple((D + reach).T)] = w
    E = Eext.astype(float)
    O = Oext.astype(float)
    b1 = O * (1 - E)          # Omega & E^c
    b2 = (1 - O) * (1 - E)    # Omega^c & E^c
    c1 = (1 - O) * E          # Omega^c & E
    a = O * E
    in_in = float(np.sum(a * signal.fftconvolve(b1, W, mode="same")))
    in_out = float(np.sum(a * signal.fftconvolve(b2, W, mode="same")))
    out_in = float(np.sum(b1 * signal.fftconvolve(c1, W, mode="same")))
    return in_in, in_out, out_in, in_in + in_out + out_in


def window_parts(Eext, Oext, reach, D, w, is_half, method="auto"):
    """Three-part perimeter on an extended window.

    ``Eext``/``Oext`` are boolean arrays over a window that pads every cell of
    ``Oext`` by ``reach`` cells.  Returns ``(in_in, in_out, out_in, total)``.
    """
    n_omega = int(np.count_nonzero(Oext))
    if method == "auto":
        work = n_omega * len(w)
        method = "direct" if work <= (4e8 if use_numba() else 3e7) else "fft"
    if method == "fft":
        return _window_parts_fft(Eext, Oext, reach, D, w)
    if use_numba():
        shape = Eext.shape
        cells = np.flatnonzero(Oext).astype(np.int64)
        return _window_parts_nb(np.ascontiguousarray(Eext).ravel().view(np.uint8),
                                np.ascontiguousarray(Oext).ravel().view(np.uint8),
                                cells, flat_offsets(D, shape), w, is_half)
    return _window_parts_np(Eext, Oext, reach, D, w, is_half)


# -- disjoint-set interaction -------------------------------------------------

@njit
def _interaction_nb(A, B, cells, dflat, w):
    tot = 0.0
    for a in range(cells.shape[0]):
        i = cells[a]
        for k in range(dflat.shape[0]):
            j = i + dflat[k]
            if (A[i] and B[j]) or (B[i] and A[j]):
                tot += w[k]
    return tot


def interaction_sum(Aext, Bext, reach, Dh, wh):
    """Sum of w over unordered pairs with one cell in A and the other in B.

    Loops over positive half-offsets only, so the result is bitwise symmetric
    in (A, B).
    """
    if use_numba():
        U = Aext | Bext
        cells = np.flatnonzero(U).astype(np.int64)
        return _interaction_nb(Aext.ravel().view(np.uint8), Bext.ravel().view(np.uint8),
                               cells, flat_offsets(Dh, Aext.shape), wh)
    shape = Aext.shape
    core = tuple(slice(reach, s - reach) for s in shape)
    Ai, Bi = Aext[core], Bext[core]
    tot = 0.0
    for k in range(len(wh)):
        sl = tuple(slice(reach + d, s - reach + d) for d, s in zip(Dh[k], shape))
        Aj, Bj = Aext[sl], Bext[sl]
        tot += wh[k] * np.count_nonzero((Ai & Bj) | (Bi & Aj))
    return float(tot)


# -- torus sums for the cell problem --------------------------------------------

@njit
def _torus_abs_nb(u, m, n, Dh, wh, c):
    # sum_i sum_k w_k |u_i - u_{i+d_k} - c_k|, Neumaier-compensated
    tot = 0.0
    comp = 0.0
    nk = Dh.shape[0]
    for i in range(m ** n):
        if n == 1:
            i0, i1 = 0, i
        else:
            i0, i1 = i // m, i % m
        ui = u[i]
        for k in range(nk):
            if n == 1:
                j = (i1 + Dh[k, 0]) % m
            else:
                j = ((i0 + Dh[k, 0]) % m) * m + (i1 + Dh[k, 1]) % m
            x = wh[k] * abs(ui - u[j] - c[k])
            t = tot + x
            if abs(tot) >= abs(x):
                comp += (tot - t) + x
            else:
                comp += (x - t) + tot
            tot = t
    return tot + comp


def _torus_abs_np(u, m, n, Dh, wh, c):
    U = u.reshape((m,) * n)
    parts = []
    for k in range(len(wh)):
        Uj = np.roll(U, tuple(-int(v) for v in Dh[k]), axis=tuple(range(n)))
        parts.append(wh[k] * np.abs(U - Uj - c[k]).sum())
    return math.fsum(parts)


def torus_abs_sum(u, m, n, Dh, wh, c):
    u = np.ascontiguousarray(u, dtype=float).ravel()
    if use_numba():
        return _torus_abs_nb(u, m, n, Dh, wh, c)
    return _torus_abs_np(u, m, n, Dh, wh, c)


def torus_neighbor(m, n, d):
    """Flat index of i + d (mod m) for every torus cell i."""
    idx = np.arange(m ** n).reshape((m,) * n)
    return np.roll(idx, tuple(-int(v) for v in d), axis=tuple(range(n))).ravel()
