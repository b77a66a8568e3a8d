"""Hot numeric kernels with numba-compiled and pure-numpy implementations.

The numba path is the default; set the environment variable ``HOMLAB_NUMBA=0``
to force the pure-numpy fallbacks (useful for debugging and as a correctness
reference, see ``benchmarks/bench_kernels.py``).
"""

import os

import numpy as np

USE_NUMBA = os.environ.get("HOMLAB_NUMBA", "1") != "0"

if USE_NUMBA:
    try:
        import numba
        from numba import njit, prange
    except ImportError:  # pragma: no cover
        USE_NUMBA = False

__all__ = [
    "USE_NUMBA",
    "divform_apply",
    "divform_apply_numpy",
    "pair_interaction_sup",
    "pair_interaction_sup_numpy",
]


def divform_apply_numpy(a, u, inv_t):
    """inv_t*u - div(a grad u) with forward-difference grad, backward div.

    a has shape (d, d) + grid, u has shape grid; coefficients are applied
    cellwise to the forward-difference gradient.
    """
    d = a.shape[0]
    t = [np.roll(u, -1, axis=j) - u for j in range(d)]
    out = inv_t * u if inv_t != 0.0 else np.zeros_like(u)
    for i in range(d):
        f = a[i, 0] * t[0]
        for j in range(1, d):
            f += a[i, j] * t[j]
        out -= f - np.roll(f, 1, axis=i)
    return out


def _box_dist_sq_numpy(corners, sides, i):
    """Squared distance from box i to every box, axis-aligned."""
    lo_i = corners[i]
    hi_i = corners[i] + sides[i]
    lo = corners
    hi = corners + sides[:, None]
    gap = np.maximum(lo - hi_i[None, :], lo_i[None, :] - hi)
    np.maximum(gap, 0.0, out=gap)
    return np.einsum("ij,ij->i", gap, gap)


def pair_interaction_sup_numpy(corners, sides, gamma, outer=None):
    """sup over cells D of sum_{D'} (1 + dist(D, D'))**(-gamma).

    ``outer`` optionally restricts the cells over which the sup is taken
    (the inner sum always runs over all cells); used when a symmetry of
    the cell family guarantees the sup is attained on the subset.
    """
    m = corners.shape[0]
    best = 0.0
    for i in (range(m) if outer is None else outer):
        d2 = _box_dist_sq_numpy(corners, sides, int(i))
        s = np.sum((1.0 + np.sqrt(d2)) ** (-gamma))
        if s > best:
            best = s
    return best


if USE_NUMBA:

    @njit(cache=True, fastmath=True)
    def _divform_apply_2d(a, u, inv_t, out):
        n0, n1 = u.shape
        for x0 in range(n0):
            x0p = x0 + 1 if x0 + 1 < n0 else 0
            x0m = x0 - 1 if x0 > 0 else n0 - 1
            for x1 in range(n1):
                x1p = x1 + 1 if x1 + 1 < n1 else 0
                x1m = x1 - 1 if x1 > 0 else n1 - 1
                t0 = u[x0p, x1] - u[x0, x1]
                t1 = u[x0, x1p] - u[x0, x1]
                # flux component 0 at (x0-1, x1) and 1 at (x0, x1-1)
                s0 = u[x0, x1] - u[x0m, x1]
                s1 = u[x0m, x1p] - u[x0m, x1]
                r0 = u[x0p, x1m] - u[x0, x1m]
                r1 = u[x0, x1] - u[x0, x1m]
                f0 = a[0, 0, x0, x1] * t0 + a[0, 1, x0, x1] * t1
                f0m = a[0, 0, x0m, x1] * s0 + a[0, 1, x0m, x1] * s1
                f1 = a[1, 0, x0, x1] * t0 + a[1, 1, x0, x1] * t1
                f1m = a[1, 0, x0, x1m] * r0 + a[1, 1, x0, x1m] * r1
                out[x0, x1] = inv_t * u[x0, x1] - (f0 - f0m) - (f1 - f1m)

    @njit(cache=True, fastmath=True)
    def _divform_apply_3d(a, u, inv_t, out):
        n0, n1, n2 = u.shape
        for x0 in range(n0):
            for x1 in range(n1):
                for x2 in range(n2):
                    out[x0, x1, x2] = inv_t * u[x0, x1, x2]
        # accumulate -div(a grad u) one divergence axis at a time
        for i in range(3):
            for x0 in range(n0):
                x0p = x0 + 1 if x0 + 1 < n0 else 0
                for x1 in range(n1):
                    x1p = x1 + 1 if x1 + 1 < n1 else 0
                    for x2 in range(n2):
                        x2p = x2 + 1 if x2 + 1 < n2 else 0
                        t0 = u[x0p, x1, x2] - u[x0, x1, x2]
                        t1 = u[x0, x1p, x2] - u[x0, x1, x2]
                        t2 = u[x0, x1, x2p] - u[x0, x1, x2]
                        fi = (a[i, 0, x0, x1, x2] * t0
                              + a[i, 1, x0, x1, x2] * t1
                              + a[i, 2, x0, x1, x2] * t2)
                        out[x0, x1, x2] -= fi
                        if i == 0:
                            out[x0p, x1, x2] += fi
                        elif i == 1:
                            out[x0, x1p, x2] += fi
                        else:
                            out[x0, x1, x2p] += fi

    @njit(cache=True, fastmath=True, parallel=True)
    def _pair_interaction_sup(corners, sides, gamma, outer):
        m, d = corners.shape
        mo = outer.shape[0]
        sums = np.zeros(mo)
        for ii in prange(mo):
            i = outer[ii]
            acc = 0.0
            for j in range(m):
                d2 = 0.0
                for k in range(d):
                    lo_i = corners[i, k]
                    hi_i = lo_i + sides[i]
                    lo_j = corners[j, k]
                    hi_j = lo_j + sides[j]
                    gap = lo_j - hi_i
                    if lo_i - hi_j > gap:
                        gap = lo_i - hi_j
                    if gap > 0.0:
                        d2 += gap * gap
                acc += (1.0 + np.sqrt(d2)) ** (-gamma)
            sums[ii] = acc
        return np.max(sums)


def divform_apply(a, u, inv_t=0.0):
    """Apply the heterogeneous divergence-form operator on the torus."""
    if USE_NUMBA and u.ndim in (2, 3):
        out = np.empty_like(u)
        if u.ndim == 2:
            _divform_apply_2d(a, u, inv_t, out)
        else:
            _divform_apply_3d(a, u, inv_t, out)
        return out
    return divform_apply_numpy(a, u, inv_t)


def pair_interaction_sup(corners, sides, gamma, outer=None):
    corners = np.ascontiguousarray(corners, dtype=np.float64)
    sides = np.ascontiguousarray(sides, dtype=np.float64)
    if outer is None:
        outer = np.arange(corners.shape[0], dtype=np.int64)
    else:
        outer = np.ascontiguousarray(outer, dtype=np.int64)
    if USE_NUMBA:
        return _pair_interaction_sup(corners, sides, float(gamma), outer)
    return pair_interaction_sup_numpy(corners, sides, float(gamma), outer)
