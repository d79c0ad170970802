"""Joint-decision search kernels for the exhaustive oracle.

Options of all vehicles are packed into flat arrays; vehicle ``k`` owns rows
``offsets[k]:offsets[k+1]``. A joint decision picks one row per vehicle and
is feasible when every chosen row meets its deadline, no channel bit is
claimed twice (or is already occupied), and the VEC and per-vehicle CPU
loads stay within 1 + ``tol``.

Both kernels visit joints in lexicographic order of row indices (last
vehicle fastest), accumulate utilities in vehicle order, and keep the first
strict maximum, so they return bit-identical results.
"""
from __future__ import annotations

import numpy as np

from ._jit import USE_NUMBA, njit

NPOOLS = 4


@njit(cache=True)
def _search_numba(offsets, util, c8ok, vec, cpu_idx, cpu_frac, masks,
                  vec_occ, cpu_occ, occ_masks, tol):
    K = offsets.shape[0] - 1
    idx = np.zeros(K, dtype=np.int64)
    best = np.full(K, -1, dtype=np.int64)
    best_u = -np.inf
    found = False
    for k in range(K):
        if offsets[k + 1] == offsets[k]:
            return best, best_u, found
    load = np.zeros(cpu_occ.shape[0])
    acc = np.zeros(NPOOLS, dtype=np.int64)
    while True:
        ok = True
        u = 0.0
        vload = vec_occ
        for j in range(load.shape[0]):
            load[j] = cpu_occ[j]
        for p in range(NPOOLS):
            acc[p] = occ_masks[p]
        for k in range(K):
            o = offsets[k] + idx[k]
            if not c8ok[o]:
                ok = False
                break
            for p in range(NPOOLS):
                if acc[p] & masks[o, p]:
                    ok = False
                acc[p] |= masks[o, p]
            if not ok:
                break
            vload += vec[o]
            if vload - 1.0 > tol:
                ok = False
                break
            j = cpu_idx[o]
            if j >= 0:
                load[j] += cpu_frac[o]
                if load[j] - 1.0 > tol:
                    ok = False
                    break
            u += util[o]
        if ok and u > best_u:
            best_u = u
            found = True
            for k in range(K):
                best[k] = idx[k]
        # mixed-radix increment, last vehicle fastest
        k = K - 1
        while k >= 0:
            idx[k] += 1
            if idx[k] < offsets[k + 1] - offsets[k]:
                break
            idx[k] = 0
            k -= 1
        if k < 0:
            break
    return best, best_u, found


def _search_numpy(offsets, util, c8ok, vec, cpu_idx, cpu_frac, masks,
                  vec_occ, cpu_occ, occ_masks, tol):
    K = len(offsets) - 1
    sizes = [int(offsets[k + 1] - offsets[k]) for k in range(K)]
    best = np.full(K, -1, dtype=np.int64)
    if min(sizes) == 0:
        return best, -np.inf, False
    shape = tuple(sizes)

    def axis(k, arr):
        view = [1] * K
        view[k] = sizes[k]
        return arr[offsets[k]:offsets[k + 1]].reshape(view)

    ok = np.ones(shape, dtype=bool)
    u = np.zeros(shape)
    vload = np.full(shape, float(vec_occ))
    ncpu = len(cpu_occ)
    loads = [np.full(shape, float(cpu_occ[j])) for j in range(ncpu)]
    accs = [np.full(shape, np.int64(occ_masks[p])) for p in range(NPOOLS)]
    for k in range(K):
        ok &= axis(k, c8ok)
        for p in range(NPOOLS):
            m = axis(k, masks[:, p].copy())
            ok &= (accs[p] & m) == 0
            accs[p] = accs[p] | m
        vload = vload + axis(k, vec)
        ok &= (vload - 1.0) <= tol
        ci = axis(k, cpu_idx)
        cf = axis(k, cpu_frac)
        for j in range(ncpu):
            loads[j] = loads[j] + np.where(ci == j, cf, 0.0)
            ok &= (loads[j] - 1.0) <= tol
        u = u + axis(k, util)
    if not ok.any():
        return best, -np.inf, False
    scored = np.where(ok, u, -np.inf)
    flat = int(np.argmax(scored))
    best[:] = np.unravel_index(flat, shape)
    return best, float(scored.flat[flat]), True


def search_joint(*args, use_numba: bool | None = None):
    """Dispatch to the numba kernel or the numpy fallback."""
    if use_numba is None:
        use_numba = USE_NUMBA
    if use_numba:
        best, u, found = _search_numba(*args)
        return np.asarray(best), float(u), bool(found)
    return _search_numpy(*args)
