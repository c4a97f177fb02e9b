"""Pure-Python reference versions of the compiled kernels.

Same signatures and outputs as ``_kernels.pyx``; used when the extension
is not built, and as the baseline in ``benchmarks/bench_kernels.py``.
"""
from bisect import bisect_right
import math

import numpy as np


def ladder_matrix(occ, codes, sorted_codes, order, weights, caps, fermion,
                  n_max, mode, dagger):
    lookup = {int(code): int(order[pos]) for pos, code in enumerate(sorted_codes)}
    rows, cols, vals = [], [], []
    lost = False
    occ_rows = np.asarray(occ).tolist()
    fermion = [bool(f) for f in fermion]
    w = int(weights[mode])
    cap = int(caps[mode])
    for i, row in enumerate(occ_rows):
        n = row[mode]
        if dagger:
            if n + 1 > cap or sum(row) + 1 > n_max:
                if not (fermion[mode] and n == 1):
                    lost = True
                continue
            new_code = int(codes[i]) + w
            val = math.sqrt(n + 1)
        else:
            if n == 0:
                continue
            new_code = int(codes[i]) - w
            val = math.sqrt(n)
        if fermion[mode]:
            before = sum(row[j] for j in range(mode) if fermion[j])
            val = -1.0 if before % 2 else 1.0
        rows.append(lookup[new_code])
        cols.append(i)
        vals.append(val)
    return (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
            np.array(vals, dtype=np.float64), lost)


def draw_categorical(cdf, u):
    cdf = list(np.asarray(cdf, dtype=float))
    last = len(cdf) - 1
    return np.array([min(bisect_right(cdf, x), last) for x in np.asarray(u, dtype=float)],
                    dtype=np.int64)
