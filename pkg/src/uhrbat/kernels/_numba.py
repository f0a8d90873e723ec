"""numba-compiled kernels.

Loops accumulate in ascending index order so results do not depend on how
many threads call them concurrently.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_jit = njit(cache=True, nogil=True)


@_jit
def column_mean(attn):
    m, n = attn.shape
    out = np.zeros(n)
    for j in range(m):
        for i in range(n):
            out[i] += attn[j, i]
    for i in range(n):
        out[i] /= m
    return out


@_jit
def bilinear_gather(grid, xs, ys):
    rows, cols, ch = grid.shape
    p = xs.shape[0]
    out = np.empty((p, ch))
    for k in range(p):
        x0f = math.floor(xs[k])
        y0f = math.floor(ys[k])
        tx = xs[k] - x0f
        ty = ys[k] - y0f
        x0 = int(x0f)
        y0 = int(y0f)
        c0 = min(max(x0, 0), cols - 1)
        c1 = min(max(x0 + 1, 0), cols - 1)
        r0 = min(max(y0, 0), rows - 1)
        r1 = min(max(y0 + 1, 0), rows - 1)
        for c in range(ch):
            q00 = grid[r0, c0, c]
            q10 = grid[r0, c1, c]
            q01 = grid[r1, c0, c]
            q11 = grid[r1, c1, c]
            top = q00 + (q10 - q00) * tx
            bot = q01 + (q11 - q01) * tx
            out[k, c] = top + (bot - top) * ty
    return out


@_jit
def region_score_stats(scores, labels, n_regions):
    sums = np.zeros(n_regions)
    counts = np.zeros(n_regions, dtype=np.int64)
    mins = np.full(n_regions, np.inf)
    maxs = np.full(n_regions, -np.inf)
    for i in range(scores.shape[0]):
        r = labels[i]
        s = scores[i]
        sums[r] += s
        counts[r] += 1
        if s < mins[r]:
            mins[r] = s
        if s > maxs[r]:
            maxs[r] = s
    return sums, counts, mins, maxs


@_jit
def group_row_sums(x, rows, groups, n_groups):
    d = x.shape[1]
    out = np.zeros((n_groups, d))
    for k in range(rows.shape[0]):
        g = groups[k]
        i = rows[k]
        for j in range(d):
            out[g, j] += x[i, j]
    return out


@_jit
def sq_dist_to_point(x, c):
    n, d = x.shape
    out = np.empty(n)
    for i in range(n):
        acc = 0.0
        for j in range(d):
            t = x[i, j] - c[j]
            acc += t * t
        out[i] = acc
    return out


@_jit
def assign_nearest(x, centers):
    n, d = x.shape
    k = centers.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    for i in range(n):
        bl = 0
        bd = np.inf
        for r in range(k):
            acc = 0.0
            for j in range(d):
                t = x[i, j] - centers[r, j]
                acc += t * t
            if acc < bd:
                bd = acc
                bl = r
        labels[i] = bl
        best[i] = bd
    return labels, best


@_jit
def patch_majority(codes, patch):
    h, w = codes.shape
    hp = h // patch
    wp = w // patch
    span = 1
    for a in range(h):
        for b in range(w):
            if codes[a, b] + 1 > span:
                span = codes[a, b] + 1
    counts = np.zeros(span, dtype=np.int64)
    seen = np.empty(patch * patch, dtype=np.int64)
    out = np.empty(hp * wp, dtype=np.int64)
    for u in range(hp):
        for v in range(wp):
            n_seen = 0
            for a in range(u * patch, (u + 1) * patch):
                for b in range(v * patch, (v + 1) * patch):
                    c = codes[a, b]
                    if counts[c] == 0:
                        seen[n_seen] = c
                        n_seen += 1
                    counts[c] += 1
            best_c = seen[0]
            best_n = counts[best_c]
            for t in range(1, n_seen):
                c = seen[t]
                if counts[c] > best_n or (counts[c] == best_n and c < best_c):
                    best_c = c
                    best_n = counts[c]
            for t in range(n_seen):
                counts[seen[t]] = 0
            out[u * wp + v] = best_c
    return out
