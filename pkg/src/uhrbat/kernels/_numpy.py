"""Pure-numpy kernels.  Same contracts and accumulation order as ``_numba``."""

from __future__ import annotations

import numpy as np

# bytes of scratch per assignment chunk
_CHUNK_BYTES = 64 * 2**20


def column_mean(attn):
    # axis-0 reduction on a C-contiguous array accumulates row after row
    return attn.sum(axis=0) / attn.shape[0]


def bilinear_gather(grid, xs, ys):
    rows, cols = grid.shape[0], grid.shape[1]
    x0f = np.floor(xs)
    y0f = np.floor(ys)
    tx = (xs - x0f)[:, None]
    ty = (ys - y0f)[:, None]
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    c0 = np.clip(x0, 0, cols - 1)
    c1 = np.clip(x0 + 1, 0, cols - 1)
    r0 = np.clip(y0, 0, rows - 1)
    r1 = np.clip(y0 + 1, 0, rows - 1)
    q00 = grid[r0, c0]
    q10 = grid[r0, c1]
    q01 = grid[r1, c0]
    q11 = grid[r1, c1]
    top = q00 + (q10 - q00) * tx
    bot = q01 + (q11 - q01) * tx
    return top + (bot - top) * ty


def region_score_stats(scores, labels, n_regions):
    sums = np.bincount(labels, weights=scores, minlength=n_regions)
    counts = np.bincount(labels, minlength=n_regions).astype(np.int64)
    mins = np.full(n_regions, np.inf)
    maxs = np.full(n_regions, -np.inf)
    np.minimum.at(mins, labels, scores)
    np.maximum.at(maxs, labels, scores)
    return sums, counts, mins, maxs


def group_row_sums(x, rows, groups, n_groups):
    out = np.zeros((n_groups, x.shape[1]))
    # ufunc.at is unbuffered and applies in index order, so the sums match
    # the sequential loop bit for bit
    np.add.at(out, groups, x[rows])
    return out


def sq_dist_to_point(x, c):
    diff = x - c
    return np.einsum("ij,ij->i", diff, diff)


def assign_nearest(x, centers):
    n, d = x.shape
    k = centers.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n)
    step = max(1, _CHUNK_BYTES // max(1, 8 * k * d))
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        diff = x[lo:hi, None, :] - centers[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        lab = np.argmin(d2, axis=1)  # first minimum -> smallest center index
        labels[lo:hi] = lab
        best[lo:hi] = d2[np.arange(hi - lo), lab]
    return labels, best


def patch_majority(codes, patch):
    """Most frequent code per ``patch x patch`` tile; smallest code wins ties."""
    h, w = codes.shape
    hp, wp = h // patch, w // patch
    tiles = (
        codes.reshape(hp, patch, wp, patch).transpose(0, 2, 1, 3).reshape(hp * wp, patch * patch)
    )
    n_tok = tiles.shape[0]
    span = int(codes.max()) + 1 if codes.size else 1
    keyed = np.sort(tiles, axis=1) + np.arange(n_tok, dtype=np.int64)[:, None] * span
    runs, counts = np.unique(keyed.ravel(), return_counts=True)
    run_tok = runs // span
    run_code = runs % span
    starts = np.flatnonzero(np.r_[True, run_tok[1:] != run_tok[:-1]])
    best = np.maximum.reduceat(counts, starts)
    winners = counts == np.repeat(best, np.diff(np.r_[starts, len(runs)]))
    # runs are ordered by code within a token: the first winner is the smallest code
    first = np.unique(run_tok[winners], return_index=True)[1]
    return run_code[np.flatnonzero(winners)[first]]
