"""Brute-force reference implementations for testing.

Plain Python loops, no shared kernels, quadratic where convenient.  Meant for
desk-sized inputs (N up to ~1e4); do not use on real workloads.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .core import KIND_KEPT, KIND_MERGED, CompressedSequence
from .tensorio import write_uhrt


def oracle_column_mean(attn) -> np.ndarray:
    a = np.asarray(attn, dtype=np.float64)
    m, n = a.shape
    out = np.empty(n)
    for i in range(n):
        out[i] = math.fsum(float(a[j, i]) for j in range(m)) / m
    return out


def oracle_bilinear(grid, x: float, y: float) -> float:
    """Four-neighbour bilinear formula, written out term by term."""
    g = np.asarray(grid, dtype=np.float64)
    rows, cols = g.shape

    def at(xi: int, yi: int) -> float:
        # out-of-grid neighbours read the nearest edge cell
        return float(g[min(max(yi, 0), rows - 1), min(max(xi, 0), cols - 1)])

    x0 = math.floor(x)
    y0 = math.floor(y)
    x1 = x0 + 1
    y1 = y0 + 1
    q00, q10, q01, q11 = at(x0, y0), at(x1, y0), at(x0, y1), at(x1, y1)
    return (
        q00 * (x1 - x) * (y1 - y)
        + q10 * (x - x0) * (y1 - y)
        + q01 * (x1 - x) * (y - y0)
        + q11 * (x - x0) * (y - y0)
    )


def oracle_align(anchor_scores, anchor_rows: int, anchor_cols: int,
                 rows: int, cols: int, cells_per_token: int = 1) -> np.ndarray:
    g = np.asarray(anchor_scores, dtype=np.float64).reshape(anchor_rows, anchor_cols)
    c = cells_per_token
    fine_r, fine_c = rows * c, cols * c
    out = np.empty(rows * cols)
    for u in range(rows):
        for v in range(cols):
            vals = []
            for i in range(c):
                for j in range(c):
                    fu, fv = u * c + i, v * c + j
                    x = (fv + 0.5) * anchor_cols / fine_c - 0.5
                    y = (fu + 0.5) * anchor_rows / fine_r - 0.5
                    vals.append(oracle_bilinear(g, x, y))
            out[u * cols + v] = math.fsum(vals) / len(vals)
    return out


def oracle_nearest_center(embeddings, centers):
    """Labels of the nearest center (lowest index on ties) and the full distance table."""
    x = np.asarray(embeddings, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    table = ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
    labels = np.empty(x.shape[0], dtype=np.int64)
    for i in range(x.shape[0]):
        best = 0
        for r in range(1, c.shape[0]):
            if table[i, r] < table[i, best]:
                best = r
        labels[i] = best
    return labels, table


def oracle_patch_majority(pixel_labels, patch: int) -> np.ndarray:
    """Most frequent label per patch (smallest label on ties), raw label ids, row-major."""
    lab = np.asarray(pixel_labels)
    rows, cols = lab.shape[0] // patch, lab.shape[1] // patch
    out = np.empty(rows * cols, dtype=np.int64)
    for u in range(rows):
        for v in range(cols):
            counts: dict[int, int] = {}
            for i in range(u * patch, (u + 1) * patch):
                for j in range(v * patch, (v + 1) * patch):
                    key = int(lab[i, j])
                    counts[key] = counts.get(key, 0) + 1
            out[u * cols + v] = min(counts, key=lambda k: (-counts[k], k))
    return out


def oracle_compress(features, scores, labels, budget: int) -> CompressedSequence:
    """Region-aware pruning re-traced step by step with list sorts."""
    feats = np.asarray(features, dtype=np.float64)
    a = [float(v) for v in np.asarray(scores)]
    lab = [int(v) for v in np.asarray(labels)]
    n, d = feats.shape
    n_regions = max(lab) + 1

    means, keep, merge, merged_feat = {}, {}, {}, {}
    for m in range(n_regions):
        members = [i for i in range(n) if lab[i] == m]
        total = 0.0
        for i in members:
            total += a[i]
        mean = total / len(members)
        # keep the rounded mean inside the member range (mean of a set lies in its hull)
        mean = min(max(mean, min(a[i] for i in members)), max(a[i] for i in members))
        means[m] = mean
        keep[m] = [i for i in members if a[i] >= mean]
        kept_set = set(keep[m])
        merge[m] = [i for i in members if i not in kept_set]
        if merge[m]:
            acc = [0.0] * d
            for i in merge[m]:
                for j in range(d):
                    acc[j] += feats[i, j]
            merged_feat[m] = [v / len(merge[m]) for v in acc]

    cand = []
    for m in sorted(range(n_regions), key=lambda r: (-means[r], r)):
        for i in sorted(keep[m], key=lambda t: (-a[t], t)):
            cand.append((KIND_KEPT, m, [i], feats[i].tolist(), a[i]))
        if merge[m]:
            cand.append((KIND_MERGED, m, list(merge[m]), merged_feat[m], means[m]))
    out = cand[:budget]

    offsets = [0]
    flat: list[int] = []
    for rec in out:
        flat.extend(rec[2])
        offsets.append(len(flat))
    return CompressedSequence(
        features=np.array([rec[3] for rec in out], dtype=np.float64).reshape(len(out), d),
        kinds=np.array([rec[0] for rec in out], dtype=np.int8),
        regions=np.array([rec[1] for rec in out], dtype=np.int64),
        scores=np.array([rec[4] for rec in out], dtype=np.float64),
        source_offsets=np.array(offsets, dtype=np.int64),
        source_indices=np.array(flat, dtype=np.int64),
        n_tokens=n,
    )


def dump_instance(directory, name: str, meta: dict | None = None, **arrays) -> Path:
    """Write a failing randomized instance as UHRT tensors plus a JSON manifest."""
    root = Path(directory) / name
    root.mkdir(parents=True, exist_ok=True)
    files = {}
    for key, arr in arrays.items():
        arr = np.asarray(arr)
        if arr.dtype.kind in "iub":
            arr = arr.astype(np.int32)
        else:
            arr = arr.astype(np.float64)
        write_uhrt(root / f"{key}.uhrt", arr)
        files[key] = f"{key}.uhrt"
    (root / "instance.json").write_text(json.dumps({"tensors": files, "meta": meta or {}}, indent=2))
    return root
