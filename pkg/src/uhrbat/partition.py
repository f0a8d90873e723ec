"""Region partitions: feature+coordinate k-means, or pixel label maps by majority vote."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike

from . import kernels
from .core import (
    ConfigurationError,
    DataError,
    DimensionError,
    FloatArray,
    IntArray,
    RegionPartition,
    TokenGrid,
    as_features,
    densify_labels,
    token_coordinates,
    validate_partition,
)

__all__ = [
    "KMeansResult",
    "PartitionConfig",
    "PixelLabelMap",
    "build_cluster_embeddings",
    "kmeans",
    "kmeans_partition",
    "labels_to_partition",
    "partition_tokens",
    "validate_partition",
]


@dataclass(frozen=True)
class PartitionConfig:
    method: Literal["kmeans", "external_labels"] = "kmeans"
    k: int = 600
    lambda_f: float = 1.0
    lambda_xy: float = 0.5
    seed: int = 0
    max_iters: int = 100
    tol: float = 1e-4
    # pixels carrying this label are background; their tokens become singleton regions
    background_label: int | None = -1

    def __post_init__(self) -> None:
        if self.method not in ("kmeans", "external_labels"):
            raise ConfigurationError(f"unknown partition method {self.method!r}")
        if self.k < 1:
            raise ConfigurationError(f"k must be >= 1, got {self.k}")
        if self.lambda_f < 0 or self.lambda_xy < 0:
            raise ConfigurationError("lambda_f and lambda_xy must be non-negative")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.tol < 0:
            raise ConfigurationError("tol must be >= 0")


@dataclass(frozen=True)
class PixelLabelMap:
    labels: IntArray
    patch_size: int

    def __post_init__(self) -> None:
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise DimensionError(f"pixel label map must be 2-D, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise DataError("pixel labels must be integers")
        if self.patch_size < 1:
            raise ConfigurationError("patch_size must be >= 1")
        h, w = lab.shape
        if h % self.patch_size or w % self.patch_size:
            raise DimensionError(
                f"label map {h}x{w} is not a whole number of {self.patch_size}px patches"
            )
        object.__setattr__(self, "labels", np.ascontiguousarray(lab, dtype=np.int64))

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])


def build_cluster_embeddings(
    features: ArrayLike, grid: TokenGrid, cfg: PartitionConfig
) -> FloatArray:
    """Rows ``[lambda_f * f / |f|, lambda_xy * x, lambda_xy * y]``; zero features stay zero."""
    f = as_features(features, grid.n_tokens)
    norms = np.sqrt(np.einsum("ij,ij->i", f, f))
    safe = np.where(norms > 0, norms, 1.0)
    out = np.empty((f.shape[0], f.shape[1] + 2))
    out[:, :-2] = f / safe[:, None]
    out[:, :-2] *= cfg.lambda_f
    out[:, -2:] = cfg.lambda_xy * token_coordinates(grid)
    return out


@dataclass
class KMeansResult:
    """Raw Lloyd output.

    ``labels`` index ``centers`` and are nearest-center for exactly those
    centers.  ``objective`` holds J after every assignment step.
    """

    labels: IntArray
    centers: FloatArray
    objective: list[float] = field(default_factory=list)
    n_iter: int = 0
    n_reseeded: int = 0

    @property
    def inertia(self) -> float:
        return self.objective[-1]


def _kmeans_pp(x: FloatArray, k: int, rng: np.random.Generator) -> FloatArray:
    n = x.shape[0]
    chosen = np.zeros(n, dtype=bool)
    first = int(rng.integers(n))
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[first]
    chosen[first] = True
    d2 = kernels.sq_dist_to_point(x, centers[0])
    for r in range(1, k):
        total = float(d2.sum())
        if total > 0.0:
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            if idx >= n:
                idx = int(np.flatnonzero(d2 > 0)[-1])
        else:
            # every point coincides with a center already; take the next unused index
            idx = int(np.flatnonzero(~chosen)[0])
        chosen[idx] = True
        centers[r] = x[idx]
        np.minimum(d2, kernels.sq_dist_to_point(x, centers[r]), out=d2)
    return centers


def _update_centers(x, labels, centers):
    k = centers.shape[0]
    n = x.shape[0]
    sums = kernels.group_row_sums(x, np.arange(n, dtype=np.int64), labels, k)
    counts = np.bincount(labels, minlength=k)
    new = centers.copy()
    live = counts > 0
    new[live] = sums[live] / counts[live, None]
    empty = np.flatnonzero(~live)
    if empty.size:
        # reseed each empty cluster at the point farthest from its own (updated) center
        resid = np.einsum("ij,ij->i", x - new[labels], x - new[labels])
        for r in empty:
            far = int(np.argmax(resid))
            new[r] = x[far]
            resid[far] = -1.0
    return new, int(empty.size)


def kmeans(embeddings: ArrayLike, cfg: PartitionConfig) -> KMeansResult:
    """Seeded k-means++ initialisation followed by Lloyd iterations.

    Stops at a fixed point, when the relative decrease of J drops below
    ``cfg.tol``, or after ``cfg.max_iters`` assignment steps.  Ties go to the
    lowest center index.
    """
    x = as_features(embeddings)
    n = x.shape[0]
    if cfg.k < 1 or cfg.k > n:
        raise ConfigurationError(f"k={cfg.k} must lie in [1, {n}]")
    rng = np.random.default_rng(cfg.seed)
    centers = _kmeans_pp(x, cfg.k, rng)
    result = KMeansResult(labels=np.zeros(n, dtype=np.int64), centers=centers)
    prev_labels = None
    prev_j = np.inf
    for it in range(cfg.max_iters):
        labels, d2 = kernels.assign_nearest(x, centers)
        j = float(d2.sum())
        result.labels, result.centers = labels, centers
        result.objective.append(j)
        result.n_iter = it + 1
        if prev_labels is not None and np.array_equal(labels, prev_labels):
            break
        if np.isfinite(prev_j) and (prev_j == 0.0 or (prev_j - j) < cfg.tol * prev_j):
            break
        if it + 1 == cfg.max_iters:
            break
        centers, n_empty = _update_centers(x, labels, centers)
        result.n_reseeded += n_empty
        prev_labels, prev_j = labels, j
    return result


def kmeans_partition(embeddings: ArrayLike, cfg: PartitionConfig) -> RegionPartition:
    res = kmeans(embeddings, cfg)
    return RegionPartition.from_labels(res.labels)


def labels_to_partition(
    label_map: PixelLabelMap, grid: TokenGrid, background_label: int | None = None
) -> RegionPartition:
    """Token regions from a pixel label map by per-patch majority vote.

    Ties go to the smallest label id.  Tokens whose vote lands on
    ``background_label`` each become a region of their own.  Region ids are
    assigned in order of first occurrence along the token order.
    """
    p = label_map.patch_size
    if (label_map.height // p, label_map.width // p) != grid.shape:
        raise DimensionError(
            f"{label_map.height}x{label_map.width} map at patch {p} does not give a "
            f"{grid.rows}x{grid.cols} token grid"
        )
    ids, codes = np.unique(label_map.labels, return_inverse=True)
    codes = np.ascontiguousarray(codes.reshape(label_map.labels.shape), dtype=np.int64)
    token_ids = ids[kernels.patch_majority(codes, p)]
    if background_label is not None:
        bg = token_ids == background_label
        if bg.any():
            # push background tokens into fresh ids that cannot collide with real labels
            fresh = token_ids.max() + 1 + np.arange(int(bg.sum()))
            token_ids = token_ids.copy()
            token_ids[bg] = fresh
    return RegionPartition.from_labels(token_ids)


def partition_tokens(
    features: ArrayLike | None,
    grid: TokenGrid,
    cfg: PartitionConfig,
    label_map: PixelLabelMap | None = None,
) -> RegionPartition:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "external_labels":
        if label_map is None:
            raise ConfigurationError("external_labels partition needs a pixel label map")
        return labels_to_partition(label_map, grid, cfg.background_label)
    emb = build_cluster_embeddings(features, grid, cfg)
    return kmeans_partition(emb, cfg)
