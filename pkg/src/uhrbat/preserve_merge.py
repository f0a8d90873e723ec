"""Region-wise preserve-and-merge compression with priority serialization.

Per region: tokens scoring at least the region mean are kept, the rest are
mean-pooled into one representative.  Regions are serialized by descending
mean score (ties: lower region id first), kept tokens by descending score
(ties: lower token index first), each region's merged token last in its
group.  The serialized candidates are then cut to the budget.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from . import kernels
from .core import (
    KIND_KEPT,
    KIND_MERGED,
    BudgetWarning,
    CompressedSequence,
    ConfigurationError,
    DimensionError,
    FloatArray,
    InfeasibleBudgetError,
    IntArray,
    PreconditionError,
    RegionPartition,
    UHRBatError,
    as_features,
    as_scores,
)


@dataclass(frozen=True, eq=False)
class RegionStats:
    region: int
    mean_score: float
    keep: IntArray
    merge: IntArray
    merged_feature: FloatArray | None = None

    def __post_init__(self) -> None:
        if self.keep.size == 0:
            raise UHRBatError(f"region {self.region} has an empty keep set")


def _stats(scores: FloatArray, partition: RegionPartition):
    sums, counts, mins, maxs = kernels.region_score_stats(
        scores, partition.labels, partition.n_regions
    )
    if (counts == 0).any():
        raise UHRBatError("empty region in a validated partition")
    # a mean of floats can round past the region's extremes (all-equal scores,
    # e.g. three copies of 0.1); clamping restores min <= mean <= max
    means = np.minimum(np.maximum(sums / counts, mins), maxs)
    return means, counts


def _checked(scores, partition):
    s = as_scores(scores)
    if s.shape[0] != partition.n_tokens:
        raise DimensionError(
            f"{s.shape[0]} scores for a partition of {partition.n_tokens} tokens"
        )
    return s


def region_mean_importance(scores: ArrayLike, partition: RegionPartition) -> FloatArray:
    s = _checked(scores, partition)
    return _stats(s, partition)[0]


def split_keep_merge(scores: ArrayLike, partition: RegionPartition) -> list[RegionStats]:
    s = _checked(scores, partition)
    means, _ = _stats(s, partition)
    keep_mask = s >= means[partition.labels]
    out = []
    for m, members in enumerate(partition.regions()):
        k = members[keep_mask[members]]
        # descending score, ascending index on ties
        k = k[np.lexsort((k, -s[k]))]
        out.append(RegionStats(m, float(means[m]), k, members[~keep_mask[members]]))
    return out


def merge_tokens(features: ArrayLike, merge_indices: ArrayLike) -> FloatArray:
    """Mean of the selected feature rows, accumulated in the given index order."""
    idx = np.asarray(merge_indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise PreconditionError("cannot merge an empty token set")
    f = as_features(features)
    if idx.min() < 0 or idx.max() >= f.shape[0]:
        raise DimensionError("merge index out of range")
    total = kernels.group_row_sums(f, idx, np.zeros(idx.size, dtype=np.int64), 1)[0]
    return total / idx.size


@dataclass(frozen=True)
class _Plan:
    """Serialized candidate order as index arrays; features not yet gathered."""

    kinds: np.ndarray  # int8
    regions: IntArray
    tokens: IntArray  # kept token index, or -1 for merged records
    means: FloatArray
    keep_mask: np.ndarray
    n_tokens: int

    def __len__(self) -> int:
        return int(self.kinds.shape[0])


def _plan(scores: FloatArray, partition: RegionPartition) -> _Plan:
    labels = partition.labels
    n_reg = partition.n_regions
    means, counts = _stats(scores, partition)
    keep_mask = scores >= means[labels]
    region_order = np.lexsort((np.arange(n_reg), -means))
    rank = np.empty(n_reg, dtype=np.int64)
    rank[region_order] = np.arange(n_reg)

    kept = np.flatnonzero(keep_mask)
    n_keep = np.bincount(labels[kept], minlength=n_reg)
    merged_regions = np.flatnonzero(counts > n_keep)

    n_k, n_m = kept.size, merged_regions.size
    cand_rank = np.concatenate([rank[labels[kept]], rank[merged_regions]])
    cand_kind = np.concatenate([np.full(n_k, KIND_KEPT, np.int8), np.full(n_m, KIND_MERGED, np.int8)])
    cand_score = np.concatenate([scores[kept], np.zeros(n_m)])
    cand_token = np.concatenate([kept, np.full(n_m, -1, np.int64)])
    cand_region = np.concatenate([labels[kept], merged_regions])
    # region rank, then kept before merged, then descending score, then token index
    order = np.lexsort((cand_token, -cand_score, cand_kind, cand_rank))
    return _Plan(
        kinds=cand_kind[order],
        regions=cand_region[order],
        tokens=cand_token[order],
        means=means,
        keep_mask=keep_mask,
        n_tokens=partition.n_tokens,
    )


def _materialize(plan: _Plan, features: FloatArray, scores: FloatArray,
                 labels: IntArray, n_regions: int, limit: int) -> CompressedSequence:
    n = min(limit, len(plan))
    kinds = plan.kinds[:n]
    regions = plan.regions[:n]
    tokens = plan.tokens[:n]
    is_merged = kinds == KIND_MERGED

    out_feat = np.empty((n, features.shape[1]))
    kept_pos = np.flatnonzero(~is_merged)
    out_feat[kept_pos] = features[tokens[kept_pos]]
    out_score = np.empty(n)
    out_score[kept_pos] = scores[tokens[kept_pos]]

    merged_pos = np.flatnonzero(is_merged)
    slot = np.full(n_regions, -1, dtype=np.int64)
    slot[regions[merged_pos]] = np.arange(merged_pos.size)
    # merge members of surviving representatives only, ascending token index
    rows = np.flatnonzero(~plan.keep_mask & (slot[labels] >= 0))
    groups = slot[labels[rows]]
    if merged_pos.size:
        sums = kernels.group_row_sums(features, rows, groups, merged_pos.size)
        sizes = np.bincount(groups, minlength=merged_pos.size)
        out_feat[merged_pos] = sums / sizes[:, None]
        out_score[merged_pos] = plan.means[regions[merged_pos]]
    else:
        sizes = np.zeros(0, dtype=np.int64)

    lengths = np.ones(n, dtype=np.int64)
    lengths[merged_pos] = sizes
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(lengths, out=offsets[1:])
    flat = np.empty(int(offsets[-1]), dtype=np.int64)
    flat[offsets[kept_pos]] = tokens[kept_pos]
    if merged_pos.size:
        by_group = rows[np.argsort(groups, kind="stable")]
        group_start = np.zeros(merged_pos.size + 1, dtype=np.int64)
        np.cumsum(sizes, out=group_start[1:])
        for g, pos in enumerate(merged_pos):
            flat[offsets[pos]:offsets[pos + 1]] = by_group[group_start[g]:group_start[g + 1]]
    return CompressedSequence(out_feat, kinds.copy(), regions.copy(), out_score,
                              offsets, flat, plan.n_tokens)


def _prepare(features, scores, partition):
    s = _checked(scores, partition)
    f = as_features(features, partition.n_tokens)
    return f, s


def serialize_candidates(
    features: ArrayLike, scores: ArrayLike, partition: RegionPartition
) -> CompressedSequence:
    """The full, uncapped candidate sequence."""
    f, s = _prepare(features, scores, partition)
    plan = _plan(s, partition)
    return _materialize(plan, f, s, partition.labels, partition.n_regions, len(plan))


def enforce_budget(candidates: CompressedSequence, budget: int) -> CompressedSequence:
    if budget < 1:
        raise ConfigurationError(f"budget must be >= 1, got {budget}")
    return candidates.head(budget)


def compress_scale(
    features: ArrayLike,
    scores: ArrayLike,
    partition: RegionPartition,
    budget: int,
    *,
    strict: bool = True,
    quiet: bool = False,
) -> CompressedSequence:
    """Preserve-and-merge one scale down to at most ``budget`` tokens.

    A budget smaller than the region count drops whole regions; that raises
    :class:`InfeasibleBudgetError` when ``strict`` and otherwise warns unless
    ``quiet``.
    Only the records that survive the cut are materialized.
    """
    if budget < 1:
        raise ConfigurationError(f"budget must be >= 1, got {budget}")
    if budget < partition.n_regions:
        msg = f"budget {budget} is below the region count {partition.n_regions}"
        if strict:
            raise InfeasibleBudgetError(msg)
        if not quiet:
            warnings.warn(msg + "; lowest-priority regions will be dropped", BudgetWarning, stacklevel=2)
    f, s = _prepare(features, scores, partition)
    plan = _plan(s, partition)
    return _materialize(plan, f, s, partition.labels, partition.n_regions, budget)


def candidate_count(scores: ArrayLike, partition: RegionPartition) -> int:
    """Uncapped candidate length: kept tokens plus one per region with a non-empty merge set."""
    s = _checked(scores, partition)
    return len(_plan(s, partition))


def keep_mask(seq: CompressedSequence) -> np.ndarray:
    """Per input token: 255 kept, 128 merged into a surviving representative, 0 dropped."""
    mask = np.zeros(seq.n_tokens, dtype=np.uint8)
    lengths = np.diff(seq.source_offsets)
    kinds = np.repeat(seq.kinds, lengths)
    mask[seq.source_indices[kinds == KIND_MERGED]] = 128
    mask[seq.source_indices[kinds == KIND_KEPT]] = 255
    return mask
