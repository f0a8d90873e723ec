"""Domain types and grid geometry shared by every stage of the pipeline.

Feature matrices, attention maps and score vectors are plain float64 numpy
arrays; the ``as_*`` helpers validate and widen them.  Everything with more
structure than an array gets a frozen dataclass.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


class UHRBatError(Exception):
    """Base class for all library errors."""


class DimensionError(UHRBatError, ValueError):
    pass


class DataError(UHRBatError, ValueError):
    pass


class EmptyQueryError(DataError):
    pass


class ConfigurationError(UHRBatError, ValueError):
    pass


class InfeasibleBudgetError(ConfigurationError):
    pass


class PreconditionError(UHRBatError, ValueError):
    pass


class BoundsError(UHRBatError, IndexError):
    pass


class BudgetWarning(UserWarning):
    """Emitted when a scale budget is below its region count and truncation proceeds."""


# ---------------------------------------------------------------------------
# array validation


def as_features(x: ArrayLike, n_tokens: int | None = None) -> FloatArray:
    """Return ``x`` as a C-contiguous ``(N, d)`` float64 matrix."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"feature matrix must be 2-D, got shape {arr.shape}")
    if n_tokens is not None and arr.shape[0] != n_tokens:
        raise DimensionError(f"expected {n_tokens} feature rows, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise DataError("feature matrix contains non-finite entries")
    return arr


def as_attention(x: ArrayLike) -> FloatArray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"attention map must be 2-D (M, N), got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise EmptyQueryError("attention map has no text rows")
    if arr.shape[1] == 0:
        raise DimensionError("attention map has no vision columns")
    if not np.isfinite(arr).all():
        raise DataError("attention map contains non-finite entries")
    if (arr < 0).any():
        raise DataError("attention map contains negative weights")
    return arr


def as_scores(x: ArrayLike, n_tokens: int | None = None) -> FloatArray:
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"score vector must be 1-D, got shape {arr.shape}")
    if n_tokens is not None and arr.shape[0] != n_tokens:
        raise DimensionError(f"expected {n_tokens} scores, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise DataError("score vector contains non-finite entries")
    return arr


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class TokenGrid:
    """A ``rows x cols`` patch-token grid at one scale, tokens in row-major order."""

    rows: int
    cols: int
    scale_id: int = 1

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise DimensionError(f"grid must be at least 1x1, got {self.rows}x{self.cols}")
        if self.scale_id < 1:
            raise ConfigurationError(f"scale_id must be >= 1, got {self.scale_id}")

    @property
    def n_tokens(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def coords(self) -> FloatArray:
        return token_coordinates(self)

    @classmethod
    def from_resolution(cls, resolution: int, patch_size: int = 14, scale_id: int = 1) -> "TokenGrid":
        if resolution % patch_size:
            raise ConfigurationError(
                f"resolution {resolution} is not a multiple of patch size {patch_size}"
            )
        side = resolution // patch_size
        return cls(side, side, scale_id)


def token_coordinates(grid: TokenGrid) -> FloatArray:
    """Cell-center coordinates ``(x, y)`` in ``[0, 1]^2``, one row per token."""
    u, v = np.divmod(np.arange(grid.n_tokens), grid.cols)
    xy = np.empty((grid.n_tokens, 2))
    xy[:, 0] = (v + 0.5) / grid.cols
    xy[:, 1] = (u + 0.5) / grid.rows
    return xy


def reshape_scores_to_grid(scores: ArrayLike, grid: TokenGrid) -> FloatArray:
    s = as_scores(scores)
    if s.shape[0] != grid.n_tokens:
        raise DimensionError(
            f"{s.shape[0]} scores cannot fill a {grid.rows}x{grid.cols} grid"
        )
    return s.reshape(grid.rows, grid.cols)


# ---------------------------------------------------------------------------
# partitions


@dataclass(frozen=True)
class PartitionReport:
    """Outcome of :func:`validate_partition`; truthy when the labels form a partition."""

    n_tokens: int
    n_regions: int
    out_of_range: tuple[int, ...] = ()
    empty_regions: tuple[int, ...] = ()
    missing: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return not (self.out_of_range or self.empty_regions or self.missing)

    def __bool__(self) -> bool:
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        parts = []
        if self.missing:
            parts.append(f"unlabeled token indices {list(self.missing[:10])}")
        if self.out_of_range:
            parts.append(f"out-of-range labels at token indices {list(self.out_of_range[:10])}")
        if self.empty_regions:
            parts.append(f"empty regions {list(self.empty_regions[:10])}")
        return "; ".join(parts)


class PartitionError(UHRBatError, ValueError):
    def __init__(self, report: PartitionReport):
        super().__init__(f"invalid region partition: {report.describe()}")
        self.report = report


def validate_partition(
    labels: ArrayLike, n_regions: int | None = None, n_tokens: int | None = None
) -> PartitionReport:
    """Check that ``labels`` is a dense, disjoint cover of the token indices.

    ``n_regions`` defaults to ``max(label) + 1``.  When ``n_tokens`` is given,
    tokens beyond the end of ``labels`` are reported as missing.
    """
    lab = np.asarray(labels)
    if lab.ndim != 1:
        raise DimensionError(f"labels must be 1-D, got shape {lab.shape}")
    if lab.size and not np.issubdtype(lab.dtype, np.integer):
        if not np.array_equal(lab, np.round(lab)):
            raise DataError("labels must be integers")
    lab = lab.astype(np.int64, copy=False)
    n = lab.shape[0]
    if n_regions is None:
        n_regions = int(lab.max()) + 1 if n else 0
        n_regions = max(n_regions, 0)
    bad = (lab < 0) | (lab >= n_regions)
    counts = np.bincount(lab[~bad], minlength=n_regions)
    missing: tuple[int, ...] = ()
    if n_tokens is not None and n_tokens > n:
        missing = tuple(range(n, n_tokens))
    return PartitionReport(
        n_tokens=n if n_tokens is None else n_tokens,
        n_regions=n_regions,
        out_of_range=tuple(np.flatnonzero(bad).tolist()),
        empty_regions=tuple(np.flatnonzero(counts == 0).tolist()),
        missing=missing,
    )


def densify_labels(labels: ArrayLike) -> IntArray:
    """Relabel arbitrary integer ids to ``0..R-1`` in order of first occurrence."""
    lab = np.asarray(labels, dtype=np.int64)
    if lab.size == 0:
        return lab.copy()
    uniq, first, inverse = np.unique(lab, return_index=True, return_inverse=True)
    rank = np.empty(len(uniq), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(uniq))
    return rank[inverse.ravel()]


@dataclass(frozen=True, eq=False)
class RegionPartition:
    """Disjoint cover of ``n_tokens`` token indices by ``n_regions`` non-empty regions."""

    labels: IntArray
    n_regions: int

    def __post_init__(self) -> None:
        lab = np.array(self.labels, dtype=np.int64)
        report = validate_partition(lab, self.n_regions)
        if not report.ok:
            raise PartitionError(report)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_labels(cls, labels: ArrayLike) -> "RegionPartition":
        """Build from any integer labelling, densifying ids by first occurrence."""
        dense = densify_labels(labels)
        return cls(dense, int(dense.max()) + 1 if dense.size else 0)

    @property
    def n_tokens(self) -> int:
        return int(self.labels.shape[0])

    def regions(self) -> list[IntArray]:
        """Ascending token indices of each region."""
        order = np.argsort(self.labels, kind="stable")
        bounds = np.cumsum(np.bincount(self.labels, minlength=self.n_regions))[:-1]
        return np.split(order, bounds)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RegionPartition):
            return NotImplemented
        return self.n_regions == other.n_regions and np.array_equal(self.labels, other.labels)

    def __hash__(self) -> int:
        return hash((self.n_regions, self.labels.tobytes()))


# ---------------------------------------------------------------------------
# budgets and compressed output


@dataclass(frozen=True)
class BudgetSpec:
    global_budget: int
    per_scale: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_scale", tuple(int(b) for b in self.per_scale))
        if any(b < 1 for b in self.per_scale):
            raise ConfigurationError(f"every per-scale budget must be >= 1, got {self.per_scale}")
        if sum(self.per_scale) > self.global_budget:
            raise InfeasibleBudgetError(
                f"per-scale budgets sum to {sum(self.per_scale)} > global budget {self.global_budget}"
            )


class TokenKind(str, enum.Enum):
    KEPT = "kept"
    MERGED = "merged"


@dataclass(frozen=True, eq=False)
class TokenRecord:
    feature: FloatArray
    kind: TokenKind
    region: int
    source_indices: tuple[int, ...]
    score: float

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TokenRecord):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.region == other.region
            and self.source_indices == other.source_indices
            and self.score == other.score
            and np.array_equal(self.feature, other.feature)
        )


KIND_KEPT = 0
KIND_MERGED = 1


@dataclass(frozen=True, eq=False)
class CompressedSequence:
    """Ordered compressed tokens with provenance, stored column-wise.

    Record ``j`` cites ``source_indices[source_offsets[j]:source_offsets[j+1]]``.
    """

    features: FloatArray
    kinds: NDArray[np.int8]
    regions: IntArray
    scores: FloatArray
    source_offsets: IntArray
    source_indices: IntArray
    n_tokens: int

    def __post_init__(self) -> None:
        n = self.kinds.shape[0]
        if not (
            self.features.shape[0] == n
            and self.regions.shape[0] == n
            and self.scores.shape[0] == n
            and self.source_offsets.shape[0] == n + 1
        ):
            raise DimensionError("inconsistent column lengths in CompressedSequence")
        for arr in (self.features, self.kinds, self.regions, self.scores,
                    self.source_offsets, self.source_indices):
            arr.setflags(write=False)

    def __len__(self) -> int:
        return int(self.kinds.shape[0])

    @property
    def budget_used(self) -> int:
        return len(self)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def sources(self, j: int) -> IntArray:
        return self.source_indices[self.source_offsets[j]:self.source_offsets[j + 1]]

    def __getitem__(self, j: int) -> TokenRecord:
        if j < 0:
            j += len(self)
        if not 0 <= j < len(self):
            raise IndexError(j)
        return TokenRecord(
            feature=self.features[j],
            kind=TokenKind.MERGED if self.kinds[j] == KIND_MERGED else TokenKind.KEPT,
            region=int(self.regions[j]),
            source_indices=tuple(self.sources(j).tolist()),
            score=float(self.scores[j]),
        )

    def __iter__(self) -> Iterator[TokenRecord]:
        return (self[j] for j in range(len(self)))

    @property
    def n_kept(self) -> int:
        return int(np.count_nonzero(self.kinds == KIND_KEPT))

    @property
    def n_merged(self) -> int:
        return int(np.count_nonzero(self.kinds == KIND_MERGED))

    def head(self, n: int) -> "CompressedSequence":
        n = min(max(n, 0), len(self))
        end = int(self.source_offsets[n])
        return CompressedSequence(
            features=self.features[:n],
            kinds=self.kinds[:n],
            regions=self.regions[:n],
            scores=self.scores[:n],
            source_offsets=self.source_offsets[: n + 1],
            source_indices=self.source_indices[:end],
            n_tokens=self.n_tokens,
        )

    def structurally_equal(self, other: "CompressedSequence") -> bool:
        """Same record kinds, regions and provenance, in the same order."""
        return (
            len(self) == len(other)
            and self.n_tokens == other.n_tokens
            and np.array_equal(self.kinds, other.kinds)
            and np.array_equal(self.regions, other.regions)
            and np.array_equal(self.source_offsets, other.source_offsets)
            and np.array_equal(self.source_indices, other.source_indices)
        )

    @classmethod
    def from_records(cls, records: Sequence[TokenRecord], n_tokens: int, dim: int) -> "CompressedSequence":
        n = len(records)
        feats = np.empty((n, dim))
        kinds = np.empty(n, dtype=np.int8)
        regions = np.empty(n, dtype=np.int64)
        scores = np.empty(n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        flat: list[int] = []
        for j, rec in enumerate(records):
            feats[j] = rec.feature
            kinds[j] = KIND_MERGED if rec.kind == TokenKind.MERGED else KIND_KEPT
            regions[j] = rec.region
            scores[j] = rec.score
            flat.extend(rec.source_indices)
            offsets[j + 1] = len(flat)
        return cls(feats, kinds, regions, scores, offsets,
                   np.asarray(flat, dtype=np.int64), n_tokens)
