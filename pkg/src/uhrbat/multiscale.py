"""Multi-view orchestration: scale embeddings, per-scale budgets, per-scale compression."""

from __future__ import annotations

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Literal, Sequence

import numpy as np
from numpy.typing import ArrayLike

from .core import (
    BudgetWarning,
    CompressedSequence,
    ConfigurationError,
    DataError,
    DimensionError,
    FloatArray,
    InfeasibleBudgetError,
    RegionPartition,
    TokenGrid,
    UHRBatError,
    as_features,
)
from .importance import ResizeMapping, aggregate_text_attention, align_importance, resample_grid
from .partition import PartitionConfig, PixelLabelMap, partition_tokens
from .preserve_merge import compress_scale

# Reference presets, in scale order 672 / 1344 / 2688 / 4032 px.
PRESET_BUDGETS = {
    "edge": (80, 320, 600, 2000),
    "xlrs": (180, 1320, 1600, 8000),
    "rshr": (80, 320, 1600, 4000),
}
REFERENCE_RESOLUTIONS = (672, 1344, 2688, 4032)
DEFAULT_PATCH_SIZE = 14


@dataclass(frozen=True)
class ScaleSpec:
    scale_id: int
    grid: TokenGrid
    resolution: int | None = None
    budget: int | None = None

    @property
    def n_tokens(self) -> int:
        return self.grid.n_tokens


def scales_from_resolutions(
    resolutions: Sequence[int],
    patch_size: int = DEFAULT_PATCH_SIZE,
    budgets: Sequence[int] | None = None,
) -> list[ScaleSpec]:
    if budgets is not None and len(budgets) != len(resolutions):
        raise ConfigurationError("one budget per resolution is required")
    out = []
    for s, res in enumerate(resolutions, start=1):
        grid = TokenGrid.from_resolution(res, patch_size, scale_id=s)
        out.append(ScaleSpec(s, grid, res, None if budgets is None else int(budgets[s - 1])))
    validate_scales(out)
    return out


def validate_scales(scales: Sequence[ScaleSpec]) -> None:
    if not scales:
        raise ConfigurationError("at least one scale is required")
    for i, sc in enumerate(scales):
        if sc.scale_id != i + 1:
            raise ConfigurationError(f"scale ids must run 1..S in order, got {sc.scale_id} at {i}")
    for a, b in zip(scales, scales[1:]):
        if not (b.grid.rows >= a.grid.rows and b.grid.cols >= a.grid.cols
                and b.n_tokens > a.n_tokens):
            raise ConfigurationError(
                f"scale {b.scale_id} grid {b.grid.shape} does not grow from {a.grid.shape}"
            )


@dataclass(frozen=True, eq=False)
class EmbeddingTables:
    """Base positional embedding ``(rows, cols, d)`` and per-scale vectors ``(S, d)``."""

    base_pe: FloatArray
    scale_embeddings: FloatArray

    def __post_init__(self) -> None:
        pe = np.ascontiguousarray(self.base_pe, dtype=np.float64)
        q = np.ascontiguousarray(self.scale_embeddings, dtype=np.float64)
        if pe.ndim != 3 or pe.shape[0] < 1 or pe.shape[1] < 1:
            raise DimensionError(f"base_pe must be (rows, cols, d), got {pe.shape}")
        if q.ndim != 2 or q.shape[1] != pe.shape[2]:
            raise DimensionError(f"scale_embeddings must be (S, {pe.shape[2]}), got {q.shape}")
        if not (np.isfinite(pe).all() and np.isfinite(q).all()):
            raise DataError("embedding tables contain non-finite entries")
        object.__setattr__(self, "base_pe", pe)
        object.__setattr__(self, "scale_embeddings", q)

    @classmethod
    def zeros(cls, dim: int, n_scales: int, base_rows: int = 1, base_cols: int = 1) -> "EmbeddingTables":
        return cls(np.zeros((base_rows, base_cols, dim)), np.zeros((n_scales, dim)))

    @property
    def dim(self) -> int:
        return int(self.base_pe.shape[2])

    @property
    def n_scales(self) -> int:
        return int(self.scale_embeddings.shape[0])


def interpolate_position_embedding(tables: EmbeddingTables, target_grid: TokenGrid) -> FloatArray:
    pe = tables.base_pe
    mapping = ResizeMapping(pe.shape[0], pe.shape[1], target_grid.rows, target_grid.cols)
    return resample_grid(pe, mapping)


def embed_tokens(features: ArrayLike, tables: EmbeddingTables, grid: TokenGrid) -> FloatArray:
    """Features plus the positional embedding resampled to ``grid`` plus the scale row for ``grid.scale_id``."""
    e = as_features(features, grid.n_tokens)
    if e.shape[1] != tables.dim:
        raise DimensionError(f"features have d={e.shape[1]}, tables have d={tables.dim}")
    if grid.scale_id > tables.n_scales:
        raise DimensionError(f"no scale embedding for scale {grid.scale_id}")
    p = interpolate_position_embedding(tables, grid)
    q = tables.scale_embeddings[grid.scale_id - 1]
    return e + p + q


def allocate_budgets(
    global_budget: int | None,
    scales: Sequence[ScaleSpec],
    region_counts: Sequence[int],
    policy: Literal["preset", "proportional"] = "preset",
    *,
    strict: bool = True,
) -> list[int]:
    """Per-scale budgets with ``sum <= global_budget``.

    ``preset`` returns each ``ScaleSpec.budget`` verbatim.  ``proportional``
    splits ``global_budget`` in proportion to token counts, never below a
    scale's region count, rounding down and giving the remainder to the
    largest scale.
    """
    if len(region_counts) != len(scales):
        raise ConfigurationError("one region count per scale is required")
    floors = [max(1, int(r)) for r in region_counts]
    if policy == "preset":
        budgets = [sc.budget for sc in scales]
        if any(b is None for b in budgets):
            raise ConfigurationError("preset policy needs a budget on every scale")
        budgets = [int(b) for b in budgets]
        if any(b < 1 for b in budgets):
            raise ConfigurationError(f"budgets must be >= 1, got {budgets}")
        if global_budget is not None and sum(budgets) > global_budget:
            raise InfeasibleBudgetError(
                f"preset budgets sum to {sum(budgets)} > global budget {global_budget}"
            )
        cap = sum(budgets) if global_budget is None else global_budget
        if sum(floors) > cap:
            raise InfeasibleBudgetError(f"region counts sum to {sum(floors)} > budget {cap}")
        short = [(sc.scale_id, b, r) for sc, b, r in zip(scales, budgets, floors) if b < r]
        if short:
            msg = ", ".join(f"scale {s}: B={b} < R={r}" for s, b, r in short)
            if strict:
                raise InfeasibleBudgetError(f"budget below region count ({msg})")
            warnings.warn(f"budget below region count ({msg})", BudgetWarning, stacklevel=2)
        return budgets
    if policy != "proportional":
        raise ConfigurationError(f"unknown budget policy {policy!r}")
    if global_budget is None:
        raise ConfigurationError("proportional policy needs a global budget")
    if sum(floors) > global_budget:
        raise InfeasibleBudgetError(
            f"region counts sum to {sum(floors)} > global budget {global_budget}"
        )
    sizes = [sc.n_tokens for sc in scales]
    pinned: dict[int, int] = {}
    while True:
        free = [i for i in range(len(scales)) if i not in pinned]
        if not free:
            share = {}
            break
        pool = global_budget - sum(pinned.values())
        supply = sum(sizes[i] for i in free)
        share = {i: pool * sizes[i] // supply for i in free}
        low = [i for i in free if share[i] < floors[i]]
        if not low:
            break
        for i in low:
            pinned[i] = floors[i]
    budgets = [pinned.get(i, share.get(i, 0)) for i in range(len(scales))]
    largest = max(range(len(scales)), key=lambda i: (sizes[i], i))
    budgets[largest] += global_budget - sum(budgets)
    return budgets


@dataclass
class ScaleResult:
    scale: ScaleSpec
    embedded: FloatArray
    scores: FloatArray
    partition: RegionPartition
    budget: int
    sequence: CompressedSequence
    timing_ms: dict[str, float] = field(default_factory=dict)


@dataclass
class MultiScaleResult:
    anchor_scores: FloatArray
    scales: list[ScaleResult]
    timing_ms: dict[str, float] = field(default_factory=dict)

    @property
    def sequences(self) -> list[CompressedSequence]:
        return [r.sequence for r in self.scales]

    @property
    def budgets(self) -> list[int]:
        return [r.budget for r in self.scales]

    def concatenated(self) -> FloatArray:
        return np.concatenate([r.sequence.features for r in self.scales], axis=0)


@dataclass(frozen=True, eq=False)
class ScaleView:
    """Precomputed encoder tokens for one resized view."""

    features: FloatArray
    scale: ScaleSpec
    label_map: PixelLabelMap | None = None


def _annotate(exc: Exception, scale_id: int) -> Exception:
    if isinstance(exc, UHRBatError) and not getattr(exc, "scale_id", None):
        exc.args = (f"scale {scale_id}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        exc.scale_id = scale_id
    return exc


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1e3


def _prepare_scale(view: ScaleView, anchor_scores, anchor_grid, tables, cfg):
    sc = view.scale
    timing = {}
    t0 = time.perf_counter()
    h = embed_tokens(view.features, tables, sc.grid)
    timing["embed"] = _ms(t0)
    t0 = time.perf_counter()
    scores = align_importance(anchor_scores, anchor_grid, sc.grid)
    timing["align"] = _ms(t0)
    t0 = time.perf_counter()
    # partition on the scale's own encoder features; per-scale seed derived from the base seed
    part = partition_tokens(view.features, sc.grid, replace(cfg, seed=cfg.seed + sc.scale_id - 1),
                            view.label_map)
    timing["partition"] = _ms(t0)
    return h, scores, part, timing


def compress_multiscale(
    views: Sequence[ScaleView],
    anchor_attention: ArrayLike,
    tables: EmbeddingTables | None,
    partition_cfg: PartitionConfig,
    *,
    policy: Literal["preset", "proportional"] = "preset",
    global_budget: int | None = None,
    strict: bool = True,
    threads: int = 1,
) -> MultiScaleResult:
    """Embed, align, partition and compress every scale.

    Results come back anchor first in ascending scale order regardless of
    ``threads``.  ``tables=None`` means all-zero embedding tables.
    """
    scales = [v.scale for v in views]
    validate_scales(scales)
    anchor_grid = scales[0].grid
    t0 = time.perf_counter()
    anchor_scores = aggregate_text_attention(anchor_attention)
    if anchor_scores.shape[0] != anchor_grid.n_tokens:
        raise DimensionError(
            f"attention covers {anchor_scores.shape[0]} tokens, anchor grid has {anchor_grid.n_tokens}"
        )
    timing = {"importance": _ms(t0)}
    if tables is None:
        dim = np.shape(views[0].features)[1]
        tables = EmbeddingTables.zeros(dim, len(views))

    def prep(view):
        try:
            return _prepare_scale(view, anchor_scores, anchor_grid, tables, partition_cfg)
        except Exception as exc:
            raise _annotate(exc, view.scale.scale_id)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        prepared = list(pool.map(prep, views))

    region_counts = [p[2].n_regions for p in prepared]
    budgets = allocate_budgets(global_budget, scales, region_counts, policy, strict=strict)

    def run(i):
        h, scores, part, tm = prepared[i]
        t = time.perf_counter()
        try:
            # allocate_budgets already warned about short budgets
            seq = compress_scale(h, scores, part, budgets[i], strict=strict, quiet=True)
        except Exception as exc:
            raise _annotate(exc, scales[i].scale_id)
        tm = dict(tm, compress=_ms(t))
        return ScaleResult(scales[i], h, scores, part, budgets[i], seq, tm)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, range(len(views))))
    for r in results:
        for k, v in r.timing_ms.items():
            timing[k] = timing.get(k, 0.0) + v
    return MultiScaleResult(anchor_scores, results, timing)
