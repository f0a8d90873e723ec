"""Query-aware token importance and its transfer across scales."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from . import kernels
from .core import (
    BoundsError,
    ConfigurationError,
    DataError,
    DimensionError,
    FloatArray,
    TokenGrid,
    as_attention,
    as_scores,
    reshape_scores_to_grid,
)


def aggregate_text_attention(attn: ArrayLike) -> FloatArray:
    """Mean attention each visual token receives over all text tokens.

    ``attn`` is an ``(M, N)`` head-averaged text-to-vision map.
    """
    return kernels.column_mean(as_attention(attn))


@dataclass(frozen=True)
class ResizeMapping:
    """Half-pixel-center map from a ``dst`` grid cell onto ``src`` grid coordinates.

    With equal sizes every cell maps onto itself exactly.
    """

    src_rows: int
    src_cols: int
    dst_rows: int
    dst_cols: int

    def __post_init__(self) -> None:
        if min(self.src_rows, self.src_cols, self.dst_rows, self.dst_cols) < 1:
            raise ConfigurationError(f"all grid sizes must be >= 1: {self}")

    @classmethod
    def between(cls, src: TokenGrid, dst: TokenGrid, cells_per_token: int = 1) -> "ResizeMapping":
        return cls(src.rows, src.cols, dst.rows * cells_per_token, dst.cols * cells_per_token)

    def __call__(self, u: int, v: int) -> tuple[float, float]:
        return resize_map(self, u, v)

    def xs(self) -> FloatArray:
        return (np.arange(self.dst_cols) + 0.5) * self.src_cols / self.dst_cols - 0.5

    def ys(self) -> FloatArray:
        return (np.arange(self.dst_rows) + 0.5) * self.src_rows / self.dst_rows - 0.5


def resize_map(mapping: ResizeMapping, u: int, v: int) -> tuple[float, float]:
    if not (0 <= u < mapping.dst_rows and 0 <= v < mapping.dst_cols):
        raise BoundsError(
            f"cell ({u}, {v}) outside {mapping.dst_rows}x{mapping.dst_cols} target grid"
        )
    x = (v + 0.5) * mapping.src_cols / mapping.dst_cols - 0.5
    y = (u + 0.5) * mapping.src_rows / mapping.dst_rows - 0.5
    return x, y


def _as_grid3(grid: ArrayLike) -> FloatArray:
    g = np.ascontiguousarray(grid, dtype=np.float64)
    if g.ndim == 2:
        g = g[:, :, None]
    if g.ndim != 3 or g.shape[0] < 1 or g.shape[1] < 1:
        raise DimensionError(f"expected a (rows, cols[, channels]) map, got shape {g.shape}")
    if not np.isfinite(g).all():
        raise DataError("grid map contains non-finite values")
    return g


def bilinear_sample_many(grid: ArrayLike, xs: ArrayLike, ys: ArrayLike) -> FloatArray:
    """Bilinear samples of a grid map at points ``(xs[k], ys[k])``.

    ``x`` indexes columns and ``y`` rows.  Neighbour indices are clamped to the
    grid, so points outside it take edge values.  A 2-D map gives a 1-D
    result; a ``(rows, cols, C)`` map gives ``(P, C)``.
    """
    g = _as_grid3(grid)
    x = np.ascontiguousarray(xs, dtype=np.float64).ravel()
    y = np.ascontiguousarray(ys, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionError("xs and ys differ in length")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise DataError("sample coordinates must be finite")
    out = kernels.bilinear_gather(g, x, y)
    return out[:, 0] if np.ndim(grid) == 2 else out


def bilinear_sample(grid: ArrayLike, x: float, y: float) -> float:
    if not (math.isfinite(x) and math.isfinite(y)):
        raise DataError(f"sample coordinate ({x}, {y}) is not finite")
    g = _as_grid3(grid)
    if g.shape[2] != 1:
        raise DimensionError("bilinear_sample takes a single-channel map")
    return float(kernels.bilinear_gather(g, np.array([float(x)]), np.array([float(y)]))[0, 0])


def resample_grid(grid: ArrayLike, mapping: ResizeMapping) -> FloatArray:
    """Sample ``grid`` (the mapping's source) at every cell of the target grid.

    Returns ``(dst_rows * dst_cols, C)`` in row-major cell order.
    """
    g = _as_grid3(grid)
    if g.shape[:2] != (mapping.src_rows, mapping.src_cols):
        raise DimensionError(
            f"map is {g.shape[0]}x{g.shape[1]}, mapping expects "
            f"{mapping.src_rows}x{mapping.src_cols}"
        )
    ys, xs = np.meshgrid(mapping.ys(), mapping.xs(), indexing="ij")
    return kernels.bilinear_gather(g, xs.ravel(), ys.ravel())


def align_importance(
    anchor_scores: ArrayLike,
    anchor_grid: TokenGrid,
    target_grid: TokenGrid,
    cells_per_token: int = 1,
) -> FloatArray:
    """Transfer anchor-scale scores onto ``target_grid``.

    Each target token covers a ``cells_per_token x cells_per_token`` block of
    cells; its score is the mean of the bilinearly resampled anchor map over
    that block, summed in row-major cell order.
    """
    if cells_per_token < 1:
        raise ConfigurationError("cells_per_token must be >= 1")
    a_map = reshape_scores_to_grid(as_scores(anchor_scores), anchor_grid)
    c = cells_per_token
    mapping = ResizeMapping.between(anchor_grid, target_grid, c)
    cells = resample_grid(a_map, mapping)[:, 0]
    if c == 1:
        return cells
    blocks = cells.reshape(target_grid.rows, c, target_grid.cols, c)
    acc = np.zeros((target_grid.rows, target_grid.cols))
    for i in range(c):
        for j in range(c):
            acc += blocks[:, i, :, j]
    return (acc / (c * c)).ravel()
