"""Budget-aware visual token compression for ultra-high-resolution images.

Query-guided importance, region partitions, cross-scale score alignment,
region-wise preserve-and-merge and hard-budget serialization, on plain numpy
arrays.
"""

from .core import (
    BudgetSpec,
    CompressedSequence,
    RegionPartition,
    TokenGrid,
    TokenKind,
    TokenRecord,
    reshape_scores_to_grid,
    token_coordinates,
    validate_partition,
)
from .importance import (
    ResizeMapping,
    aggregate_text_attention,
    align_importance,
    bilinear_sample,
    resize_map,
)
from .kernels import BACKEND
from .multiscale import (
    EmbeddingTables,
    ScaleSpec,
    ScaleView,
    allocate_budgets,
    compress_multiscale,
    embed_tokens,
    interpolate_position_embedding,
)
from .partition import (
    PartitionConfig,
    PixelLabelMap,
    build_cluster_embeddings,
    kmeans_partition,
    labels_to_partition,
)
from .preserve_merge import (
    compress_scale,
    enforce_budget,
    merge_tokens,
    region_mean_importance,
    serialize_candidates,
    split_keep_merge,
)

__version__ = "0.1.0"
