"""Hybrid attribute-filtered approximate nearest neighbor search.

A fused feature+attribute distance, a pruned relation graph built by
neighbor descent, and a two-phase (coarse then refinement) query router.
"""

__version__ = "0.1.0"

from .dataset_io import (
    AttributeSchema,
    SampleStats,
    generate_attributes,
    generate_queries,
    generate_synthetic,
    read_attribute_file,
    read_groundtruth_file,
    read_mask_file,
    read_vecs_file,
    sample_statistics,
    write_attribute_file,
    write_groundtruth_file,
    write_mask_file,
    write_vecs_file,
)
from .errors import (
    CalibrationError,
    ConstraintError,
    FormatError,
    HybridAnnError,
    MappingError,
)
from .evaluate import (
    SweepRow,
    bench_sweep,
    oracle_auto_topk,
    oracle_hybrid_groundtruth,
    recall_at_k,
    write_sweep_csv,
)
from .graph import (
    BuildParams,
    RelationGraph,
    build,
    read_index,
    run_descent,
    semantic_prune,
    write_index,
)
from .metric import (
    MetricConfig,
    attribute_distance,
    attribute_distance_masked,
    compute_alpha,
    feature_distance,
    fused_distance,
    map_attributes,
    norm_scale,
    selection_margin,
)
from .router import SearchParams, SearchStats, entry_points, search, search_batch

__all__ = [
    "AttributeSchema",
    "BuildParams",
    "CalibrationError",
    "ConstraintError",
    "FormatError",
    "HybridAnnError",
    "MappingError",
    "MetricConfig",
    "RelationGraph",
    "SampleStats",
    "SearchParams",
    "SearchStats",
    "SweepRow",
    "attribute_distance",
    "attribute_distance_masked",
    "bench_sweep",
    "build",
    "compute_alpha",
    "entry_points",
    "feature_distance",
    "fused_distance",
    "generate_attributes",
    "generate_queries",
    "generate_synthetic",
    "map_attributes",
    "norm_scale",
    "oracle_auto_topk",
    "oracle_hybrid_groundtruth",
    "read_attribute_file",
    "read_groundtruth_file",
    "read_index",
    "read_mask_file",
    "read_vecs_file",
    "recall_at_k",
    "run_descent",
    "sample_statistics",
    "search",
    "search_batch",
    "selection_margin",
    "semantic_prune",
    "write_attribute_file",
    "write_groundtruth_file",
    "write_index",
    "write_mask_file",
    "write_sweep_csv",
    "write_vecs_file",
]
