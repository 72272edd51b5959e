"""Video token pruning: temporal segmentation, diversity-driven salient
selection and spatio-temporally regularized merging over raw token tensors."""

__version__ = "0.1.0"

from .accounting import ModelConfig, RetentionSchedule, equivalent_retention, layer_flops, llm_flops
from .dpc import ClusterParams, ClusterResult, Euclidean, SpatioTemporal, cluster, pool_clusters
from .merging import PruneConfig, PrunedOutput, Provenance, allocate_budget, merge_segment, prune_video
from .segmentation import SegConfig, SegmentPlan, optimal_segmentation, pool_static
from .selection import SelectParams, SalientSet, global_query_scores, mask_sinks, select_salient
from .strope import RopeConfig, cos_st, default_partition, dist_st, rotate
from .token_store import AttentionMap, SceneSpec, SinkSpec, TokenGrid, load_grid, save_grid, synth_video

__all__ = [
    "AttentionMap",
    "ClusterParams",
    "ClusterResult",
    "Euclidean",
    "ModelConfig",
    "PruneConfig",
    "PrunedOutput",
    "Provenance",
    "RetentionSchedule",
    "RopeConfig",
    "SalientSet",
    "SceneSpec",
    "SegConfig",
    "SegmentPlan",
    "SelectParams",
    "SinkSpec",
    "SpatioTemporal",
    "TokenGrid",
    "allocate_budget",
    "cluster",
    "cos_st",
    "default_partition",
    "dist_st",
    "equivalent_retention",
    "global_query_scores",
    "layer_flops",
    "llm_flops",
    "load_grid",
    "mask_sinks",
    "merge_segment",
    "optimal_segmentation",
    "pool_clusters",
    "pool_static",
    "prune_video",
    "rotate",
    "save_grid",
    "select_salient",
    "synth_video",
]
