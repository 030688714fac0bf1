"""mitoseg: instance post-processing, metrics, loss math, and denoising for EM volumes."""

from ._kernels import backend_name, compiled_available
from .denoise import KernelField, apply_kernels, load_kernel_field, restore_slices, save_kernel_field
from .labeling import (
    InstanceTable,
    UnionFind,
    instance_table,
    label_components,
    label_components_chunked,
)
from .loss import foreground_ratio, total_loss, wbce, weight_map
from .metrics import (
    MatchPair,
    MatchReport,
    OverlapTable,
    SizeBins,
    ap_at_threshold,
    evaluate_instances,
    match_instances,
    overlap_table,
    semantic_metrics,
)
from .nets import (
    ConvSpec,
    NetConfig,
    acb_forward,
    conv3d,
    elu,
    init_params,
    load_params,
    param_count,
    resunet_forward,
    save_params,
    trilinear_upsample,
)
from .seedmap import SeedParams, make_seed_map
from .volume import ChunkGrid, Volume, iter_chunks, load_volume, save_volume

__version__ = "0.1.0"

__all__ = [
    "ChunkGrid",
    "ConvSpec",
    "InstanceTable",
    "KernelField",
    "MatchPair",
    "MatchReport",
    "NetConfig",
    "OverlapTable",
    "SeedParams",
    "SizeBins",
    "UnionFind",
    "Volume",
    "acb_forward",
    "ap_at_threshold",
    "apply_kernels",
    "backend_name",
    "compiled_available",
    "conv3d",
    "elu",
    "evaluate_instances",
    "foreground_ratio",
    "init_params",
    "instance_table",
    "iter_chunks",
    "label_components",
    "label_components_chunked",
    "load_kernel_field",
    "load_params",
    "load_volume",
    "make_seed_map",
    "match_instances",
    "overlap_table",
    "param_count",
    "restore_slices",
    "resunet_forward",
    "save_kernel_field",
    "save_params",
    "save_volume",
    "semantic_metrics",
    "total_loss",
    "trilinear_upsample",
    "wbce",
    "weight_map",
]
