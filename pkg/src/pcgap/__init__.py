"""pcgap: domain-gap scoring, labeled LiDAR simulation, and dataset tools
for semantic point clouds."""

from .core import (
    ClassMapping,
    ClassWeights,
    LabeledPoint,
    LabeledPointCloud,
    SemanticClass,
    default_weights,
    map_class,
    partition_by_class,
)
from .dataset import (
    EvalReport,
    MixResult,
    RatioMix,
    Region,
    SplitSpec,
    evaluate_segmentation,
    mix,
    most_misclassified,
    ratio_correlation,
    split,
)
from .errors import ConfigError, DegenerateDataError, FormatError, ParseError, PcgapError
from .io import ClassedMesh, RunConfig, read_cloud, read_config, read_mesh, write_cloud, write_report
from .metric import (
    GapReport,
    M3c2Params,
    MetricParams,
    c2c_distance,
    compose_score,
    dogss_pcl,
    m3c2_class_distance,
    mm3c2_distance,
    offset_sensitivity,
    voxel_miou,
)
from .simulate import NoiseModel, ScanConfig, SimulatedScan, Trajectory, apply_range_noise, simulate_scan
from .spatial import Bvh, NnIndex, VoxelGrid, build_bvh, build_index, estimate_normal, raycast, voxelize

__version__ = "0.1.0"

__all__ = [
    "Bvh",
    "ClassMapping",
    "ClassWeights",
    "ClassedMesh",
    "ConfigError",
    "DegenerateDataError",
    "EvalReport",
    "FormatError",
    "GapReport",
    "LabeledPoint",
    "LabeledPointCloud",
    "M3c2Params",
    "MetricParams",
    "MixResult",
    "NnIndex",
    "NoiseModel",
    "ParseError",
    "PcgapError",
    "RatioMix",
    "Region",
    "RunConfig",
    "ScanConfig",
    "SemanticClass",
    "SimulatedScan",
    "SplitSpec",
    "Trajectory",
    "VoxelGrid",
    "apply_range_noise",
    "build_bvh",
    "build_index",
    "c2c_distance",
    "compose_score",
    "default_weights",
    "dogss_pcl",
    "estimate_normal",
    "evaluate_segmentation",
    "m3c2_class_distance",
    "map_class",
    "mix",
    "mm3c2_distance",
    "most_misclassified",
    "offset_sensitivity",
    "partition_by_class",
    "ratio_correlation",
    "raycast",
    "read_cloud",
    "read_config",
    "read_mesh",
    "simulate_scan",
    "split",
    "voxel_miou",
    "voxelize",
    "write_cloud",
    "write_report",
]
