"""Range-view lidar 3D detection pipeline (non-neural stages).

The package covers everything around the network: building range images,
encoding regression targets, dynamic classification supervision, losses with
analytical gradients, range-subsampled weighted NMS, detection metrics, and a
synthetic lidar simulator that serves as an end-to-end oracle.
"""

__version__ = "0.1.0"

from .geometry import (
    Cuboid,
    GroundTruthCuboid,
    Proposal,
    bev_corners,
    center_distance,
    contains_point,
    iou_3d,
    iou_3d_aligned,
    iou_bev,
    yaw_difference,
)
from .losses import DenseOutput, VflConfig
from .metrics import EvalConfig, EvalReport, EvalStyle, evaluate
from .postprocess import ProposalSet, RssConfig, WnmsConfig, extract_proposals, pipeline, rss, wnms
from .rangeimage import (
    AnchorPoints,
    LidarPoint,
    RangeImage,
    RangeImageSpec,
    anchor_points,
    project,
    unproject,
)
from .simulator import CorruptionSpec, SceneSpec, corrupt, generate, perfect_dense
from .supervision import SupervisionConfig, SupervisionMode, centerness_3d, dynamic_iou_bev
from .targets import FrameTargets, assign, decode, encode, encode_frame

__all__ = [
    "AnchorPoints",
    "CorruptionSpec",
    "Cuboid",
    "DenseOutput",
    "EvalConfig",
    "EvalReport",
    "EvalStyle",
    "FrameTargets",
    "GroundTruthCuboid",
    "LidarPoint",
    "Proposal",
    "ProposalSet",
    "RangeImage",
    "RangeImageSpec",
    "RssConfig",
    "SceneSpec",
    "SupervisionConfig",
    "SupervisionMode",
    "VflConfig",
    "WnmsConfig",
    "anchor_points",
    "assign",
    "bev_corners",
    "center_distance",
    "centerness_3d",
    "contains_point",
    "corrupt",
    "decode",
    "dynamic_iou_bev",
    "encode",
    "encode_frame",
    "evaluate",
    "extract_proposals",
    "generate",
    "iou_3d",
    "iou_3d_aligned",
    "iou_bev",
    "perfect_dense",
    "pipeline",
    "project",
    "rss",
    "unproject",
    "wnms",
    "yaw_difference",
]
