"""Persistent object-level scene models for repeatedly scanned environments."""

from .cloud import PointCloud, concatenate, estimate_normals
from .config import (DetectionConfig, PipelineConfig, TransferConfig,
                     config_from_dict, config_to_dict, load_config)
from .fusion import FusionResult, fuse_object
from .icp import BatchIcpResult, icp_ground_batch, icp_point_to_plane
from .metrics import (GroundTruth, InstancePrediction, hungarian_assign,
                      instance_map50, instance_transfer_miou,
                      instances_from_labels, pose_pr, semantic_label_miou,
                      sequence_transfer_miou)
from .model import (Arrangement, ObjectInstance, PosedObject, STATIC_CLASS,
                    TemporalModel, UNASSIGNED_INSTANCE, bootstrap,
                    instance_segments, load_model, save_model, update_model)
from .objective import (ObjectiveContext, ObjectiveValue, ObjectiveWeights,
                        objective, voxelize_scene)
from .optimizer import AnnealConfig, evaluate_arrangement, optimize_arrangement
from .pipeline import (PipelineError, StepResult, evaluate_dirs, evaluate_scene,
                       induct_step, run_sequence)
from .planes import PlaneModel, detect_static, floor_height, mask_near_planes
from .plyio import PlyError, read_ply, write_ply
from .pose import GroundPose, wrap_angle
from .proposal import (ProposalConfig, ScoredPose, SceneContext, prepare_scene,
                       propose_poses, score_pose)
from .sampling import (HIERARCHY_SPACINGS, SamplingHierarchy, build_hierarchy,
                       poisson_disk_subsample)
from .spatial import SpatialIndex
from .synth import (Prototype, SceneScript, SyntheticSequence, default_suite,
                    equivalent_frame_poses, generate_sequence,
                    scene_permutations, script_from_dict, script_to_dict,
                    symmetric_translation)
from .transfer import TransferResult, smooth_labels, transfer_labels
from .viz import export_labeled, export_model, label_color

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig", "Arrangement", "BatchIcpResult", "DetectionConfig",
    "FusionResult", "GroundPose", "GroundTruth", "HIERARCHY_SPACINGS",
    "InstancePrediction", "ObjectInstance", "ObjectiveContext",
    "ObjectiveValue", "ObjectiveWeights", "PipelineConfig", "PipelineError",
    "PlaneModel", "PlyError", "PointCloud", "PosedObject", "ProposalConfig",
    "Prototype", "STATIC_CLASS", "SamplingHierarchy", "SceneContext",
    "SceneScript", "ScoredPose", "SpatialIndex", "StepResult",
    "SyntheticSequence", "TemporalModel", "TransferConfig", "TransferResult",
    "UNASSIGNED_INSTANCE", "bootstrap", "concatenate", "config_from_dict",
    "config_to_dict", "default_suite", "detect_static",
    "equivalent_frame_poses", "estimate_normals", "evaluate_arrangement",
    "evaluate_dirs", "evaluate_scene", "export_labeled", "export_model",
    "floor_height", "fuse_object", "generate_sequence", "hungarian_assign",
    "icp_ground_batch", "icp_point_to_plane", "induct_step",
    "instance_map50", "instance_segments", "instance_transfer_miou",
    "instances_from_labels", "label_color", "load_config", "load_model",
    "mask_near_planes", "objective", "optimize_arrangement",
    "poisson_disk_subsample", "pose_pr", "prepare_scene", "propose_poses",
    "read_ply", "run_sequence", "save_model", "scene_permutations",
    "score_pose", "script_from_dict", "script_to_dict",
    "semantic_label_miou", "sequence_transfer_miou", "smooth_labels",
    "symmetric_translation", "transfer_labels", "update_model",
    "voxelize_scene", "wrap_angle", "write_ply", "build_hierarchy",
]
