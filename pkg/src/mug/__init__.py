"""Multi-human graph mesh recovery: root-relative 3D body meshes and
inter-person depth ordering from multi-person 2D poses."""

from .body_template import (
    BodyTemplate,
    TemplateBank,
    build_synthetic_template,
    build_template_bank,
    load_template,
    save_template,
)
from .camera_depth import (
    CameraIntrinsics,
    default_intrinsics,
    depth_to_measure,
    measure_to_depth,
)
from .features import Pose2D, build_features
from .graph_builder import SceneGraph, assemble_scene_graph
from .losses import GroundTruth, LossWeights, compute_scene_loss
from .metrics import EvalReport, mpjpe, mpvpe, ordinal_depth_accuracy, pa_mpjpe, pck3d
from .network import NetworkConfig, forward, init_params
from .synthetic_data import NoiseModel, Scene, generate_scene, load_scene, save_scene
from .trainer import TrainConfig, evaluate_scenes, infer_scene, train

__version__ = "0.1.0"
