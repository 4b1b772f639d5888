"""Matching-free image-to-point-cloud registration by scoring a pose cost volume."""

from .bench import BenchmarkReport, SuiteConfig, run_benchmark, summarize
from .cloudio import load_cloud, save_cloud, save_result, voxel_downsample
from .convnet import ConvScorer, ScorerParams, init_params, load_params, save_params
from .costvolume import (AggregatedMap, CostVolumeUnit, SceneInputs, aggregate_3d, aggregate_weights,
                         build_unit, build_volume)
from .engine import EngineConfig, NoOverlap, RegistrationResult, prepare_inputs, register, step
from .features import (FeatureBundle, OracleFeatureConfig, OracleProvider, oracle_confidence,
                       oracle_features, zero_out_inferior)
from .geometry import (CameraIntrinsics, Pose, compose_pose, euler_to_rotation, frustum_mask,
                       pose_errors, project)
from .losses import (CircleLossConfig, build_pos_neg_sets, circle_loss, cross_entropy_scores,
                     focal_loss, grad_check)
from .sampling import SamplingSpace, Schedule, nearest_candidate_index, sample_candidates, shrink
from .scenes import SceneConfig, ScenePair, generate_scene, perturb_problem
from .scoring import BaselineScorer, ScoreVector, baseline_score, score_batch
from .training import TrainConfig, train_scorer

__version__ = "0.1.0"
