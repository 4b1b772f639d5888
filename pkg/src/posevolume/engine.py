"""Iterative pose retrieval: sample candidates, score their cost-volume units,
move to the best one, shrink the sampling space, repeat."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .convnet import ConvScorer, ScorerParams, load_params
from .costvolume import SceneInputs, build_volume_arrays
from .features import FeatureBundle, zero_out_inferior
from .geometry import CameraIntrinsics, Pose, as_cloud, pose_errors
from .sampling import SamplingSpace, Schedule, candidate_arrays, shrink
from .scoring import BaselineScorer, ScoreVector, score_batch

log = logging.getLogger(__name__)


class NoOverlap(RuntimeError):
    """No candidate pose sees any weighted part of the cloud."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class EngineConfig:
    schedule: Schedule = field(default_factory=Schedule)
    scorer: str = "baseline"
    params_path: str | None = None
    zoif_enabled: bool = True
    use_w2d: bool = False
    use_w3d: bool = False
    zoif_threshold: float = 0.5
    segment_size: int = 81
    workers: int = 1
    # compiled aggregate-and-score path for the baseline scorer
    fused: bool = True

    def __post_init__(self):
        if self.segment_size < 1:
            raise ValueError("segment_size must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.scorer not in ("baseline", "conv"):
            raise ValueError(f"unknown scorer {self.scorer!r}")
        if self.scorer == "conv" and self.params_path is None:
            raise ValueError("conv scorer needs params_path")

    def to_dict(self) -> dict:
        return {
            "schedule": self.schedule.to_dict(), "scorer": self.scorer,
            "params_path": self.params_path, "zoif_enabled": self.zoif_enabled,
            "use_w2d": self.use_w2d, "use_w3d": self.use_w3d,
            "zoif_threshold": self.zoif_threshold, "segment_size": self.segment_size,
            "workers": self.workers, "fused": self.fused,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineConfig":
        d = dict(d)
        if "schedule" in d:
            d["schedule"] = Schedule.from_dict(d["schedule"])
        return cls(**d)


def prepare_inputs(cloud, intrinsics: CameraIntrinsics, bundle: FeatureBundle,
                   config: EngineConfig) -> SceneInputs:
    """Apply the ZOIF and weighting switches once per scene."""
    cloud = as_cloud(cloud)
    if bundle.f3d.shape[0] != cloud.shape[0]:
        raise ValueError(f"{bundle.f3d.shape[0]} point features for {cloud.shape[0]} points")
    if bundle.f2d.shape[:2] != intrinsics.shape:
        raise ValueError(f"feature map {bundle.f2d.shape[:2]} does not match image {intrinsics.shape}")
    f3d = (zero_out_inferior(bundle.f3d, bundle.conf3d, config.zoif_threshold)
           if config.zoif_enabled else bundle.f3d)
    w2d = bundle.conf2d if config.use_w2d else np.ones(intrinsics.shape)
    w3d = bundle.conf3d if config.use_w3d else np.ones(cloud.shape[0])
    return SceneInputs(np.ascontiguousarray(cloud), intrinsics,
                       np.ascontiguousarray(bundle.f2d), np.ascontiguousarray(f3d),
                       np.ascontiguousarray(w2d), np.ascontiguousarray(w3d),
                       use_wagg=config.use_w3d)


def make_scorer(config: EngineConfig, params: ScorerParams | None = None):
    if config.scorer == "baseline":
        return BaselineScorer()
    return ConvScorer(params if params is not None else load_params(config.params_path))


def score_candidates(Rs, ts, inputs: SceneInputs, scorer, config: EngineConfig) -> ScoreVector:
    seg = config.segment_size
    if isinstance(scorer, BaselineScorer) and config.fused:
        bounds = [(s, min(s + seg, len(Rs))) for s in range(0, len(Rs), seg)]
        run = lambda b: scorer.score_poses(inputs, Rs[b[0]:b[1]], ts[b[0]:b[1]])  # noqa: E731
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                parts = list(pool.map(run, bounds))
        else:
            parts = [run(b) for b in bounds]
        return ScoreVector.from_scores(np.concatenate(parts))
    volume = build_volume_arrays(Rs, ts, inputs, seg)
    return score_batch(volume, scorer, seg, config.workers)


def step(current: Pose, space: SamplingSpace, inputs: SceneInputs, scorer,
         config: EngineConfig) -> tuple[Pose, ScoreVector]:
    """One sample-score-select iteration. Raises :class:`NoOverlap` when every score is -inf."""
    Rs, ts = candidate_arrays(current, space)
    sv = score_candidates(Rs, ts, inputs, scorer, config)
    if not np.isfinite(sv.scores[sv.best_index]):
        raise NoOverlap("no candidate pose projects any weighted point into the image")
    k = sv.best_index
    return Pose(Rs[k], ts[k]), sv


@dataclass
class RegistrationResult:
    final_pose: Pose
    trace: list
    iterations_run: int

    def to_dict(self) -> dict:
        return {
            "final_pose": self.final_pose.to_dict(),
            "iterations_run": self.iterations_run,
            "trace": self.trace,
        }


def register(inputs: SceneInputs, config: EngineConfig, initial_pose: Pose | None = None,
             truth: Pose | None = None, scorer=None) -> RegistrationResult:
    """Run the full schedule from ``initial_pose`` (identity if omitted)."""
    scorer = scorer if scorer is not None else make_scorer(config)
    pose = initial_pose if initial_pose is not None else Pose.identity()
    space = config.schedule.initial_space
    trace = []
    for it in range(1, config.schedule.iterations + 1):
        try:
            pose, sv = step(pose, space, inputs, scorer, config)
        except NoOverlap as exc:
            raise NoOverlap(f"iteration {it}: {exc}", iteration=it) from None
        rec = {
            "iteration": it,
            "best_index": sv.best_index,
            "best_score": float(sv.scores[sv.best_index]),
            "rot_range": list(space.rot_range),
            "trans_range": list(space.trans_range),
            "pose": pose.to_dict(),
        }
        if truth is not None:
            rec["rre"], rec["rte"] = pose_errors(pose, truth)
        trace.append(rec)
        log.debug("iteration %d: best %d score %.6g", it, sv.best_index, rec["best_score"])
        space = shrink(space, config.schedule)
    return RegistrationResult(pose, trace, len(trace))
