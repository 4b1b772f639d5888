"""Supervised training of the convolutional scorer.

Each step draws a scene and an iteration level, places the current pose
so that the ground truth lies inside that level's sampling grid, scores
every candidate and descends the cross-entropy against the candidate
nearest the truth.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .convnet import ScorerParams, backward_batch, forward_batch, init_params
from .costvolume import build_volume_arrays
from .engine import EngineConfig, prepare_inputs
from .features import OracleFeatureConfig
from .geometry import CameraIntrinsics, Pose, compose_pose, euler_to_rotation
from .losses import cross_entropy_scores
from .sampling import SamplingSpace, Schedule, candidate_arrays, nearest_candidate_index, sample_candidates
from .scenes import SceneConfig, generate_scene


def toy_scene_config(noise_sigma: float = 0.0, conf_flip_prob: float = 0.0,
                     outside_mode: str = "random") -> SceneConfig:
    """16x16 image, f = 8: the desk-scale training setting."""
    intr = CameraIntrinsics(fx=8.0, fy=8.0, cx=8.0, cy=8.0, width=16, height=16)
    return SceneConfig(intrinsics=intr, features=OracleFeatureConfig(
        f=8, noise_sigma=noise_sigma, outside_mode=outside_mode, conf_flip_prob=conf_flip_prob))


def toy_schedule() -> Schedule:
    """5 yaw x 3 x 3 translation candidates per level (45 units).

    Yaw spans +-144 deg so the five headings tile the circle without the
    duplicate +-180 pair.
    """
    space = SamplingSpace(rot_range=(144.0, 0.0, 0.0), trans_range=(5.0, 0.0, 5.0),
                          rot_counts=(5, 1, 1), trans_counts=(3, 1, 3))
    return Schedule(initial_space=space)


@dataclass(frozen=True)
class TrainConfig:
    n_scenes: int = 10
    seed: int = 0
    scene: SceneConfig = field(default_factory=toy_scene_config)
    schedule: Schedule = field(default_factory=toy_schedule)
    engine: EngineConfig = field(default_factory=EngineConfig)
    widths: tuple = (32, 32, 16, 8)
    steps: int = 200
    batch: int = 4
    optimizer: str = "adam"
    lr: float = 2e-3
    momentum: float = 0.9
    # momentum SGD halves its step when the running loss stops improving
    plateau_patience: int = 25
    plateau_factor: float = 0.5
    # Adam: lr x0.8 every decay_every steps
    decay_every: int = 50
    decay_factor: float = 0.8
    grad_clip: float = 10.0
    n_eval: int = 20

    def __post_init__(self):
        if self.n_scenes < 1:
            raise ValueError("training needs at least one scene")
        if self.steps < 0 or self.batch < 1:
            raise ValueError("steps must be >= 0 and batch >= 1")
        if self.optimizer not in ("momentum", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 1 <= len(self.widths) <= 10:
            raise ValueError("scorer depth must be between 1 and 10")

    def to_dict(self) -> dict:
        return {
            "n_scenes": self.n_scenes, "seed": self.seed, "scene": self.scene.to_dict(),
            "schedule": self.schedule.to_dict(), "engine": self.engine.to_dict(),
            "widths": list(self.widths), "steps": self.steps, "batch": self.batch,
            "optimizer": self.optimizer, "lr": self.lr, "momentum": self.momentum,
            "plateau_patience": self.plateau_patience, "plateau_factor": self.plateau_factor,
            "decay_every": self.decay_every, "decay_factor": self.decay_factor,
            "grad_clip": self.grad_clip, "n_eval": self.n_eval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "scene" in d:
            d["scene"] = SceneConfig.from_dict(d["scene"])
        if "schedule" in d:
            d["schedule"] = Schedule.from_dict(d["schedule"])
        if "engine" in d:
            d["engine"] = EngineConfig.from_dict(d["engine"])
        if "widths" in d:
            d["widths"] = tuple(d["widths"])
        return cls(**d)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Sample:
    """One supervised cost volume: scorer inputs ``(K, H, W, C)`` and the target index."""
    inputs: np.ndarray
    target: int


def draw_state(truth: Pose, space: SamplingSpace, rng: np.random.Generator) -> Pose:
    """A current pose whose grid around it contains ``truth`` (offsets uniform in the ranges)."""
    yaw, pitch, roll = (rng.uniform(-r, r) for r in space.rot_range)
    dt = np.array([rng.uniform(-r, r) for r in space.trans_range])
    # truth = current composed with (dR, dt)  <=>  current = (dR^T R, t - dt)
    dR = euler_to_rotation(yaw, pitch, roll)
    return compose_pose(Pose(dR.T @ truth.rotation, truth.translation), np.eye(3), -dt)


def make_sample(scene, inputs, space: SamplingSpace, rng) -> Sample:
    current = draw_state(scene.gt_pose, space, rng)
    Rs, ts = candidate_arrays(current, space)
    target = nearest_candidate_index(sample_candidates(current, space), scene.gt_pose, space)
    units = build_volume_arrays(Rs, ts, inputs, len(Rs))
    return Sample(np.stack([u.scorer_input() for u in units]), target)


def sample_loss(params: ScorerParams, sample: Sample, with_grad: bool = True):
    """Cross-entropy of one sample and, optionally, its parameter gradients."""
    if not with_grad:
        return cross_entropy_scores(forward_batch(params, sample.inputs, exact=False), sample.target)[0], None
    scores, tape = forward_batch(params, sample.inputs, keep=True, exact=False)
    value, dscores = cross_entropy_scores(scores, sample.target)
    return value, backward_batch(params, tape, dscores)


class _Scenes:
    """Training scenes with their prepared engine inputs, built lazily."""

    def __init__(self, config: TrainConfig, seed_offset: int = 0):
        self.config = config
        self.seed = config.seed + seed_offset
        self._cache = {}

    def get(self, i: int):
        if i not in self._cache:
            sc = generate_scene(self.config.scene, self.seed, i)
            inputs = prepare_inputs(sc.cloud, sc.intrinsics, sc.features, self.config.engine)
            self._cache[i] = (sc, inputs)
        return self._cache[i]


def eval_set(config: TrainConfig, scenes: _Scenes) -> list[Sample]:
    """Fixed evaluation samples spread over scenes and iteration levels."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 99]))
    out = []
    for k in range(config.n_eval):
        sc, inputs = scenes.get(k % config.n_scenes)
        level = k % config.schedule.iterations
        out.append(make_sample(sc, inputs, config.schedule.space_at(level), rng))
    return out


def mean_loss(params: ScorerParams, samples) -> float:
    return float(np.mean([sample_loss(params, s, with_grad=False)[0] for s in samples]))


@dataclass
class TrainResult:
    params: ScorerParams
    losses: list           # per-step mean batch loss
    eval_initial: float
    eval_final: float


def _clip(grads, limit):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if limit > 0 and norm > limit:
        return [g * (limit / norm) for g in grads]
    return grads


def train_scorer(config: TrainConfig, params: ScorerParams | None = None) -> TrainResult:
    scenes = _Scenes(config)
    feature_dim = config.scene.features.f
    params = params.copy() if params is not None else init_params(feature_dim, config.widths, config.seed)
    evals = eval_set(config, scenes)
    eval_initial = mean_loss(params, evals)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    arrays = [a.copy() for a in params.arrays()]
    vel = [np.zeros_like(a) for a in arrays]
    m2 = [np.zeros_like(a) for a in arrays]
    lr = config.lr
    best, since_best = math.inf, 0
    losses = []
    for step in range(1, config.steps + 1):
        total = [np.zeros_like(a) for a in arrays]
        batch_loss = 0.0
        for _ in range(config.batch):
            sc, inputs = scenes.get(int(rng.integers(config.n_scenes)))
            space = config.schedule.space_at(int(rng.integers(config.schedule.iterations)))
            value, grads = sample_loss(params, make_sample(sc, inputs, space, rng))
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at step {step}")
            batch_loss += value / config.batch
            for acc, g in zip(total, grads):
                acc += g / config.batch
        total = _clip(total, config.grad_clip)
        if config.optimizer == "momentum":
            for a, v, g in zip(arrays, vel, total):
                v *= config.momentum
                v -= lr * g
                a += v
        else:
            b1, b2 = 0.9, 0.999
            for a, m, s, g in zip(arrays, vel, m2, total):
                m *= b1
                m += (1 - b1) * g
                s *= b2
                s += (1 - b2) * g * g
                mh = m / (1 - b1 ** step)
                sh = s / (1 - b2 ** step)
                a -= lr * mh / (np.sqrt(sh) + 1e-8)
        params = params.with_arrays(arrays)
        losses.append(batch_loss)

        if config.optimizer == "momentum":
            window = float(np.mean(losses[-config.plateau_patience:]))
            if window < best - 1e-4:
                best, since_best = window, 0
            else:
                since_best += 1
                if since_best >= config.plateau_patience:
                    lr *= config.plateau_factor
                    since_best = 0
        elif config.decay_every and step % config.decay_every == 0:
            lr *= config.decay_factor
    return TrainResult(params, losses, eval_initial, mean_loss(params, evals))


def write_loss_csv(losses, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"])
        for i, v in enumerate(losses, start=1):
            w.writerow([i, f"{v:.9g}"])


def toy_engine(config: TrainConfig, params_path: str) -> EngineConfig:
    """Engine config that runs the trained scorer on the training schedule."""
    return replace(config.engine, scorer="conv", params_path=params_path, schedule=config.schedule)
