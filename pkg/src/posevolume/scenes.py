"""Synthetic registration problems: structured point clouds seen by a level camera.

World frame follows the camera convention (y down): the ground is the plane
``y = 0`` and objects extend towards negative y. The ground-truth camera
sits at eye height near the origin with a random heading, so a yaw about
the camera y axis is a rotation about the world up axis and camera-frame
x/z offsets are ground-plane translations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .features import FeatureBundle, OracleFeatureConfig, OracleProvider
from .geometry import CameraIntrinsics, Pose, compose_pose, euler_to_rotation, frustum_mask


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=20.0, fy=20.0, cx=32.0, cy=16.0, width=64, height=32)


@dataclass(frozen=True)
class SceneConfig:
    n_points: int = 8192
    extent: float = 40.0
    n_boxes: int = 14
    n_walls: int = 4
    camera_height: float = 1.7
    # camera center is drawn within this radius of the origin
    camera_jitter: float = 2.0
    min_coverage: float = 0.2
    max_retries: int = 50
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)
    features: OracleFeatureConfig = field(default_factory=OracleFeatureConfig)

    def __post_init__(self):
        if not self.extent > 0:
            raise ValueError(f"extent must be > 0, got {self.extent}")
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if not 0 <= self.min_coverage <= 1:
            raise ValueError("min_coverage must lie in [0, 1]")
        if self.camera_height <= 0:
            raise ValueError("camera_height must be > 0")

    def to_dict(self) -> dict:
        f = self.features
        return {
            "n_points": self.n_points, "extent": self.extent, "n_boxes": self.n_boxes,
            "n_walls": self.n_walls, "camera_height": self.camera_height,
            "camera_jitter": self.camera_jitter, "min_coverage": self.min_coverage,
            "max_retries": self.max_retries, "intrinsics": self.intrinsics.to_dict(),
            "features": {"f": f.f, "noise_sigma": f.noise_sigma, "outside_mode": f.outside_mode,
                         "conf_flip_prob": f.conf_flip_prob, "seed": f.seed},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        if "intrinsics" in d:
            d["intrinsics"] = CameraIntrinsics.from_dict(d["intrinsics"])
        if "features" in d:
            d["features"] = OracleFeatureConfig(**d["features"])
        return cls(**d)


@dataclass(frozen=True, eq=False)
class ScenePair:
    cloud: np.ndarray
    intrinsics: CameraIntrinsics
    gt_pose: Pose
    features: FeatureBundle
    scene_id: int
    seed: int


class SceneGenerationError(RuntimeError):
    pass


def _box_surface(rng, n, center, size):
    """``n`` points on the four sides and top of an axis-aligned box standing on y=0."""
    sx, sy, sz = size
    areas = np.array([sx * sy, sx * sy, sz * sy, sz * sy, sx * sz])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    a = rng.random(n)
    b = rng.random(n)
    pts = np.empty((n, 3))
    # x spans [-sx/2, sx/2], y spans [-sy, 0], z spans [-sz/2, sz/2]
    pts[:, 0] = (a - 0.5) * sx
    pts[:, 1] = -b * sy
    pts[:, 2] = (rng.random(n) - 0.5) * sz
    pts[face == 0, 2] = -sz / 2
    pts[face == 1, 2] = sz / 2
    side = (face == 2) | (face == 3)
    pts[side, 0] = np.where(face[side] == 2, -sx / 2, sx / 2)
    pts[side, 2] = (a[side] - 0.5) * sz
    top = face == 4
    pts[top, 1] = -sy
    pts[top, 2] = (b[top] - 0.5) * sz
    return pts + np.asarray(center)


def _structure(rng, config: SceneConfig, n: int) -> np.ndarray:
    """Boxes and walls placed away from the origin, sampled by surface area."""
    half = config.extent / 2
    shapes = []
    for i in range(config.n_boxes + config.n_walls):
        if i < config.n_boxes:
            size = (rng.uniform(1.0, 4.0), rng.uniform(1.0, 5.0), rng.uniform(1.0, 4.0))
        else:
            long_side = rng.uniform(6.0, 15.0)
            size = ((long_side, rng.uniform(2.0, 4.0), 0.4) if rng.random() < 0.5
                    else (0.4, rng.uniform(2.0, 4.0), long_side))
        r = rng.uniform(5.0, half * 0.9)
        phi = rng.uniform(0.0, 2 * math.pi)
        # keep the whole footprint inside the extent
        cx = float(np.clip(r * math.cos(phi), size[0] / 2 - half, half - size[0] / 2))
        cz = float(np.clip(r * math.sin(phi), size[2] / 2 - half, half - size[2] / 2))
        shapes.append(((cx, 0.0, cz), size))
    areas = np.array([2 * (s[0] + s[2]) * s[1] + s[0] * s[2] for _, s in shapes])
    counts = rng.multinomial(n, areas / areas.sum())
    return np.concatenate([_box_surface(rng, c, ctr, s) for (ctr, s), c in zip(shapes, counts)])


def _cloud(rng, config: SceneConfig) -> np.ndarray:
    n_struct = int(round(0.6 * config.n_points)) if config.n_boxes + config.n_walls else 0
    n_ground = config.n_points - n_struct
    half = config.extent / 2
    ground = np.column_stack([rng.uniform(-half, half, n_ground), np.zeros(n_ground),
                              rng.uniform(-half, half, n_ground)])
    parts = [ground]
    if n_struct:
        parts.append(_structure(rng, config, n_struct))
    return np.concatenate(parts)


def camera_pose(center, heading_deg: float) -> Pose:
    """Level camera at world ``center`` looking along ``heading_deg`` (yaw)."""
    R = euler_to_rotation(heading_deg, 0.0, 0.0).T
    return Pose(R, -R @ np.asarray(center, dtype=np.float64))


def generate_scene(config: SceneConfig, seed: int, scene_id: int = 0) -> ScenePair:
    """Deterministic scene whose ground-truth frustum holds >= min_coverage of the points."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, scene_id]))
    for _ in range(config.max_retries):
        cloud = _cloud(rng, config)
        for _ in range(8):
            r = config.camera_jitter * math.sqrt(rng.random())
            phi = rng.uniform(0.0, 2 * math.pi)
            center = (r * math.cos(phi), -config.camera_height, r * math.sin(phi))
            pose = camera_pose(center, rng.uniform(0.0, 360.0))
            coverage = frustum_mask(cloud, pose, config.intrinsics).mean()
            if coverage >= config.min_coverage and coverage > 0:
                bundle = OracleProvider(config.features)(cloud, config.intrinsics, pose,
                                                         seed=seed * 1_000_003 + scene_id)
                return ScenePair(cloud, config.intrinsics, pose, bundle, scene_id, seed)
    raise SceneGenerationError(
        f"could not reach {config.min_coverage:.0%} frustum coverage in {config.max_retries} tries")


def perturb_problem(scene: ScenePair, seed: int, yaw_range: float = 360.0,
                    max_offset: float = 10.0) -> Pose:
    """Initial pose: ground truth turned by a random yaw and shifted on the ground.

    The yaw is uniform in ``[0, yaw_range)`` degrees and the offset uniform in
    the disc of radius ``max_offset`` meters. Zero ranges return ``gt_pose``.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, scene.scene_id, 7]))
    yaw = rng.uniform(0.0, 1.0) * yaw_range
    r = max_offset * math.sqrt(rng.uniform(0.0, 1.0))
    phi = rng.uniform(0.0, 2 * math.pi)
    offset = np.array([r * math.cos(phi), 0.0, r * math.sin(phi)])
    return compose_pose(scene.gt_pose, euler_to_rotation(yaw, 0.0, 0.0), offset)
