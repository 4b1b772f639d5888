"""Per-candidate cost-volume units: projected 3D features and weights next to the image features."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import _kernels
from .geometry import CameraIntrinsics, Pose, as_cloud


@dataclass(frozen=True, eq=False)
class AggregatedMap:
    features: np.ndarray    # (H, W, f) mean of projected 3D features
    occupancy: np.ndarray   # (H, W) int, points per pixel
    weights: np.ndarray     # (H, W) summed 3D weights


@dataclass(frozen=True, eq=False)
class CostVolumeUnit:
    image_features: np.ndarray   # (H, W, f)
    aggregated: AggregatedMap
    image_weights: np.ndarray    # (H, W)
    candidate_index: int

    @property
    def channels(self) -> np.ndarray:
        """Image features and aggregated features concatenated, ``(H, W, 2f)``."""
        return np.concatenate([self.image_features, self.aggregated.features], axis=-1)

    def scorer_input(self) -> np.ndarray:
        """``(H, W, 2f + 2)``: features, then image weights, then aggregated weights."""
        return np.concatenate([
            self.image_features, self.aggregated.features,
            self.image_weights[..., None], self.aggregated.weights[..., None],
        ], axis=-1)


def _stack_poses(poses: Sequence[Pose]):
    Rs = np.ascontiguousarray([p.rotation for p in poses], dtype=np.float64).reshape(-1, 3, 3)
    ts = np.ascontiguousarray([p.translation for p in poses], dtype=np.float64).reshape(-1, 3)
    return Rs, ts


def aggregate_batch(cloud: np.ndarray, features: np.ndarray, weights: np.ndarray,
                    Rs: np.ndarray, ts: np.ndarray, intrinsics: CameraIntrinsics):
    """Aggregate for K stacked poses. Returns ``(feat (K,H,W,f), occ (K,H,W), w (K,H,W))``."""
    H, W = intrinsics.height, intrinsics.width
    feats = np.ascontiguousarray(features, dtype=np.float64)
    K, f = Rs.shape[0], feats.shape[1]
    out_feat = np.zeros((K, H * W, f))
    out_occ = np.zeros((K, H * W), dtype=np.int64)
    out_w = np.zeros((K, H * W))
    _kernels.aggregate(np.ascontiguousarray(cloud, dtype=np.float64), Rs, ts,
                       float(intrinsics.fx), float(intrinsics.fy),
                       float(intrinsics.cx), float(intrinsics.cy), H, W,
                       feats, np.ascontiguousarray(weights, dtype=np.float64),
                       out_feat, out_occ, out_w)
    return (out_feat.reshape(K, H, W, f), out_occ.reshape(K, H, W), out_w.reshape(K, H, W))


def _check_n(cloud, arr, what):
    if arr.shape[0] != cloud.shape[0]:
        raise ValueError(f"{arr.shape[0]} {what} for {cloud.shape[0]} points")


def aggregate_3d(cloud, features, pose: Pose, intrinsics: CameraIntrinsics) -> AggregatedMap:
    """Mean 3D feature per pixel under ``pose``; zero where no point lands.

    The returned ``weights`` plane holds the occupancy as a float (every
    point weighted 1); use :func:`aggregate_weights` for confidence sums.
    """
    cloud = as_cloud(cloud)
    features = np.asarray(features, dtype=np.float64)
    _check_n(cloud, features, "features")
    Rs, ts = _stack_poses([pose])
    feat, occ, w = aggregate_batch(cloud, features, np.ones(cloud.shape[0]), Rs, ts, intrinsics)
    return AggregatedMap(feat[0], occ[0], w[0])


def aggregate_weights(cloud, weights, pose: Pose, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Sum (not mean) of per-point weights per pixel."""
    cloud = as_cloud(cloud)
    weights = np.asarray(weights, dtype=np.float64)
    _check_n(cloud, weights, "weights")
    Rs, ts = _stack_poses([pose])
    _, _, w = aggregate_batch(cloud, np.zeros((cloud.shape[0], 1)), weights, Rs, ts, intrinsics)
    return w[0]


def build_unit(image_features, image_weights, aggregated: AggregatedMap, index: int) -> CostVolumeUnit:
    image_features = np.asarray(image_features, dtype=np.float64)
    image_weights = np.asarray(image_weights, dtype=np.float64)
    hw = image_features.shape[:2]
    if (aggregated.features.shape != image_features.shape
            or image_weights.shape != hw
            or aggregated.occupancy.shape != hw
            or aggregated.weights.shape != hw):
        raise ValueError(
            f"unit shape mismatch: image {image_features.shape}, weights {image_weights.shape}, "
            f"aggregated {aggregated.features.shape}/{aggregated.occupancy.shape}")
    return CostVolumeUnit(image_features, aggregated, image_weights, int(index))


@dataclass(frozen=True, eq=False)
class SceneInputs:
    """Everything per-scene the iterative loop needs, prepared once.

    ``f3d`` and the weight arrays already reflect the ZOIF/weighting switches.
    With ``use_wagg`` off, a unit's aggregated weight plane is the occupancy
    indicator instead of the confidence sum.
    """

    cloud: np.ndarray
    intrinsics: CameraIntrinsics
    f2d: np.ndarray
    f3d: np.ndarray
    w2d: np.ndarray
    w3d: np.ndarray
    use_wagg: bool = True


@dataclass
class VolumeStats:
    units_built: int = 0
    peak_materialized: int = 0


def build_volume(candidates: Sequence[Pose], inputs: SceneInputs, segment_size: int,
                 stats: VolumeStats | None = None) -> Iterator[CostVolumeUnit]:
    """Yield one unit per candidate, in order, at most ``segment_size`` materialized at a time."""
    if segment_size < 1:
        raise ValueError("segment_size must be >= 1")
    Rs, ts = _stack_poses(candidates) if len(candidates) else (np.zeros((0, 3, 3)), np.zeros((0, 3)))
    yield from build_volume_arrays(Rs, ts, inputs, segment_size, stats)


def build_volume_arrays(Rs, ts, inputs: SceneInputs, segment_size: int,
                        stats: VolumeStats | None = None) -> Iterator[CostVolumeUnit]:
    if segment_size < 1:
        raise ValueError("segment_size must be >= 1")
    for start in range(0, Rs.shape[0], segment_size):
        stop = min(start + segment_size, Rs.shape[0])
        feat, occ, w = aggregate_batch(inputs.cloud, inputs.f3d, inputs.w3d,
                                       Rs[start:stop], ts[start:stop], inputs.intrinsics)
        if not inputs.use_wagg:
            w = (occ > 0).astype(np.float64)
        if stats is not None:
            stats.peak_materialized = max(stats.peak_materialized, stop - start)
            stats.units_built += stop - start
        for i in range(stop - start):
            yield CostVolumeUnit(inputs.f2d, AggregatedMap(feat[i], occ[i], w[i]),
                                 inputs.w2d, start + i)
        del feat, occ, w
