"""ASCII XYZ point clouds, preprocessing filters and JSON output helpers."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .geometry import as_cloud

VOXEL_SIZE = 0.1
MAX_POINTS = 40960
SIG_DIGITS = 9


def load_cloud(path) -> np.ndarray:
    """Read one ``x y z`` triple per line. Blank lines and ``#`` comments are skipped."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            try:
                xyz = [float(p) for p in parts]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed number in {text!r}") from None
            if not all(math.isfinite(c) for c in xyz):
                raise ValueError(f"{path}:{lineno}: non-finite coordinate")
            rows.append(xyz)
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def save_cloud(cloud, path) -> None:
    cloud = as_cloud(cloud)
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in cloud:
            fh.write(f"{x:.{SIG_DIGITS}g} {y:.{SIG_DIGITS}g} {z:.{SIG_DIGITS}g}\n")


def voxel_downsample(cloud, voxel: float = VOXEL_SIZE) -> np.ndarray:
    """One point per occupied voxel: the centroid of its members, in first-seen voxel order."""
    if not voxel > 0:
        raise ValueError("voxel size must be > 0")
    cloud = as_cloud(cloud)
    if len(cloud) == 0:
        return cloud.copy()
    keys = np.floor(cloud / voxel).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    sums = np.zeros((len(first), 3))
    np.add.at(sums, inverse, cloud)
    centroids = sums / np.bincount(inverse)[:, None]
    return centroids[np.argsort(first, kind="stable")]


def random_subsample(cloud, n: int = MAX_POINTS, seed: int = 0) -> np.ndarray:
    """Uniform subset of ``n`` points (order preserved); smaller clouds are returned whole."""
    cloud = as_cloud(cloud)
    if len(cloud) <= n:
        return cloud.copy()
    idx = np.sort(np.random.default_rng(seed).choice(len(cloud), size=n, replace=False))
    return cloud[idx]


def preprocess(cloud, voxel: float | None = VOXEL_SIZE, max_points: int | None = MAX_POINTS,
               seed: int = 0) -> np.ndarray:
    if voxel is not None:
        cloud = voxel_downsample(cloud, voxel)
    if max_points is not None:
        cloud = random_subsample(cloud, max_points, seed)
    return as_cloud(cloud)


def round_sig(obj, digits: int = SIG_DIGITS):
    """Round every float in a JSON-like tree to ``digits`` significant digits.

    Non-finite floats become ``None`` so the output stays strict JSON.
    """
    if isinstance(obj, dict):
        return {k: round_sig(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_sig(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return round_sig(obj.tolist(), digits)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(f"{x:.{digits}g}") if math.isfinite(x) else None
    return obj


def dumps(obj, indent: int | None = 2) -> str:
    return json.dumps(round_sig(obj), indent=indent, sort_keys=True, allow_nan=False)


def write_json(obj, path) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="utf-8")


def save_result(result, path) -> None:
    """Write a registration result (anything with ``to_dict``) as JSON."""
    write_json(result.to_dict() if hasattr(result, "to_dict") else result, path)
