"""Feature providers, inferior-feature zeroing and the flat tensor file format.

The registration engine only needs four arrays per scene: a 2D feature map,
per-point 3D features, and the two frustum confidences. Anything that can
produce a :class:`FeatureBundle` can drive it; :class:`OracleProvider` is a
synthetic stand-in whose feature similarity coincides with geometric
alignment by construction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Protocol

import numpy as np

from .geometry import CameraIntrinsics, Pose, project_points

MAGIC = b"MFI2P\0"


@dataclass(frozen=True, eq=False)
class FeatureBundle:
    f2d: np.ndarray      # (H, W, f)
    f3d: np.ndarray      # (N, f)
    conf2d: np.ndarray   # (H, W) in [0, 1]
    conf3d: np.ndarray   # (N,) in [0, 1]

    def __post_init__(self):
        f2d = np.asarray(self.f2d, dtype=np.float64)
        f3d = np.asarray(self.f3d, dtype=np.float64)
        c2 = np.asarray(self.conf2d, dtype=np.float64)
        c3 = np.asarray(self.conf3d, dtype=np.float64)
        if f2d.ndim != 3 or f3d.ndim != 2 or f2d.shape[2] != f3d.shape[1]:
            raise ValueError(f"feature shapes disagree: 2D {f2d.shape}, 3D {f3d.shape}")
        if f2d.shape[2] < 1:
            raise ValueError("feature dimension must be >= 1")
        if c2.shape != f2d.shape[:2] or c3.shape != f3d.shape[:1]:
            raise ValueError(f"confidence shapes {c2.shape}, {c3.shape} do not match features")
        for name, a in (("f2d", f2d), ("f3d", f3d), ("conf2d", c2), ("conf3d", c3)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} has non-finite values")
        for name, a in (("conf2d", c2), ("conf3d", c3)):
            if a.size and (a.min() < 0 or a.max() > 1):
                raise ValueError(f"{name} must lie in [0, 1]")
        object.__setattr__(self, "f2d", f2d)
        object.__setattr__(self, "f3d", f3d)
        object.__setattr__(self, "conf2d", c2)
        object.__setattr__(self, "conf3d", c3)

    @property
    def dim(self) -> int:
        return self.f2d.shape[2]


class FeatureProvider(Protocol):
    def __call__(self, cloud: np.ndarray, intrinsics: CameraIntrinsics,
                 gt_pose: Pose, seed: int) -> FeatureBundle: ...


@dataclass(frozen=True)
class OracleFeatureConfig:
    f: int = 32
    noise_sigma: float = 0.0
    outside_mode: str = "random"
    conf_flip_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.f < 4:
            raise ValueError(f"oracle features need f >= 4, got {self.f}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 0 <= self.conf_flip_prob <= 0.5:
            raise ValueError("conf_flip_prob must lie in [0, 0.5]")
        if self.outside_mode not in ("random", "zero"):
            raise ValueError(f"outside_mode must be 'random' or 'zero', got {self.outside_mode!r}")


SHORTEST_WAVELENGTH = 8.0


def encoding_frequencies(n_freq: int, height: int, width: int) -> np.ndarray:
    """Angular frequencies, geometric in wavelength from 4*max(H, W) down to SHORTEST_WAVELENGTH px."""
    longest = 4.0 * max(height, width)
    shortest = min(SHORTEST_WAVELENGTH, longest)
    if n_freq == 1:
        wavelengths = np.array([longest])
    else:
        wavelengths = longest * (shortest / longest) ** (np.arange(n_freq) / (n_freq - 1))
    return 2.0 * np.pi / wavelengths


def positional_encoding(u, v, f: int, height: int, width: int) -> np.ndarray:
    """Unit-norm sinusoidal encoding of integer pixel indices, shape ``(..., f)``.

    Layout per frequency k: ``sin(w_k u), cos(w_k u), sin(w_k v), cos(w_k v)``;
    the ``f % 4`` trailing channels are zero.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    n_freq = f // 4
    w = encoding_frequencies(n_freq, height, width)
    out = np.zeros(u.shape + (f,))
    au = u[..., None] * w
    av = v[..., None] * w
    out[..., 0:4 * n_freq:4] = np.sin(au)
    out[..., 1:4 * n_freq:4] = np.cos(au)
    out[..., 2:4 * n_freq:4] = np.sin(av)
    out[..., 3:4 * n_freq:4] = np.cos(av)
    # every (sin, cos) pair has unit norm
    return out / np.sqrt(2.0 * n_freq)


def _rng(config_seed: int, scene_seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config_seed, scene_seed, stream]))


def oracle_features(cloud: np.ndarray, intrinsics: CameraIntrinsics, gt_pose: Pose,
                    config: OracleFeatureConfig, scene_seed: int = 0):
    """Return ``(f2d, f3d)`` built from ground-truth pixel encodings."""
    H, W, f = intrinsics.height, intrinsics.width, config.f
    vv, uu = np.mgrid[0:H, 0:W]
    f2d = positional_encoding(uu, vv, f, H, W)

    u, v, inside = project_points(cloud, gt_pose, intrinsics)
    rng = _rng(config.seed, scene_seed, 0)
    n = cloud.shape[0]
    f3d = np.zeros((n, f))
    f3d[inside] = f2d[v[inside], u[inside]]
    # draws happen unconditionally so streams do not depend on the config flags
    noise = rng.normal(0.0, 1.0, size=(n, f))
    outside = rng.normal(0.0, 1.0, size=(n, f))
    if config.noise_sigma > 0:
        f3d[inside] += config.noise_sigma * noise[inside]
    if config.outside_mode == "random":
        outside /= np.linalg.norm(outside, axis=1, keepdims=True)
        f3d[~inside] = outside[~inside]
    return f2d, f3d


def oracle_confidence(cloud: np.ndarray, intrinsics: CameraIntrinsics, gt_pose: Pose,
                      config: OracleFeatureConfig, scene_seed: int = 0):
    """Return ``(conf2d, conf3d)``: ground-truth frustum labels with random flips."""
    H, W = intrinsics.height, intrinsics.width
    u, v, inside = project_points(cloud, gt_pose, intrinsics)
    conf3d = inside.astype(np.float64)
    conf2d = np.zeros((H, W))
    conf2d[v[inside], u[inside]] = 1.0

    rng = _rng(config.seed, scene_seed, 1)
    flip3 = rng.random(conf3d.shape) < config.conf_flip_prob
    flip2 = rng.random(conf2d.shape) < config.conf_flip_prob
    conf3d[flip3] = 1.0 - conf3d[flip3]
    conf2d[flip2] = 1.0 - conf2d[flip2]
    return conf2d, conf3d


@dataclass(frozen=True)
class OracleProvider:
    config: OracleFeatureConfig = OracleFeatureConfig()

    def __call__(self, cloud, intrinsics, gt_pose, seed=0) -> FeatureBundle:
        f2d, f3d = oracle_features(cloud, intrinsics, gt_pose, self.config, seed)
        c2, c3 = oracle_confidence(cloud, intrinsics, gt_pose, self.config, seed)
        return FeatureBundle(f2d, f3d, c2, c3)


def zero_out_inferior(features: np.ndarray, conf: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Zero the 3D feature rows whose confidence is below ``threshold``."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    features = np.asarray(features, dtype=np.float64)
    conf = np.asarray(conf, dtype=np.float64)
    if conf.shape != features.shape[:1]:
        raise ValueError(f"{conf.shape[0] if conf.ndim else 0} confidences for {features.shape[0]} points")
    out = features.copy()
    out[conf < threshold] = 0.0
    return out


# -- flat tensor container ---------------------------------------------------
# MAGIC, u32 ndims, u32 dims[ndims], float32 data (little-endian, row-major).
# Files may hold several tensors back to back.

def write_tensor(fh: BinaryIO, array) -> None:
    a = np.ascontiguousarray(array, dtype="<f4")
    fh.write(MAGIC)
    fh.write(struct.pack("<I", a.ndim))
    fh.write(struct.pack(f"<{a.ndim}I", *a.shape))
    fh.write(a.tobytes())


def read_tensor(fh: BinaryIO) -> np.ndarray | None:
    """Read one tensor; ``None`` at clean end of file."""
    magic = fh.read(len(MAGIC))
    if not magic:
        return None
    if magic != MAGIC:
        raise ValueError(f"bad tensor magic {magic!r}")
    (ndim,) = struct.unpack("<I", _read_exact(fh, 4))
    dims = struct.unpack(f"<{ndim}I", _read_exact(fh, 4 * ndim))
    count = int(np.prod(dims, dtype=np.int64))
    data = np.frombuffer(_read_exact(fh, 4 * count), dtype="<f4")
    return data.reshape(dims).astype(np.float64)


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise ValueError("truncated tensor file")
    return b


def save_tensors(path, arrays) -> None:
    with open(path, "wb") as fh:
        for a in arrays:
            write_tensor(fh, a)


def load_tensors(path) -> list[np.ndarray]:
    out = []
    with open(path, "rb") as fh:
        while (t := read_tensor(fh)) is not None:
            out.append(t)
    return out


def save_bundle(path, bundle: FeatureBundle) -> None:
    save_tensors(path, [bundle.f2d, bundle.f3d, bundle.conf2d, bundle.conf3d])


def load_bundle(path) -> FeatureBundle:
    tensors = load_tensors(path)
    if len(tensors) != 4:
        raise ValueError(f"feature file must hold 4 tensors, found {len(tensors)}")
    return FeatureBundle(*tensors)
