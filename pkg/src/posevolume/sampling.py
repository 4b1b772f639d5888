"""Candidate pose grids around the current estimate and the shrink schedule."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import Pose, compose_pose, euler_to_rotation, pose_errors

# yaw, pitch, roll
ROT_AXES = ("yaw", "pitch", "roll")
TRANS_AXES = ("x", "y", "z")

# Iteration 9 sees 8 shrinks; these land the full ranges at 0.9 deg and 0.45 m.
DEFAULT_ROT_SHRINK = (0.9 / 360.0) ** (1.0 / 8.0)
DEFAULT_TRANS_SHRINK = (0.45 / 10.0) ** (1.0 / 8.0)


def _triple(x, name, cast=float):
    vals = tuple(cast(v) for v in x)
    if len(vals) != 3:
        raise ValueError(f"{name} needs 3 entries, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class SamplingSpace:
    """Half-ranges and per-axis sample counts for the pose grid.

    Rotation axes are (yaw, pitch, roll) in degrees, translation axes are
    camera-frame (x, y, z) in meters. Disabled axes contribute the single
    offset 0 whatever their range/count.
    """

    rot_range: tuple = (180.0, 0.0, 0.0)
    trans_range: tuple = (5.0, 0.0, 5.0)
    rot_counts: tuple = (9, 1, 1)
    trans_counts: tuple = (9, 1, 9)
    rot_axes: tuple = (True, False, False)
    trans_axes: tuple = (True, False, True)

    def __post_init__(self):
        object.__setattr__(self, "rot_range", _triple(self.rot_range, "rot_range"))
        object.__setattr__(self, "trans_range", _triple(self.trans_range, "trans_range"))
        object.__setattr__(self, "rot_counts", _triple(self.rot_counts, "rot_counts", int))
        object.__setattr__(self, "trans_counts", _triple(self.trans_counts, "trans_counts", int))
        object.__setattr__(self, "rot_axes", _triple(self.rot_axes, "rot_axes", bool))
        object.__setattr__(self, "trans_axes", _triple(self.trans_axes, "trans_axes", bool))
        for name in ("rot_range", "trans_range"):
            vals = getattr(self, name)
            if any(not math.isfinite(v) or v < 0 for v in vals):
                raise ValueError(f"{name} must be finite and >= 0, got {vals}")
        for name in ("rot_counts", "trans_counts"):
            vals = getattr(self, name)
            if any(c < 1 or c % 2 == 0 for c in vals):
                raise ValueError(f"{name} must be odd and >= 1, got {vals}")

    def rot_offsets(self) -> list[np.ndarray]:
        return [_grid(r, c) if on else np.zeros(1)
                for r, c, on in zip(self.rot_range, self.rot_counts, self.rot_axes)]

    def trans_offsets(self) -> list[np.ndarray]:
        return [_grid(r, c) if on else np.zeros(1)
                for r, c, on in zip(self.trans_range, self.trans_counts, self.trans_axes)]

    @property
    def n_rot(self) -> int:
        return math.prod(len(o) for o in self.rot_offsets())

    @property
    def n_trans(self) -> int:
        return math.prod(len(o) for o in self.trans_offsets())

    @property
    def n_candidates(self) -> int:
        return self.n_rot * self.n_trans

    @property
    def rot_full_range(self) -> float:
        """Largest enabled rotation full range (degrees)."""
        vals = [2 * r for r, on in zip(self.rot_range, self.rot_axes) if on]
        return max(vals, default=0.0)

    @property
    def trans_full_range(self) -> float:
        vals = [2 * r for r, on in zip(self.trans_range, self.trans_axes) if on]
        return max(vals, default=0.0)

    def to_dict(self) -> dict:
        return {
            "rot_range": list(self.rot_range), "trans_range": list(self.trans_range),
            "rot_counts": list(self.rot_counts), "trans_counts": list(self.trans_counts),
            "rot_axes": list(self.rot_axes), "trans_axes": list(self.trans_axes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingSpace":
        return cls(**{k: tuple(v) for k, v in d.items()})


def _grid(half_range: float, count: int) -> np.ndarray:
    if count == 1:
        return np.zeros(1)
    k = np.arange(count) - (count - 1) // 2
    # k * step keeps the grid exactly symmetric and hits 0 exactly
    return k * (2.0 * half_range / (count - 1))


@dataclass(frozen=True)
class Schedule:
    initial_space: SamplingSpace = field(default_factory=SamplingSpace)
    rot_shrink: float = DEFAULT_ROT_SHRINK
    trans_shrink: float = DEFAULT_TRANS_SHRINK
    iterations: int = 9

    def __post_init__(self):
        if not (0 < self.rot_shrink < 1 and 0 < self.trans_shrink < 1):
            raise ValueError("shrink factors must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    def space_at(self, iteration: int) -> SamplingSpace:
        """Sampling space used at 0-based ``iteration``."""
        space = self.initial_space
        for _ in range(iteration):
            space = shrink(space, self)
        return space

    def to_dict(self) -> dict:
        return {
            "initial_space": self.initial_space.to_dict(),
            "rot_shrink": self.rot_shrink, "trans_shrink": self.trans_shrink,
            "iterations": self.iterations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        d = dict(d)
        if "initial_space" in d:
            d["initial_space"] = SamplingSpace.from_dict(d["initial_space"])
        return cls(**d)


def shrink(space: SamplingSpace, schedule: Schedule) -> SamplingSpace:
    return replace(
        space,
        rot_range=tuple(r * schedule.rot_shrink for r in space.rot_range),
        trans_range=tuple(r * schedule.trans_shrink for r in space.trans_range),
    )


def candidate_offsets(space: SamplingSpace):
    """Rotation-major offset lists: ``(euler_deg (Nr, 3), trans (Nt, 3))``.

    Candidate ``i`` pairs rotation ``i // Nt`` with translation ``i % Nt``.
    Within each list the axes vary in itertools.product order (last axis
    fastest).
    """
    rot = np.array(list(itertools.product(*space.rot_offsets())), dtype=np.float64)
    trans = np.array(list(itertools.product(*space.trans_offsets())), dtype=np.float64)
    return rot.reshape(-1, 3), trans.reshape(-1, 3)


def sample_candidates(current: Pose, space: SamplingSpace) -> list[Pose]:
    rot, trans = candidate_offsets(space)
    out = []
    for yaw, pitch, roll in rot:
        dR = euler_to_rotation(yaw, pitch, roll)
        for dt in trans:
            out.append(compose_pose(current, dR, dt))
    return out


def candidate_arrays(current: Pose, space: SamplingSpace):
    """Stacked ``(K, 3, 3)`` rotations and ``(K, 3)`` translations.

    Same values and order as :func:`sample_candidates`, without building
    ``Pose`` objects.
    """
    rot, trans = candidate_offsets(space)
    n_t = len(trans)
    Rs = np.empty((len(rot) * n_t, 3, 3))
    ts = np.empty((len(rot) * n_t, 3))
    for i, (yaw, pitch, roll) in enumerate(rot):
        R = euler_to_rotation(yaw, pitch, roll) @ current.rotation
        Rs[i * n_t:(i + 1) * n_t] = R
        ts[i * n_t:(i + 1) * n_t] = current.translation + trans
    return Rs, ts


def pose_distance(candidate: Pose, truth: Pose, space: SamplingSpace) -> float:
    """Range-normalized pose distance used for the supervision target."""
    rre, rte = pose_errors(candidate, truth)
    d = 0.0
    if space.rot_full_range > 0:
        d += rre / space.rot_full_range
    if space.trans_full_range > 0:
        d += rte / space.trans_full_range
    return d


def nearest_candidate_index(candidates, truth: Pose, space: SamplingSpace) -> int:
    if len(candidates) == 0:
        raise ValueError("empty candidate list")
    best, best_d = 0, math.inf
    for i, c in enumerate(candidates):
        d = pose_distance(c, truth, space)
        if d < best_d:
            best, best_d = i, d
    return best
