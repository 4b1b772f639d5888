"""Similarity scores over cost-volume units and their batching."""

from __future__ import annotations

import itertools
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence

import numpy as np

from . import _kernels
from .costvolume import CostVolumeUnit, SceneInputs


@dataclass(frozen=True, eq=False)
class ScoreVector:
    scores: np.ndarray
    best_index: int

    @classmethod
    def from_scores(cls, scores) -> "ScoreVector":
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 1 or scores.size == 0:
            raise ValueError("need a non-empty 1-D score array")
        # np.argmax returns the first maximum, i.e. ties go to the lowest index
        return cls(scores, int(np.argmax(scores)))

    def __eq__(self, other):
        if not isinstance(other, ScoreVector):
            return NotImplemented
        return self.best_index == other.best_index and np.array_equal(self.scores, other.scores)


class Scorer(Protocol):
    name: str

    def score_units(self, units: Sequence[CostVolumeUnit]) -> np.ndarray: ...


def baseline_score(unit: CostVolumeUnit) -> float:
    """Negative weighted mean feature distance over occupied pixels.

    ``-inf`` when no pixel is occupied or the occupied pixels carry zero
    total weight.
    """
    H, W, f = unit.image_features.shape
    agg = unit.aggregated
    return float(_kernels.baseline_from_maps(
        np.ascontiguousarray(unit.image_features).reshape(H * W, f),
        np.ascontiguousarray(unit.image_weights).reshape(H * W),
        np.ascontiguousarray(agg.features).reshape(H * W, f),
        np.ascontiguousarray(agg.occupancy).reshape(H * W),
        np.ascontiguousarray(agg.weights).reshape(H * W),
        True,
    ))


class BaselineScorer:
    name = "baseline"

    def score_units(self, units: Sequence[CostVolumeUnit]) -> np.ndarray:
        return np.array([baseline_score(u) for u in units], dtype=np.float64)

    def score_poses(self, inputs: SceneInputs, Rs: np.ndarray, ts: np.ndarray) -> np.ndarray:
        """Fused aggregate-and-score; bit-identical to the unit path."""
        intr = inputs.intrinsics
        H, W, f = inputs.f2d.shape
        out = np.empty(Rs.shape[0])
        _kernels.baseline_fused(
            inputs.cloud, np.ascontiguousarray(Rs), np.ascontiguousarray(ts),
            float(intr.fx), float(intr.fy), float(intr.cx), float(intr.cy), H, W,
            inputs.f3d, inputs.w3d,
            np.ascontiguousarray(inputs.f2d).reshape(H * W, f),
            np.ascontiguousarray(inputs.w2d).reshape(H * W),
            inputs.use_wagg, out)
        return out


def _chunks(it: Iterable, size: int):
    it = iter(it)
    while chunk := list(itertools.islice(it, size)):
        yield chunk


def score_batch(volume: Iterable[CostVolumeUnit], scorer: Scorer, segment_size: int,
                workers: int = 1) -> ScoreVector:
    """Score a stream of units in candidate order.

    At most ``segment_size * workers`` units are held at once. The result
    does not depend on either knob: each unit is scored on its own.
    """
    if segment_size < 1:
        raise ValueError("segment_size must be >= 1")
    parts: list[np.ndarray] = []
    if workers <= 1:
        for chunk in _chunks(volume, segment_size):
            parts.append(scorer.score_units(chunk))
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            pending: deque = deque()
            for chunk in _chunks(volume, segment_size):
                pending.append(pool.submit(scorer.score_units, chunk))
                if len(pending) >= workers:
                    parts.append(pending.popleft().result())
            while pending:
                parts.append(pending.popleft().result())
    if not parts:
        raise ValueError("empty cost volume")
    return ScoreVector.from_scores(np.concatenate(parts))
