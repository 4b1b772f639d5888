"""Supervision losses with analytic gradients, and a finite-difference checker.

* circle loss between pixel and point features (both anchoring directions),
* focal loss for the frustum-confidence heads,
* cross-entropy over per-candidate scores.

Every loss returns ``(value, gradient)``; all arithmetic is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp, softmax

from .geometry import CameraIntrinsics, Pose, project_continuous


@dataclass(frozen=True)
class CircleLossConfig:
    gamma: float = 10.0
    margin_pos: float = 0.1
    margin_neg: float = 1.4
    radius: float = 1.0

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if not 0 <= self.margin_pos < self.margin_neg:
            raise ValueError("need 0 <= margin_pos < margin_neg")
        if not self.radius >= 0:
            raise ValueError("radius must be >= 0")


@dataclass(frozen=True, eq=False)
class CorrespondenceSets:
    """Pixel anchors vs. candidate points.

    ``pixels[i]`` is the integer ``(u, v)`` of anchor ``i``, ``points[j]``
    indexes the 3D feature rows, and ``positive[i, j]`` marks point ``j`` as
    a positive of pixel ``i``. Everything else in the row is a negative.
    Read column-wise the same matrix gives the point-anchored sets.
    """

    pixels: np.ndarray     # (A, 2) int
    points: np.ndarray     # (M,) int
    positive: np.ndarray   # (A, M) bool

    def positives(self, i: int) -> np.ndarray:
        return self.points[self.positive[i]]

    def negatives(self, i: int) -> np.ndarray:
        return self.points[~self.positive[i]]


def build_pos_neg_sets(cloud: np.ndarray, intrinsics: CameraIntrinsics, gt_pose: Pose,
                       config: CircleLossConfig) -> CorrespondenceSets:
    """Anchor every in-frustum point's pixel; positives lie within ``radius`` pixels.

    Distances use continuous (pre-floor) projections.
    """
    uv, inside = project_continuous(gt_pose.transform(cloud), intrinsics)
    idx = np.flatnonzero(inside)
    uv_s = uv[idx]
    pixels = np.floor(uv_s).astype(np.int64)
    diff = uv_s[:, None, :] - uv_s[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    return CorrespondenceSets(pixels, idx, dist <= config.radius)


def _pairwise(a: np.ndarray, b: np.ndarray):
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1)), diff


def circle_theta(D: np.ndarray, config: CircleLossConfig):
    """Clamped adaptive weights ``(theta_pos, theta_neg)`` for distance matrix ``D``."""
    tp = np.maximum(0.0, config.gamma * (D - config.margin_pos))
    tn = np.maximum(0.0, config.gamma * (config.margin_neg - D))
    return tp, tn


def _circle_rows(D, pos, config, theta, detach):
    """Mean row-anchored circle loss and its derivative w.r.t. ``D``.

    Rows lacking a positive or a negative are skipped.
    """
    tp, tn = theta if theta is not None else circle_theta(D, config)
    valid = pos.any(axis=1) & (~pos).any(axis=1)
    n_valid = int(valid.sum())
    dD = np.zeros_like(D)
    if n_valid == 0:
        return 0.0, dD, int(D.shape[0])
    a = np.where(pos, tp * (D - config.margin_pos), -np.inf)
    b = np.where(~pos, tn * (config.margin_neg - D), -np.inf)
    lse_a = logsumexp(a[valid], axis=1)
    lse_b = logsumexp(b[valid], axis=1)
    s = lse_a + lse_b
    # log(1 + e^s), stable for large s
    per_anchor = np.logaddexp(0.0, s)
    value = float(per_anchor.sum() / n_valid)

    # dL/da_j = sigmoid(s) * softmax(a)_j, likewise for b
    sig = expit(s)[:, None] / n_valid
    wa = np.where(pos[valid], np.exp(a[valid] - lse_a[:, None]), 0.0) * sig
    wb = np.where(~pos[valid], np.exp(b[valid] - lse_b[:, None]), 0.0) * sig
    if detach:
        da_dD, db_dD = tp[valid], -tn[valid]
    else:
        # a = g*(d - dp)^2 above the margin, b = g*(dn - d)^2 below it
        da_dD = 2.0 * tp[valid]
        db_dD = -2.0 * tn[valid]
    dD[valid] = wa * da_dD + wb * db_dD
    return value, dD, int(D.shape[0] - n_valid)


@dataclass(frozen=True)
class CircleLossResult:
    value: float
    value_2d: float
    value_3d: float
    grad_2d: np.ndarray    # same shape as the pixel feature map
    grad_3d: np.ndarray    # same shape as the point features
    skipped_2d: int
    skipped_3d: int


def circle_loss(f2d: np.ndarray, f3d: np.ndarray, sets: CorrespondenceSets,
                config: CircleLossConfig = CircleLossConfig(), detach_theta: bool = True,
                theta=None) -> CircleLossResult:
    """Pixel-anchored plus point-anchored circle loss.

    With ``detach_theta`` (the default) the adaptive weights are treated as
    constants when differentiating. ``theta`` optionally supplies them
    precomputed as ``(theta_pos, theta_neg)`` over the ``(A, M)`` distance
    matrix; both directions share it, transposed for the point anchors.
    """
    f2d = np.asarray(f2d, dtype=np.float64)
    f3d = np.asarray(f3d, dtype=np.float64)
    if not (np.all(np.isfinite(f2d)) and np.all(np.isfinite(f3d))):
        raise ValueError("non-finite feature input")
    px = sets.pixels
    X = f2d[px[:, 1], px[:, 0]] if len(px) else np.zeros((0, f2d.shape[-1]))
    Y = f3d[sets.points]
    D, diff = _pairwise(X, Y)
    if theta is None:
        theta = circle_theta(D, config)
    tp, tn = theta
    v2, dD2, sk2 = _circle_rows(D, sets.positive, config, (tp, tn), detach_theta)
    v3, dD3t, sk3 = _circle_rows(D.T, sets.positive.T, config, (tp.T, tn.T), detach_theta)
    dD = dD2 + dD3t.T

    # d|x - y| / dx = (x - y) / |x - y|, taken as 0 at coincident features
    safe = np.where(D > 0, D, 1.0)
    coef = np.where(D > 0, dD / safe, 0.0)[..., None] * diff
    gX = coef.sum(axis=1)
    gY = -coef.sum(axis=0)
    g2d = np.zeros_like(f2d)
    g3d = np.zeros_like(f3d)
    if len(px):
        np.add.at(g2d, (px[:, 1], px[:, 0]), gX)
    np.add.at(g3d, sets.points, gY)
    return CircleLossResult(v2 + v3, v2, v3, g2d, g3d, sk2, sk3)


def focal_loss(pred, labels, alpha: float = 0.25, gamma: float = 2.0):
    """Mean binary focal loss and its gradient w.r.t. ``pred``."""
    p = np.clip(np.asarray(pred, dtype=np.float64), 1e-7, 1.0 - 1e-7)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"pred shape {p.shape} != label shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    n = p.size
    pos = y == 1
    q = 1.0 - p
    loss = np.where(pos, -alpha * q ** gamma * np.log(p),
                    -(1.0 - alpha) * p ** gamma * np.log(q))
    g_pos = alpha * (gamma * q ** (gamma - 1) * np.log(p) - q ** gamma / p) if gamma else -alpha / p
    g_neg = (-(1.0 - alpha) * (gamma * p ** (gamma - 1) * np.log(q) - p ** gamma / q)
             if gamma else (1.0 - alpha) / q)
    grad = np.where(pos, g_pos, g_neg) / n
    return float(loss.sum() / n), grad


def focal_loss_total(pred2d, labels2d, pred3d, labels3d, alpha=0.25, gamma=2.0):
    """Image-head plus point-head focal loss: ``(value, grad2d, grad3d)``."""
    v2, g2 = focal_loss(pred2d, labels2d, alpha, gamma)
    v3, g3 = focal_loss(pred3d, labels3d, alpha, gamma)
    return v2 + v3, g2, g3


def cross_entropy_scores(scores, target: int):
    """``-log softmax(scores)[target]`` and its gradient ``softmax - onehot``."""
    s = np.asarray(scores, dtype=np.float64)
    if not 0 <= target < s.size:
        raise IndexError(f"target {target} out of range for {s.size} scores")
    value = float(logsumexp(s) - s[target])
    grad = softmax(s)
    grad[target] -= 1.0
    return value, grad


def grad_check(function: Callable, point, epsilon: float = 1e-6,
               rounding_slack: bool = False) -> float:
    """Max relative error between ``function``'s analytic gradient and central differences.

    ``function(x)`` returns ``(value, gradient)`` with gradient shaped like x.
    Per coordinate the error is ``|a - n| / max(|a|, |n|, 1e-8)``. With
    ``rounding_slack`` a coordinate whose gap is below the difference
    quotient's own rounding error counts as exact; otherwise a structurally
    zero derivative reports pure rounding noise.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    x = np.array(point, dtype=np.float64)
    value, analytic = function(x.copy())
    analytic = np.asarray(analytic, dtype=np.float64).reshape(x.shape)
    if not (math.isfinite(value) and np.all(np.isfinite(analytic))):
        raise ValueError("non-finite evaluation at the base point")
    unit = np.finfo(np.float64).eps
    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        fp = function(x.copy())[0]
        flat[i] = orig - epsilon
        fm = function(x.copy())[0]
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"non-finite evaluation at coordinate {i}")
        numeric = (fp - fm) / (2.0 * epsilon)
        a = analytic.reshape(-1)[i]
        gap = abs(a - numeric)
        if rounding_slack and gap <= 4.0 * unit * (abs(fp) + abs(fm)) / (2.0 * epsilon):
            continue
        worst = max(worst, gap / max(abs(a), abs(numeric), 1e-8))
    return worst
