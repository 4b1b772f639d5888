"""Compiled inner loops for projection bucketing and the baseline score.

All kernels transform points with the same operation order as
``geometry.transform_points`` and accumulate in point order, so every path
(scalar, numpy, compiled) floors to identical pixels and produces
identical sums.
"""

import math

import numba
import numpy as np

from .geometry import MIN_DEPTH

_jit = numba.njit(cache=True, nogil=True)


@_jit
def _pixel(p, R, t, fx, fy, cx, cy, H, W):
    x, y, z = p[0], p[1], p[2]
    qx = R[0, 0] * x + R[0, 1] * y + R[0, 2] * z + t[0]
    qy = R[1, 0] * x + R[1, 1] * y + R[1, 2] * z + t[1]
    qz = R[2, 0] * x + R[2, 1] * y + R[2, 2] * z + t[2]
    if not qz > MIN_DEPTH:
        return -1
    u = np.floor(fx * qx / qz + cx)
    v = np.floor(fy * qy / qz + cy)
    if not (u >= 0.0 and u < W and v >= 0.0 and v < H):
        return -1
    return int(v) * W + int(u)


@_jit
def pixel_indices(points, Rs, ts, fx, fy, cx, cy, H, W, out):
    """Flat pixel index per (candidate, point); -1 when not in frustum."""
    for k in range(Rs.shape[0]):
        for j in range(points.shape[0]):
            out[k, j] = _pixel(points[j], Rs[k], ts[k], fx, fy, cx, cy, H, W)


@_jit
def aggregate(points, Rs, ts, fx, fy, cx, cy, H, W, feats, w3d, out_feat, out_occ, out_w):
    """Mean-aggregate features and sum-aggregate weights per candidate.

    ``out_feat`` is ``(K, H*W, f)``, ``out_occ`` and ``out_w`` are ``(K, H*W)``;
    all must be zero on entry.
    """
    f = feats.shape[1]
    for k in range(Rs.shape[0]):
        for j in range(points.shape[0]):
            pix = _pixel(points[j], Rs[k], ts[k], fx, fy, cx, cy, H, W)
            if pix < 0:
                continue
            out_occ[k, pix] += 1
            out_w[k, pix] += w3d[j]
            for c in range(f):
                out_feat[k, pix, c] += feats[j, c]
        for pix in range(H * W):
            n = out_occ[k, pix]
            if n > 0:
                for c in range(f):
                    out_feat[k, pix, c] = out_feat[k, pix, c] / n


@_jit
def baseline_from_maps(f2d, w2d, agg, occ, wagg, use_wagg):
    """Weighted mean pixel distance score for one unit (flattened pixels)."""
    f = f2d.shape[1]
    num = 0.0
    den = 0.0
    any_occ = False
    for pix in range(f2d.shape[0]):
        if occ[pix] <= 0:
            continue
        any_occ = True
        s = 0.0
        for c in range(f):
            d = f2d[pix, c] - agg[pix, c]
            s += d * d
        w = w2d[pix] * (wagg[pix] if use_wagg else 1.0)
        num += w * math.sqrt(s)
        den += w
    if not any_occ or den <= 0.0:
        return -np.inf
    return -num / max(den, 1e-12)


@_jit
def baseline_fused(points, Rs, ts, fx, fy, cx, cy, H, W, feats, w3d, f2d, w2d, use_wagg, out):
    """Aggregate-then-score per candidate with one reusable scratch map."""
    f = feats.shape[1]
    agg = np.zeros((H * W, f))
    occ = np.zeros(H * W, dtype=np.int64)
    wagg = np.zeros(H * W)
    for k in range(Rs.shape[0]):
        for j in range(points.shape[0]):
            pix = _pixel(points[j], Rs[k], ts[k], fx, fy, cx, cy, H, W)
            if pix < 0:
                continue
            occ[pix] += 1
            wagg[pix] += w3d[j]
            for c in range(f):
                agg[pix, c] += feats[j, c]
        for pix in range(H * W):
            n = occ[pix]
            if n > 0:
                for c in range(f):
                    agg[pix, c] = agg[pix, c] / n
        out[k] = baseline_from_maps(f2d, w2d, agg, occ, wagg, use_wagg)
        for pix in range(H * W):
            if occ[pix] > 0:
                occ[pix] = 0
                wagg[pix] = 0.0
                for c in range(f):
                    agg[pix, c] = 0.0
