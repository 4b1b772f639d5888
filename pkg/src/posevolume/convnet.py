"""Small trainable convolutional scorer with hand-written adjoints.

Architecture: ``depth`` 3x3 "same" convolutions (stride 1, zero padding),
each followed by a leaky ReLU, then a global average pool and an affine
head to one scalar. Input channels are the unit's ``2f`` feature channels
plus the two weight planes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costvolume import CostVolumeUnit
from .features import load_tensors, save_tensors

PARAMS_FORMAT_VERSION = 1
DEFAULT_WIDTHS = (32, 32, 16, 8)


@dataclass
class ScorerParams:
    kernels: list            # each (3, 3, c_in, c_out)
    biases: list             # each (c_out,)
    head_w: np.ndarray       # (c_last,)
    head_b: float = 0.0
    leaky: float = 0.1

    def __post_init__(self):
        if len(self.kernels) != len(self.biases) or not self.kernels:
            raise ValueError("need one bias per kernel and at least one layer")
        c = self.kernels[0].shape[2]
        for K, b in zip(self.kernels, self.biases):
            if K.shape[:3] != (3, 3, c) or b.shape != (K.shape[3],):
                raise ValueError(f"layer shape mismatch: kernel {K.shape}, bias {b.shape}, expected c_in={c}")
            c = K.shape[3]
        if self.head_w.shape != (c,):
            raise ValueError(f"head expects {c} inputs, got {self.head_w.shape}")
        for a in self.arrays():
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite scorer parameter")

    @property
    def in_channels(self) -> int:
        return self.kernels[0].shape[2]

    @property
    def depth(self) -> int:
        return len(self.kernels)

    def arrays(self) -> list[np.ndarray]:
        """Flat parameter list; gradients come back in the same order."""
        return [*self.kernels, *self.biases, self.head_w, np.array([self.head_b])]

    def with_arrays(self, arrays) -> "ScorerParams":
        d = self.depth
        return ScorerParams(list(arrays[:d]), list(arrays[d:2 * d]), arrays[2 * d],
                            float(np.asarray(arrays[2 * d + 1]).reshape(-1)[0]), self.leaky)

    def copy(self) -> "ScorerParams":
        return self.with_arrays([a.copy() for a in self.arrays()])


def init_params(feature_dim: int, widths=DEFAULT_WIDTHS, seed: int = 0,
                leaky: float = 0.1) -> ScorerParams:
    """He-normal kernels, zero biases, small random head."""
    if not 1 <= len(widths) <= 10:
        raise ValueError("depth must be between 1 and 10")
    rng = np.random.default_rng(seed)
    c = 2 * feature_dim + 2
    kernels, biases = [], []
    for w in widths:
        std = np.sqrt(2.0 / (9 * c))
        kernels.append(rng.normal(0.0, std, size=(3, 3, c, w)))
        biases.append(np.zeros(w))
        c = w
    head_w = rng.normal(0.0, np.sqrt(1.0 / c), size=c)
    return ScorerParams(kernels, biases, head_w, 0.0, leaky)


def _im2col(x: np.ndarray) -> np.ndarray:
    """``(B, H, W, C)`` -> ``(B, H*W, 9*C)`` with (dy, dx, c) column order."""
    B, H, W, C = x.shape
    xp = np.zeros((B, H + 2, W + 2, C))
    xp[:, 1:-1, 1:-1] = x
    cols = np.empty((B, H, W, 3, 3, C))
    for dy in range(3):
        for dx in range(3):
            cols[:, :, :, dy, dx, :] = xp[:, dy:dy + H, dx:dx + W, :]
    return cols.reshape(B, H * W, 9 * C)


def _col2im(dcols: np.ndarray, H: int, W: int, C: int) -> np.ndarray:
    B = dcols.shape[0]
    d = dcols.reshape(B, H, W, 3, 3, C)
    dxp = np.zeros((B, H + 2, W + 2, C))
    for dy in range(3):
        for dx in range(3):
            dxp[:, dy:dy + H, dx:dx + W, :] += d[:, :, :, dy, dx, :]
    return dxp[:, 1:-1, 1:-1]


def forward_batch(params: ScorerParams, x: np.ndarray, keep: bool = False, exact: bool = True):
    """Scores for a ``(B, H, W, C)`` stack; with ``keep`` also the tape for :func:`backward_batch`.

    Every unit gets its own GEMM calls, so a unit's score does not depend
    on what else is in the batch. ``exact=False`` fuses the batch into one
    GEMM per layer: faster, but only equal up to rounding.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[3] != params.in_channels:
        raise ValueError(f"scorer expects {params.in_channels} input channels, got shape {x.shape[1:]}")
    B, H, W, _ = x.shape
    tape = []
    a = x
    for K, b in zip(params.kernels, params.biases):
        cols = _im2col(a)
        Km = K.reshape(-1, K.shape[3])
        if exact:
            z = np.empty((B, H * W, K.shape[3]))
            for j in range(B):
                z[j] = cols[j] @ Km + b
        else:
            z = (cols.reshape(B * H * W, -1) @ Km + b).reshape(B, H * W, -1)
        tape.append((cols, z))
        a = np.where(z > 0, z, params.leaky * z).reshape(B, H, W, -1)
    pooled = a.reshape(B, H * W, -1).mean(axis=1)
    scores = (pooled * params.head_w).sum(axis=1) + params.head_b
    if keep:
        return scores, (x.shape, tape, pooled)
    return scores


def backward_batch(params: ScorerParams, tape, dscores) -> list[np.ndarray]:
    """Parameter gradients of ``sum(dscores * scores)``, in ``params.arrays()`` order."""
    (B, H, W, _), layers, pooled = tape
    dscores = np.asarray(dscores, dtype=np.float64).reshape(B)
    d = params.depth
    g_kernels = [None] * d
    g_biases = [None] * d
    g_head_w = dscores @ pooled
    g_head_b = np.array([dscores.sum()])
    da = np.broadcast_to((dscores[:, None] * params.head_w / (H * W))[:, None, :],
                         (B, H * W, params.head_w.size))
    for i in range(d - 1, -1, -1):
        cols, z = layers[i]
        K = params.kernels[i]
        dz = np.where(z > 0, da, params.leaky * da)
        g_kernels[i] = (cols.reshape(B * H * W, -1).T @ dz.reshape(B * H * W, -1)).reshape(K.shape)
        g_biases[i] = dz.sum(axis=(0, 1))
        if i > 0:
            dcols = dz @ K.reshape(-1, K.shape[3]).T
            da = _col2im(dcols, H, W, K.shape[2]).reshape(B, H * W, -1)
    return [*g_kernels, *g_biases, g_head_w, g_head_b]


def forward(params: ScorerParams, x: np.ndarray, keep: bool = False):
    """Score one ``(H, W, C)`` input."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ValueError(f"expected an (H, W, C) input, got shape {x.shape}")
    out = forward_batch(params, x[None], keep)
    if keep:
        return float(out[0][0]), out[1]
    return float(out[0])


def backward(params: ScorerParams, tape, dscore: float) -> list[np.ndarray]:
    return backward_batch(params, tape, [dscore])


def conv_score(unit: CostVolumeUnit, params: ScorerParams) -> float:
    return forward(params, unit.scorer_input())


class ConvScorer:
    name = "conv"

    def __init__(self, params: ScorerParams):
        self.params = params

    def score_units(self, units) -> np.ndarray:
        units = list(units)
        if not units:
            return np.zeros(0)
        return forward_batch(self.params, np.stack([u.scorer_input() for u in units]))


# Params file: a meta tensor [version, depth, leaky], then per layer kernel and
# bias tensors, then head weights and head bias. Values are stored as float32.

def save_params(path, params: ScorerParams) -> None:
    meta = np.array([PARAMS_FORMAT_VERSION, params.depth, params.leaky])
    save_tensors(path, [meta, *params.kernels, *params.biases,
                        params.head_w, np.array([params.head_b])])


def load_params(path) -> ScorerParams:
    tensors = load_tensors(path)
    if not tensors:
        raise ValueError("empty params file")
    meta = tensors[0]
    version, depth = int(meta[0]), int(meta[1])
    if version != PARAMS_FORMAT_VERSION:
        raise ValueError(f"unsupported params version {version}")
    if len(tensors) != 2 * depth + 3:
        raise ValueError(f"params file holds {len(tensors)} tensors, expected {2 * depth + 3}")
    body = tensors[1:]
    return ScorerParams(body[:depth], body[depth:2 * depth], body[2 * depth],
                        float(body[2 * depth + 1][0]), float(meta[2]))
