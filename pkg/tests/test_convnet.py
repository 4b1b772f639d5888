import numpy as np
import pytest

from posevolume.convnet import (ConvScorer, ScorerParams, backward, forward, forward_batch, init_params,
                                load_params, save_params)
from posevolume.costvolume import AggregatedMap, build_unit
from posevolume.losses import grad_check


def naive_forward(params, x):
    """Straight loops over pixels, taps and channels."""
    H, W, _ = x.shape
    a = x
    for K, b in zip(params.kernels, params.biases):
        cin, cout = K.shape[2], K.shape[3]
        z = np.zeros((H, W, cout))
        for v in range(H):
            for u in range(W):
                acc = b.copy()
                for dy in range(3):
                    for dx in range(3):
                        yy, xx = v + dy - 1, u + dx - 1
                        if 0 <= yy < H and 0 <= xx < W:
                            for c in range(cin):
                                acc = acc + a[yy, xx, c] * K[dy, dx, c]
                z[v, u] = acc
        a = np.where(z > 0, z, params.leaky * z)
    return float(sum(a[v, u] @ params.head_w for v in range(H) for u in range(W)) / (H * W) + params.head_b)


def test_forward_matches_naive_oracle():
    rng = np.random.default_rng(0)
    params = init_params(2, (5, 4, 3), seed=1)
    for _ in range(3):
        x = rng.normal(size=(5, 6, 6))
        assert abs(forward(params, x) - naive_forward(params, x)) < 1e-6


def test_zero_head_scores_zero():
    params = init_params(2, seed=0)
    params = params.with_arrays(params.arrays()[:-2] + [np.zeros(8), np.zeros(1)])
    x = np.random.default_rng(1).normal(size=(4, 4, 6))
    assert forward(params, x) == 0.0


def test_duplicate_unit_identical_score():
    params = init_params(3, seed=2)
    f2d = np.random.default_rng(3).normal(size=(6, 7, 3))
    agg = AggregatedMap(f2d[::-1].copy(), np.ones((6, 7), int), np.ones((6, 7)))
    u = build_unit(f2d, np.ones((6, 7)), agg, 0)
    s = ConvScorer(params).score_units([u, u, u])
    assert s[0] == s[1] == s[2]


def test_batch_composition_does_not_change_scores():
    params = init_params(2, seed=4)
    X = np.random.default_rng(5).normal(size=(11, 5, 5, 6))
    ref = forward_batch(params, X)
    assert np.array_equal(ref, np.concatenate([forward_batch(params, X[:4]), forward_batch(params, X[4:])]))
    assert np.array_equal(ref, np.array([forward(params, x) for x in X]))


def test_channel_mismatch_rejected():
    params = init_params(2, seed=0)
    with pytest.raises(ValueError):
        forward(params, np.zeros((4, 4, 5)))
    with pytest.raises(ValueError):
        init_params(2, widths=())


def test_param_validation():
    p = init_params(1, (3,), seed=0)
    with pytest.raises(ValueError):
        ScorerParams(p.kernels, [np.zeros(2)], p.head_w)
    with pytest.raises(ValueError):
        ScorerParams(p.kernels, p.biases, np.zeros(5))
    bad = [k.copy() for k in p.kernels]
    bad[0][0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        ScorerParams(bad, p.biases, p.head_w)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(6)
    params = init_params(1, (3, 2), seed=7)
    x = rng.normal(size=(4, 3, 4))
    shapes = [a.shape for a in params.arrays()]

    def fn(flat):
        arrs, k = [], 0
        for s in shapes:
            n = int(np.prod(s))
            arrs.append(flat[k:k + n].reshape(s))
            k += n
        p = params.with_arrays(arrs)
        score, tape = forward(p, x, keep=True)
        return score, np.concatenate([g.ravel() for g in backward(p, tape, 1.0)])

    assert grad_check(fn, np.concatenate([a.ravel() for a in params.arrays()])) < 1e-4


def test_params_roundtrip(tmp_path):
    params = init_params(4, seed=8)
    save_params(tmp_path / "p.bin", params)
    back = load_params(tmp_path / "p.bin")
    assert back.depth == params.depth and back.leaky == pytest.approx(0.1)
    for a, b in zip(params.arrays(), back.arrays()):
        np.testing.assert_array_equal(b, a.astype(np.float32).astype(np.float64))
    # float32 storage is a fixed point
    save_params(tmp_path / "q.bin", back)
    assert (tmp_path / "p.bin").read_bytes() == (tmp_path / "q.bin").read_bytes()


def test_params_version_rejected(tmp_path):
    from posevolume.features import save_tensors
    save_tensors(tmp_path / "p.bin", [np.array([99.0, 1.0, 0.1])])
    with pytest.raises(ValueError):
        load_params(tmp_path / "p.bin")
