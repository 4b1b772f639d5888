import numpy as np
import pytest
from hypothesis import given, strategies as st

from posevolume.costvolume import (AggregatedMap, SceneInputs, VolumeStats, aggregate_3d,
                                   aggregate_weights, build_unit, build_volume)
from posevolume.geometry import CameraIntrinsics, Pose, frustum_mask, project

from conftest import random_pose


def brute_force(cloud, feats, weights, pose, intr):
    """Project each point with the scalar routine and bucket in plain Python."""
    H, W = intr.height, intr.width
    sums = np.zeros((H, W, feats.shape[1]))
    wsum = np.zeros((H, W))
    occ = np.zeros((H, W), int)
    for p, f, w in zip(cloud, feats, weights):
        px = project(p, pose, intr)
        if px is None:
            continue
        sums[px.v, px.u] += f
        wsum[px.v, px.u] += w
        occ[px.v, px.u] += 1
    mean = np.where(occ[..., None] > 0, sums / np.maximum(occ, 1)[..., None], 0.0)
    return mean, occ, wsum


def random_instance(rng):
    H, W = int(rng.integers(1, 33)), int(rng.integers(1, 33))
    intr = CameraIntrinsics(fx=rng.uniform(3, 30), fy=rng.uniform(3, 30), cx=rng.uniform(0, W),
                            cy=rng.uniform(0, H), width=W, height=H)
    n = int(rng.integers(1, 501))
    cloud = rng.normal(0, 3, (n, 3)) + [0, 0, 3]
    return cloud, rng.normal(size=(n, int(rng.integers(1, 9)))), rng.random(n), random_pose(rng, 0.5), intr


def test_two_points_same_pixel_mean():
    intr = CameraIntrinsics(fx=10, fy=10, cx=2, cy=2, width=4, height=4)
    cloud = np.array([[0, 0, 5.0], [0, 0, 6.0]])
    agg = aggregate_3d(cloud, np.array([[1.0, 2.0], [3.0, 6.0]]), Pose.identity(), intr)
    np.testing.assert_array_equal(agg.features[2, 2], [2.0, 4.0])
    assert agg.occupancy[2, 2] == 2 and agg.occupancy.sum() == 2
    np.testing.assert_array_equal(aggregate_weights(cloud, [0.5, 1.0], Pose.identity(), intr)[2, 2], 1.5)


def test_all_behind_camera_is_empty():
    intr = CameraIntrinsics(fx=10, fy=10, cx=2, cy=2, width=4, height=4)
    cloud = np.array([[0, 0, -5.0], [1, 1, -1.0]])
    agg = aggregate_3d(cloud, np.ones((2, 3)), Pose.identity(), intr)
    assert not agg.features.any() and not agg.occupancy.any()
    assert not aggregate_weights(cloud, [1, 1], Pose.identity(), intr).any()


def test_brute_force_equivalence_50_instances():
    rng = np.random.default_rng(0)
    for _ in range(50):
        cloud, feats, w, pose, intr = random_instance(rng)
        mean, occ, wsum = brute_force(cloud, feats, w, pose, intr)
        agg = aggregate_3d(cloud, feats, pose, intr)
        assert np.abs(agg.features - mean).max(initial=0) <= 1e-12
        assert np.array_equal(agg.occupancy, occ)
        assert np.abs(aggregate_weights(cloud, w, pose, intr) - wsum).max(initial=0) <= 1e-12
        assert agg.occupancy.sum() == frustum_mask(cloud, pose, intr).sum()


@given(st.integers(0, 2**32 - 1))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    cloud, feats, w, pose, intr = random_instance(rng)
    perm = rng.permutation(len(cloud))
    a = aggregate_3d(cloud, feats, pose, intr)
    b = aggregate_3d(cloud[perm], feats[perm], pose, intr)
    assert np.abs(a.features - b.features).max(initial=0) <= 1e-12
    assert np.array_equal(a.occupancy, b.occupancy)
    wa = aggregate_weights(cloud, w, pose, intr)
    wb = aggregate_weights(cloud[perm], w[perm], pose, intr)
    assert np.abs(wa - wb).max(initial=0) <= 1e-12
    # unoccupied pixels carry nothing
    empty = a.occupancy == 0
    assert not a.features[empty].any() and not wa[empty].any()


def test_build_unit_views():
    f2d = np.random.default_rng(1).normal(size=(3, 5, 4))
    agg = AggregatedMap(np.zeros((3, 5, 4)), np.zeros((3, 5), int), np.zeros((3, 5)))
    unit = build_unit(f2d, np.ones((3, 5)), agg, 7)
    assert unit.channels.shape == (3, 5, 8)
    assert not unit.channels[..., 4:].any()
    np.testing.assert_array_equal(unit.channels[..., :4], f2d)
    assert unit.scorer_input().shape == (3, 5, 10)
    with pytest.raises(ValueError):
        build_unit(f2d, np.ones((3, 4)), agg, 0)


def _inputs(rng, n=400):
    cloud, feats, w, _, intr = random_instance(rng)
    f2d = rng.normal(size=intr.shape + (feats.shape[1],))
    return SceneInputs(cloud, intr, f2d, feats, rng.random(intr.shape), w)


def test_volume_segmentation_invariance():
    rng = np.random.default_rng(2)
    inputs = _inputs(rng)
    poses = [random_pose(rng, 0.5) for _ in range(60)]
    ref = list(build_volume(poses, inputs, 60))
    for seg in (1, 7, 27):
        stats = VolumeStats()
        got = list(build_volume(poses, inputs, seg, stats))
        assert stats.peak_materialized <= seg and stats.units_built == 60
        for a, b in zip(ref, got):
            assert a.candidate_index == b.candidate_index
            assert np.array_equal(a.aggregated.features, b.aggregated.features)
            assert np.array_equal(a.aggregated.weights, b.aggregated.weights)
    assert len(list(build_volume(poses[:1], inputs, 5))) == 1
    with pytest.raises(ValueError):
        list(build_volume(poses, inputs, 0))


def test_unit_weights_match_aggregate_weights():
    rng = np.random.default_rng(3)
    inputs = _inputs(rng)
    pose = random_pose(rng, 0.5)
    unit = next(build_volume([pose], inputs, 1))
    np.testing.assert_array_equal(unit.aggregated.weights,
                                  aggregate_weights(inputs.cloud, inputs.w3d, pose, inputs.intrinsics))
