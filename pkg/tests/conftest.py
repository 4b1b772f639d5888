import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from posevolume.geometry import CameraIntrinsics, Pose, euler_to_rotation

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def small_intr():
    return CameraIntrinsics(fx=10.0, fy=10.0, cx=8.0, cy=6.0, width=16, height=12)


def random_pose(rng, max_t=3.0):
    R = euler_to_rotation(*rng.uniform(-180, 180, 3))
    return Pose(R, rng.uniform(-max_t, max_t, 3))
