import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nvsinpaint.camera import Camera, Intrinsics, Pose
from nvsinpaint.synthetic import SyntheticScene, Texture, orbit_pair

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def simple_camera(R=None, T=(0.0, 0.0, 0.0), f=549.0, c=256.0, res=(512, 512)):
    R = np.eye(3) if R is None else R
    return Camera(Intrinsics(f, f, c, c), Pose(np.asarray(R, float), np.asarray(T, float)), res)


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def render_pair(kind, res=32, d_az=15.0, elevation=20.0, seed=0, **kw):
    sc = SyntheticScene(kind, (res, res), Texture.random(seed))
    src, tgt = orbit_pair(res, d_az, elevation, **kw)
    return sc, sc.render(src), sc.render(tgt)


@pytest.fixture
def sphere_pair():
    return render_pair("sphere", 32, 15.0)
