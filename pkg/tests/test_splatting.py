import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvsinpaint.camera import Camera, Intrinsics, Pose, project_points, unproject
from nvsinpaint.errors import ContractError
from nvsinpaint.splatting import SplatParams, forward_splat, splat_oracle
from nvsinpaint.synthetic import KINDS

from conftest import render_pair


def _two_on_one_ray():
    """Two source pixels landing on target pixel (1, 1) at target depths 1 and 2."""
    src_cam = Camera(Intrinsics(1, 1, 2, 0), Pose.identity(), (2, 1))
    tgt_cam = Camera(Intrinsics(1, 1, 1, 1), Pose(np.eye(3), np.array([-2.0, 0, 0])), (3, 3))
    rgb = np.array([[[1.0, 1, 1], [0, 0, 0]]])
    depth = np.array([[1.0, 2.0]])
    return rgb, depth, src_cam, tgt_cam


def test_nearer_contributor_dominates():
    rgb, depth, s, t = _two_on_one_ray()
    sp = forward_splat(rgb, depth, s, t, SplatParams(beta=20, kernel="nearest", cull_backfacing=False))
    assert sp.covered.sum() == 1 and sp.covered[1, 1]
    assert sp.color[1, 1].min() >= 1 - 1e-8
    # weight ratio e^-20 between the two contributors
    np.testing.assert_allclose(sp.color[1, 1], 1 / (1 + np.exp(-20.0)), rtol=0, atol=1e-15)


def test_nearer_contributor_monotone_in_beta():
    rgb, depth, s, t = _two_on_one_ray()
    gray = [forward_splat(rgb, depth, s, t, SplatParams(beta=b, kernel="nearest", cull_backfacing=False)).color[1, 1, 0]
            for b in (0, 0.5, 1, 2, 5, 10, 50, 1000)]
    assert gray[0] == pytest.approx(0.5)
    assert all(b >= a for a, b in zip(gray, gray[1:]))
    assert gray[-1] == 1.0


def test_large_beta_no_overflow():
    rgb, depth, s, t = _two_on_one_ray()
    sp = forward_splat(rgb, depth * 1e3, s, t, SplatParams(beta=1e6, kernel="nearest", cull_backfacing=False))
    assert np.isfinite(sp.color).all()


@pytest.mark.parametrize("kind", KINDS)
def test_identity_nearest_exact(kind):
    _, v, _ = render_pair(kind, 64, 0.0)
    sp = forward_splat(v.rgb, v.depth, v.camera, v.camera, SplatParams(kernel="nearest"))
    assert np.array_equal(sp.covered, v.mask)
    assert np.array_equal(sp.color[v.mask], v.rgb[v.mask])
    np.testing.assert_allclose(sp.depth[v.mask], v.depth[v.mask], rtol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_identity_bilinear_close(kind):
    _, v, _ = render_pair(kind, 32, 0.0)
    sp = forward_splat(v.rgb, v.depth, v.camera, v.camera)
    assert np.array_equal(sp.covered, v.mask)
    assert np.abs(sp.color[v.mask] - v.rgb[v.mask]).max() <= 1e-6


def test_all_invalid_depth():
    _, v, _ = render_pair("sphere", 16, 0.0)
    sp = forward_splat(v.rgb, np.full_like(v.depth, np.nan), v.camera, v.camera)
    assert not sp.covered.any()
    assert (sp.color == 0).all()
    assert np.isnan(sp.depth).all()


def test_shape_mismatch():
    _, v, _ = render_pair("sphere", 16, 0.0)
    with pytest.raises(ContractError):
        forward_splat(v.rgb[:-1], v.depth, v.camera, v.camera)
    with pytest.raises(ContractError):
        forward_splat(v.rgb, v.depth[:, :-1], v.camera, v.camera)


def test_bad_params():
    with pytest.raises(ContractError):
        SplatParams(kernel="cubic")
    with pytest.raises(ContractError):
        SplatParams(beta=-1)


@pytest.mark.parametrize("kernel", ["nearest", "bilinear"])
def test_workers_bit_identical(kernel):
    _, v, t = render_pair("two_planes", 48, 20.0)
    runs = [forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(kernel=kernel), workers=w)
            for w in (1, 3, 8)]
    for r in runs[1:]:
        assert np.array_equal(r.color, runs[0].color)
        assert np.array_equal(r.coverage, runs[0].coverage)
        assert np.array_equal(r.depth, runs[0].depth, equal_nan=True)


@given(st.tuples(*[st.floats(0, 1)] * 3), st.floats(0, 200), st.sampled_from(KINDS))
def test_constant_color_is_preserved(c, beta, kind):
    # output is a convex combination of contributors, so a flat input stays flat
    _, v, t = render_pair(kind, 16, 25.0)
    rgb = np.broadcast_to(np.array(c), v.rgb.shape)
    sp = forward_splat(rgb, v.depth, v.camera, t.camera, SplatParams(beta=beta))
    np.testing.assert_allclose(sp.color[sp.covered], np.broadcast_to(c, (sp.covered.sum(), 3)), atol=1e-12)
    assert (sp.coverage >= 0).all()


def test_color_within_contributor_range():
    _, v, t = render_pair("sphere", 32, 15.0)
    sp = forward_splat(v.rgb, v.depth, v.camera, t.camera)
    lo, hi = v.rgb[v.mask].min(axis=0), v.rgb[v.mask].max(axis=0)
    c = sp.color[sp.covered]
    assert (c >= lo - 1e-12).all() and (c <= hi + 1e-12).all()


@given(st.floats(0.1, 5), st.tuples(*[st.floats(0, 1)] * 6))
def test_monotone_occlusion(near, cols):
    # two contributors on one target pixel: the blend only moves towards the nearer colour.
    # With cx = 2, pixel 1 at twice the depth of pixel 0 lies on the same line parallel to Z.
    src_cam = Camera(Intrinsics(1, 1, 2, 0), Pose.identity(), (2, 1))
    tgt_cam = Camera(Intrinsics(1, 1, 1, 1), Pose(np.eye(3), np.array([-2.0 * near, 0, 0])), (3, 3))
    depth = np.array([[near, 2 * near]])
    rgb = np.array([[cols[:3], cols[3:]]])
    dist = []
    for beta in (0, 0.1, 1, 10, 100, 1e4):
        sp = forward_splat(rgb, depth, src_cam, tgt_cam, SplatParams(beta=beta, kernel="nearest", cull_backfacing=False))
        assert sp.covered.sum() == 1
        dist.append(np.abs(sp.color[1, 1] - rgb[0, 0]).max())
    assert all(b <= a + 1e-12 for a, b in zip(dist, dist[1:]))


def test_behind_object_nearly_empty():
    _, v, t = render_pair("sphere", 32, 180.0, elevation=0.0)
    sp = forward_splat(v.rgb, v.depth, v.camera, t.camera)
    assert sp.covered.sum() <= 0.01 * v.mask.sum()
    off = forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(cull_backfacing=False))
    assert off.covered.sum() > sp.covered.sum()


def test_oracle_identity():
    _, v, _ = render_pair("plane", 16, 0.0)
    oc = splat_oracle(v.rgb, v.depth, v.camera, v.camera)
    assert np.array_equal(oc.color[v.mask], v.rgb[v.mask])
    assert np.array_equal(oc.covered, v.mask)


def _enumerate_min_depth(depth, src_cam, tgt_cam, ss=4):
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    vs, us = np.nonzero(np.isfinite(depth))
    best = np.full((tgt_cam.height, tgt_cam.width), np.inf)
    for oy in offs:
        for ox in offs:
            pts = unproject(np.stack([us + ox, vs + oy], 1), depth[vs, us], src_cam)
            uv, z, ok = project_points(pts, tgt_cam)
            px = np.floor(uv + 0.5).astype(int)
            ok &= (px[:, 0] >= 0) & (px[:, 0] < tgt_cam.width) & (px[:, 1] >= 0) & (px[:, 1] < tgt_cam.height)
            np.minimum.at(best, (px[ok, 1], px[ok, 0]), z[ok])
    return best


def test_oracle_nearest_z_wins_exhaustively():
    _, v, t = render_pair("two_planes", 16, 15.0)
    oc = splat_oracle(v.rgb, v.depth, v.camera, t.camera)
    best = _enumerate_min_depth(v.depth, v.camera, t.camera)
    assert np.array_equal(oc.covered, np.isfinite(best))
    np.testing.assert_allclose(oc.depth[oc.covered], best[oc.covered], rtol=1e-12)


def test_coverage_threshold():
    _, v, t = render_pair("sphere", 32, 15.0)
    a = forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(coverage_threshold=1e-4))
    b = forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(coverage_threshold=0.5))
    assert np.array_equal(a.coverage, b.coverage)
    assert b.covered.sum() <= a.covered.sum()
    assert np.array_equal(b.covered, b.coverage > 0.5)
