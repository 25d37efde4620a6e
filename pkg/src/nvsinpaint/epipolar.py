"""Smooth epipolar inpainting mask.

A target pixel is *known* when the target sees, through it, either a point
of the source-visible surface or a stretch of space the source camera has
looked through (the segment between the source centre and each surface
point is empty).  Known pixels are shaded ``1 - angle/180`` where ``angle``
is the angle subtended at the 3D point by the two camera centres; unknown
pixels are 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, EPS_DEPTH, project_points, unproject
from .errors import ContractError, DomainError, SceneTooLargeError
from .imageio import valid_depth
from .parallel import map_tiles, row_tiles
from .splatting import SplatResult, check_view, world_points

ORACLE_MAX_SIDE = 32


@dataclass
class EpipolarMask:
    values: np.ndarray  # (H, W) in [0, 1]
    known: np.ndarray   # (H, W) bool

    @property
    def shape(self):
        return self.values.shape

    def binary(self) -> np.ndarray:
        return self.known.astype(np.float64)


def ray_angles(points: np.ndarray, src_center, tgt_center) -> np.ndarray:
    """Vectorised angle in degrees at ``points`` between the two camera centres.

    NaN where a point coincides with either centre.
    """
    a = np.asarray(src_center, dtype=np.float64) - points
    b = np.asarray(tgt_center, dtype=np.float64) - points
    ok = (np.linalg.norm(a, axis=-1) > 0) & (np.linalg.norm(b, axis=-1) > 0)
    # atan2 form stays accurate near 0 and 180 degrees, where arccos is not
    ang = np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.sum(a * b, axis=-1)))
    return np.where(ok, ang, np.nan)


def ray_angle(world_point, src_cam: Camera, tgt_cam: Camera) -> float:
    p = np.asarray(world_point, dtype=np.float64).reshape(1, 3)
    ang = ray_angles(p, src_cam.center, tgt_cam.center)[0]
    if np.isnan(ang):
        raise DomainError("point coincides with a camera centre")
    return float(ang)


def _same_camera(a: Camera, b: Camera) -> bool:
    return a is b or a == b


def _march(points, src_cam, tgt_cam, splat_depth, tol, step_scale, max_steps):
    """March source rays and return (flat target index, value) for known marks."""
    W, H = tgt_cam.resolution
    f_t = min(tgt_cam.intrinsics.fx, tgt_cam.intrinsics.fy)
    fwd_t = tgt_cam.forward
    c_s, c_t = src_cam.center, tgt_cam.center
    seg = points - c_s
    length = np.linalg.norm(seg, axis=1)
    dirs = seg / length[:, None]
    min_step = length / max_steps
    s = np.zeros(len(points))
    active = np.arange(len(points))
    idx_out, val_out = [], []
    while len(active):
        x = c_s + s[active, None] * dirs[active]
        rel = x - c_t
        d_t = rel @ fwd_t
        reach = np.where(d_t > EPS_DEPTH, d_t, np.linalg.norm(rel, axis=1))
        step = np.maximum(step_scale * reach / f_t, min_step[active])
        s[active] = np.minimum(s[active] + step, length[active])
        x = c_s + s[active, None] * dirs[active]

        uv, z, front = project_points(x, tgt_cam)
        iu = np.floor(uv[:, 0] + 0.5)
        iv = np.floor(uv[:, 1] + 0.5)
        ok = front & (iu >= 0) & (iu < W) & (iv >= 0) & (iv < H)
        flat = (iv[ok] * W + iu[ok]).astype(np.int64)
        behind = splat_depth[flat]
        with np.errstate(invalid="ignore"):
            visible = ~(z[ok] > behind + tol)  # NaN splat depth: nothing in the way
        ang = ray_angles(x[ok][visible], c_s, c_t)
        keep = ~np.isnan(ang)
        idx_out.append(flat[visible][keep])
        val_out.append(1.0 - ang[keep] / 180.0)
        active = active[s[active] < length[active]]
    if not idx_out:
        return np.zeros(0, np.int64), np.zeros(0)
    return np.concatenate(idx_out), np.concatenate(val_out)


def epipolar_mask(src_depth: np.ndarray, src_cam: Camera, tgt_cam: Camera, splat: SplatResult,
                  step_scale: float = 0.5, max_steps: int = 4096,
                  occlusion_tolerance: float = 1e-3, ray_supersample: int = 2,
                  workers: int = 1) -> EpipolarMask:
    """Smooth epipolar mask for warping ``src_cam`` into ``tgt_cam``.

    Each valid source pixel casts ``ray_supersample**2`` rays spread over its
    footprint, each ending at the pixel's depth.  Free-space marks from the
    ray march keep the minimum value per pixel.
    Splat-covered pixels then take the value at their own surface point
    (target pixel unprojected at the splatted depth).  ``occlusion_tolerance``
    is relative to the largest bounding-box extent of the source cloud.
    """
    src_depth = np.asarray(src_depth, dtype=np.float64)
    check_view(None, src_depth, src_cam)
    W, H = tgt_cam.resolution
    if splat.depth.shape != (H, W):
        raise ContractError(f"splat is {splat.depth.shape[::-1]} but target camera is {W}x{H}")
    if splat.src_camera is not None and not _same_camera(splat.src_camera, src_cam):
        raise ContractError("splat was produced from a different source camera")
    if splat.tgt_camera is not None and not _same_camera(splat.tgt_camera, tgt_cam):
        raise ContractError("splat was produced for a different target camera")

    values = np.full(W * H, np.inf)
    valid = valid_depth(src_depth)
    if valid.any():
        points = world_points(src_depth, src_cam)
        cloud = points[valid]
        tol = occlusion_tolerance * float((cloud.max(axis=0) - cloud.min(axis=0)).max())
        flat_splat = splat.depth.reshape(-1)

        n = max(int(ray_supersample), 1)
        offsets = [(a + 0.5) / n - 0.5 for a in range(n)]

        def tile(rows: slice):
            vs, us = np.nonzero(valid[rows])
            vs = vs + rows.start
            d = src_depth[vs, us]
            pts = np.concatenate([unproject(np.stack([us + ox, vs + oy], axis=1), d, src_cam)
                                  for oy in offsets for ox in offsets])
            return _march(pts, src_cam, tgt_cam, flat_splat, tol, step_scale, max_steps)

        for idx, val in map_tiles(tile, row_tiles(src_depth.shape[0]), workers):
            np.minimum.at(values, idx, val)

    values = values.reshape(H, W)
    covered = splat.covered
    if covered.any():
        vs, us = np.nonzero(covered)
        surf = unproject(np.stack([us, vs], axis=1), splat.depth[vs, us], tgt_cam)
        ang = ray_angles(surf, src_cam.center, tgt_cam.center)
        values[vs, us] = 1.0 - np.nan_to_num(ang, nan=0.0) / 180.0
    known = np.isfinite(values)
    values = np.where(known, np.clip(values, 0.0, 1.0), 0.0)
    return EpipolarMask(values, known)


def mask_oracle(src_depth: np.ndarray, src_cam: Camera, tgt_cam: Camera,
                samples_per_ray: int = 2048, occlusion_tolerance: float = 1e-3,
                supersample: int = 4) -> np.ndarray:
    """Brute-force known/unknown map by exhaustive sampling of target rays.

    Each target pixel is probed with ``supersample**2`` rays spread over its
    square, every ray sampled densely in camera-Z.  A sample counts as known
    when it projects into a valid source pixel at or in front of that
    pixel's depth.  Small scenes only.
    """
    src_depth = np.asarray(src_depth, dtype=np.float64)
    W, H = tgt_cam.resolution
    if max(W, H, *src_depth.shape) > ORACLE_MAX_SIDE:
        raise SceneTooLargeError(f"oracle is limited to {ORACLE_MAX_SIDE}x{ORACLE_MAX_SIDE} scenes")
    check_view(None, src_depth, src_cam)
    known = np.zeros((H, W), dtype=bool)
    valid = valid_depth(src_depth)
    if not valid.any():
        return known
    hs, ws = src_depth.shape
    ks, kt = src_cam.intrinsics, tgt_cam.intrinsics
    Rs, Ts = src_cam.pose.R, src_cam.pose.T
    Rt, Tt = tgt_cam.pose.R, tgt_cam.pose.T

    # sample range: up to the farthest point of the source frustum content
    vs, us = np.nonzero(valid)
    d = src_depth[vs, us]
    cam_pts = np.stack([(us - ks.cx) / ks.fx * d, (vs - ks.cy) / ks.fy * d, d], axis=1)
    world = cam_pts @ Rs.T + Ts
    extent = (world.max(axis=0) - world.min(axis=0)).max()
    tol = occlusion_tolerance * extent
    far = max(((world - Tt) @ Rt[:, 2]).max(), (Ts - Tt) @ Rt[:, 2]) * 1.05
    if far <= 0:
        return known
    depths = np.linspace(far / samples_per_ray, far, samples_per_ray)

    offsets = np.array([(a + 0.5) / supersample - 0.5 for a in range(supersample)])
    ou, ov = np.meshgrid(offsets, offsets)
    for v in range(H):
        for u in range(W):
            sub = np.stack([(u + ou.ravel() - kt.cx) / kt.fx, (v + ov.ravel() - kt.cy) / kt.fy,
                            np.ones(ou.size)], axis=1) @ Rt.T
            samples = (Tt + depths[:, None, None] * sub[None]).reshape(-1, 3)
            pc = (samples - Ts) @ Rs
            z = pc[:, 2]
            front = z > EPS_DEPTH
            zs = np.where(front, z, 1.0)
            su = np.floor(ks.fx * pc[:, 0] / zs + ks.cx + 0.5)
            sv = np.floor(ks.fy * pc[:, 1] / zs + ks.cy + 0.5)
            inb = front & (su >= 0) & (su < ws) & (sv >= 0) & (sv < hs)
            if not inb.any():
                continue
            sd = src_depth[sv[inb].astype(int), su[inb].astype(int)]
            with np.errstate(invalid="ignore"):
                hit = np.isfinite(sd) & (sd > 0) & (z[inb] <= sd + tol)
            known[v, u] = bool(hit.any())
    return known
