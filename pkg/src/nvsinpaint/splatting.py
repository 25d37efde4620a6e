"""Forward softmax splatting of an RGB-D view into another camera."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera import Camera, EPS_DEPTH, project_points, unproject
from .errors import ContractError
from .imageio import valid_depth
from .parallel import map_tiles, row_tiles

BACKGROUND = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SplatParams:
    """Splatting knobs.

    Contributions to a target pixel are weighted by
    ``kernel_weight * exp(beta * (depth_scale_reference - d_t))``.  The
    reference cancels after normalisation; it only anchors the exponent,
    which is evaluated relative to the nearest contributor of each target
    pixel so it can neither overflow nor saturate.  ``None`` means the median
    splatted depth.
    """
    beta: float = 10.0
    kernel: str = "bilinear"
    depth_scale_reference: Optional[float] = None
    coverage_threshold: float = 1e-4
    cull_backfacing: bool = True

    def __post_init__(self):
        if self.beta < 0:
            raise ContractError(f"beta must be nonnegative, got {self.beta}")
        if self.kernel not in ("nearest", "bilinear"):
            raise ContractError(f"unknown kernel {self.kernel!r}")


@dataclass
class SplatResult:
    color: np.ndarray      # (H, W, 3)
    depth: np.ndarray      # (H, W), NaN where uncovered
    coverage: np.ndarray   # (H, W) accumulated kernel mass
    coverage_threshold: float = 1e-4
    src_camera: Optional[Camera] = None
    tgt_camera: Optional[Camera] = None

    @property
    def covered(self) -> np.ndarray:
        return self.coverage > self.coverage_threshold


def check_view(image: Optional[np.ndarray], depth: np.ndarray, camera: Camera) -> None:
    h, w = depth.shape[:2]
    if (w, h) != camera.resolution:
        raise ContractError(f"depth is {w}x{h} but camera resolution is {camera.resolution}")
    if image is not None and image.shape[:2] != depth.shape[:2]:
        raise ContractError(f"image {image.shape[:2]} and depth {depth.shape[:2]} differ in size")


def world_points(depth: np.ndarray, camera: Camera) -> np.ndarray:
    """``(H, W, 3)`` world positions; NaN at invalid depth."""
    h, w = depth.shape
    valid = valid_depth(depth)
    out = np.full((h, w, 3), np.nan)
    if valid.any():
        vs, us = np.nonzero(valid)
        out[vs, us] = unproject(np.stack([us, vs], axis=1), depth[vs, us], camera)
    return out


def _one_sided_diff(points: np.ndarray, depth: np.ndarray, axis: int) -> np.ndarray:
    """Derivative along ``axis`` using the neighbour closest in depth."""
    fwd = np.full_like(points, np.nan)
    bwd = np.full_like(points, np.nan)
    dfw = np.full(depth.shape, np.inf)
    dbw = np.full(depth.shape, np.inf)
    lo = [slice(None)] * 2
    hi = [slice(None)] * 2
    lo[axis], hi[axis] = slice(0, -1), slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    fwd[lo] = points[hi] - points[lo]
    bwd[hi] = points[hi] - points[lo]
    with np.errstate(invalid="ignore"):
        dfw[lo] = np.abs(depth[hi] - depth[lo])
        dbw[hi] = np.abs(depth[hi] - depth[lo])
    dfw[~np.isfinite(dfw)] = np.inf
    dbw[~np.isfinite(dbw)] = np.inf
    use_bwd = dbw < dfw
    return np.where(use_bwd[..., None], bwd, fwd)


def surface_normals(points: np.ndarray, depth: np.ndarray, camera: Camera) -> np.ndarray:
    """Unit normals facing ``camera``; NaN where neighbours are missing."""
    du = _one_sided_diff(points, depth, axis=1)
    dv = _one_sided_diff(points, depth, axis=0)
    n = np.cross(dv, du)
    norm = np.linalg.norm(n, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = n / norm
    to_cam = camera.center - points
    flip = np.sum(n * to_cam, axis=-1) < 0
    n[flip] *= -1
    return n


def facing_mask(points: np.ndarray, normals: np.ndarray, camera: Camera) -> np.ndarray:
    """False only where a known normal points away from ``camera``."""
    d = np.sum(normals * (camera.center - points), axis=-1)
    with np.errstate(invalid="ignore"):
        back = d < 0
    return ~back


def _deposits(uv: np.ndarray, kernel: str, w: int, h: int):
    """Target flat indices and kernel weights; each row of ``uv`` expands into taps."""
    if kernel == "nearest":
        iu = np.floor(uv[:, 0] + 0.5).astype(np.int64)
        iv = np.floor(uv[:, 1] + 0.5).astype(np.int64)
        ok = (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h)
        src = np.nonzero(ok)[0]
        return src, iv[ok] * w + iu[ok], np.ones(len(src))
    u0 = np.floor(uv[:, 0])
    v0 = np.floor(uv[:, 1])
    fu = uv[:, 0] - u0
    fv = uv[:, 1] - v0
    u0 = u0.astype(np.int64)
    v0 = v0.astype(np.int64)
    srcs, idxs, ks = [], [], []
    for du, dv, k in ((0, 0, (1 - fu) * (1 - fv)), (1, 0, fu * (1 - fv)),
                      (0, 1, (1 - fu) * fv), (1, 1, fu * fv)):
        iu, iv = u0 + du, v0 + dv
        ok = (iu >= 0) & (iu < w) & (iv >= 0) & (iv < h) & (k > 0)
        srcs.append(np.nonzero(ok)[0])
        idxs.append(iv[ok] * w + iu[ok])
        ks.append(k[ok])
    # tap-major order inside the tile; fixed, so the reduction order is too
    return np.concatenate(srcs), np.concatenate(idxs), np.concatenate(ks)


def forward_splat(src: np.ndarray, src_depth: np.ndarray, src_cam: Camera, tgt_cam: Camera,
                  params: SplatParams = SplatParams(), workers: int = 1) -> SplatResult:
    """Warp ``src`` into ``tgt_cam`` with depth-weighted softmax splatting.

    Target pixels whose accumulated kernel mass stays at or below
    ``params.coverage_threshold`` are background (black, NaN depth).
    Output is bit-identical for any ``workers``.
    """
    src = np.asarray(src, dtype=np.float64)
    src_depth = np.asarray(src_depth, dtype=np.float64)
    check_view(src, src_depth, src_cam)
    if src.ndim != 3 or src.shape[2] != 3:
        raise ContractError(f"source image must be (H, W, 3), got {src.shape}")
    W, H = tgt_cam.resolution
    points = world_points(src_depth, src_cam)
    keep = valid_depth(src_depth)
    if params.cull_backfacing:
        normals = surface_normals(points, src_depth, src_cam)
        keep &= facing_mask(points, normals, tgt_cam)

    def tile(rows: slice):
        pts = points[rows][keep[rows]]
        cols = src[rows][keep[rows]]
        uv, z, front = project_points(pts, tgt_cam)
        uv, z, cols = uv[front], z[front], cols[front]
        s, idx, k = _deposits(uv, params.kernel, W, H)
        return idx, k, z[s], cols[s]

    parts = map_tiles(tile, row_tiles(src_depth.shape[0]), workers)
    idx = np.concatenate([p[0] for p in parts])
    k = np.concatenate([p[1] for p in parts])
    z = np.concatenate([p[2] for p in parts])
    cols = np.concatenate([p[3] for p in parts]).reshape(-1, 3)

    n = W * H
    color = np.zeros((n, 3))
    color[:] = BACKGROUND
    depth = np.full(n, np.nan)
    mass = np.bincount(idx, weights=k, minlength=n)
    if len(idx):
        ref = params.depth_scale_reference
        if ref is None:
            ref = float(np.median(z))
        e = params.beta * (ref - z)
        top = np.full(n, -np.inf)
        np.maximum.at(top, idx, e)
        wgt = k * np.exp(e - top[idx])
        wsum = np.bincount(idx, weights=wgt, minlength=n)
        covered = mass > params.coverage_threshold
        csum = np.stack([np.bincount(idx, weights=wgt * cols[:, c], minlength=n) for c in range(3)], axis=1)
        dsum = np.bincount(idx, weights=wgt * z, minlength=n)
        color[covered] = csum[covered] / wsum[covered, None]
        depth[covered] = dsum[covered] / wsum[covered]
    return SplatResult(color.reshape(H, W, 3), depth.reshape(H, W), mass.reshape(H, W),
                       params.coverage_threshold, src_cam, tgt_cam)


def splat_oracle(src: np.ndarray, src_depth: np.ndarray, src_cam: Camera, tgt_cam: Camera,
                 supersample: int = 4) -> SplatResult:
    """Brute-force painter's algorithm: nearest camera-Z wins per target pixel.

    Every source pixel is split into ``supersample**2`` sub-samples, each
    carrying the pixel's depth and colour.  Written with plain scalar maths
    so it shares no code with :func:`forward_splat`.
    """
    src_depth = np.asarray(src_depth, dtype=np.float64)
    check_view(src, src_depth, src_cam)
    W, H = tgt_cam.resolution
    ks, kt = src_cam.intrinsics, tgt_cam.intrinsics
    Rs, Ts = src_cam.pose.R.tolist(), src_cam.pose.T.tolist()
    Rt, Tt = tgt_cam.pose.R.tolist(), tgt_cam.pose.T.tolist()
    offsets = [(a + 0.5) / supersample - 0.5 for a in range(supersample)]
    zbuf = {}
    h, w = src_depth.shape
    for j in range(h):
        for i in range(w):
            d = src_depth[j, i]
            if not (math.isfinite(d) and d > 0):
                continue
            for oy in offsets:
                for ox in offsets:
                    xc = ((i + ox - ks.cx) / ks.fx * d, (j + oy - ks.cy) / ks.fy * d, d)
                    pw = [sum(Rs[r][c] * xc[c] for c in range(3)) + Ts[r] for r in range(3)]
                    q = [pw[r] - Tt[r] for r in range(3)]
                    pc = [sum(Rt[r][c] * q[r] for r in range(3)) for c in range(3)]
                    zt = pc[2]
                    if zt <= EPS_DEPTH:
                        continue
                    tu = math.floor(kt.fx * pc[0] / zt + kt.cx + 0.5)
                    tv = math.floor(kt.fy * pc[1] / zt + kt.cy + 0.5)
                    if not (0 <= tu < W and 0 <= tv < H):
                        continue
                    best = zbuf.get((tv, tu))
                    if best is None or zt < best[0]:
                        zbuf[(tv, tu)] = (zt, j, i)
    color = np.zeros((H, W, 3))
    color[:] = BACKGROUND
    depth = np.full((H, W), np.nan)
    cover = np.zeros((H, W))
    for (tv, tu), (zt, j, i) in zbuf.items():
        color[tv, tu] = src[j, i]
        depth[tv, tu] = zt
        cover[tv, tu] = 1.0
    return SplatResult(color, depth, cover, 0.5, src_cam, tgt_cam)
