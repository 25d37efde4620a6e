"""Analytic RGB-D test scenes.

Geometry is ray-cast exactly (closed-form sphere and rectangle hits), and
the texture is a function of world position, so any camera can be rendered
as ground truth for a warp.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .camera import Camera, PoseSamplerConfig, orbit_camera, sample_pose
from .errors import DomainError
from .parallel import stream

KINDS = ("plane", "sphere", "two_planes")


@dataclass(frozen=True, eq=False)
class Sphere:
    center: np.ndarray
    radius: float

    def intersect(self, origin, dirs):
        oc = origin - self.center
        a = np.einsum("ij,ij->i", dirs, dirs)
        b = 2.0 * dirs @ oc
        c = oc @ oc - self.radius ** 2
        disc = b * b - 4 * a * c
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        t = (-b - sq) / (2 * a)
        t_far = (-b + sq) / (2 * a)
        t = np.where(t > 0, t, t_far)
        return np.where(hit & (t > 0), t, np.inf)


@dataclass(frozen=True, eq=False)
class Rect:
    """Double-sided rectangle ``center + s*axis_u + t*axis_v``, |s|,|t| <= half."""
    center: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    half_u: float
    half_v: float

    def intersect(self, origin, dirs):
        n = np.cross(self.axis_u, self.axis_v)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((self.center - origin) @ n) / denom
        t = np.where(np.abs(denom) > 1e-12, t, np.inf)
        with np.errstate(invalid="ignore"):
            p = origin + t[:, None] * dirs - self.center
            inside = (np.abs(p @ self.axis_u) <= self.half_u) & (np.abs(p @ self.axis_v) <= self.half_v)
        return np.where(inside & (t > 0), t, np.inf)


def _geometry(kind: str):
    X, Y, Z = np.eye(3)
    if kind == "plane":
        return [Rect(np.zeros(3), X, Y, 1.0, 1.0)]
    if kind == "sphere":
        return [Sphere(np.zeros(3), 1.0)]
    if kind == "two_planes":
        return [Rect(np.array([-0.5, 0.0, 0.0]), Y, Z, 1.0, 1.0),
                Rect(np.array([0.5, 0.0, 0.0]), Y, Z, 0.5, 0.5)]
    raise DomainError(f"unknown scene kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True, eq=False)
class Texture:
    """Sum of random low-frequency sinusoids per channel, optionally a checker."""
    waves: np.ndarray   # (3, n, 3) wave vectors
    phases: np.ndarray  # (3, n)
    amps: np.ndarray    # (3, n)
    checker: bool = False

    @classmethod
    def random(cls, seed: int, n_waves: int = 3, checker: bool = False) -> "Texture":
        rng = stream(seed, 1)
        dirs = rng.normal(size=(3, n_waves, 3))
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        freq = rng.uniform(1.0, 2.5, size=(3, n_waves, 1))
        phases = rng.uniform(0, 2 * np.pi, size=(3, n_waves))
        amps = np.full((3, n_waves), 0.35 / n_waves)
        return cls(dirs * freq, phases, amps, checker)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        arg = np.einsum("pk,cnk->pcn", points, self.waves) + self.phases
        rgb = 0.5 + np.sum(self.amps * np.sin(arg), axis=-1)
        if self.checker:
            cells = np.floor(points * 4).sum(axis=-1) % 2
            rgb = 0.6 * rgb + 0.4 * cells[:, None]
        return np.clip(rgb, 0.0, 1.0)


@dataclass
class SyntheticView:
    rgb: np.ndarray
    depth: np.ndarray
    mask: np.ndarray
    camera: Camera


@dataclass
class SyntheticScene:
    kind: str
    resolution: Tuple[int, int]
    texture: Texture
    views: List[SyntheticView] = field(default_factory=list)

    def __post_init__(self):
        self.primitives = _geometry(self.kind)

    def hit_depth(self, camera: Camera) -> np.ndarray:
        """Camera-Z depth of the first hit per pixel, ``inf`` for misses."""
        origin, dirs = pixel_rays(camera)
        t = np.full(len(dirs), np.inf)
        for prim in self.primitives:
            t = np.minimum(t, prim.intersect(origin, dirs))
        return t.reshape(camera.height, camera.width)

    def render(self, camera: Camera) -> SyntheticView:
        t = self.hit_depth(camera)
        mask = np.isfinite(t)
        origin, dirs = pixel_rays(camera)
        rgb = np.zeros((camera.height, camera.width, 3))
        flat = mask.reshape(-1)
        hits = origin + t.reshape(-1)[flat, None] * dirs[flat]
        rgb.reshape(-1, 3)[flat] = self.texture(hits)
        depth = np.where(mask, t, np.nan)
        return SyntheticView(rgb, depth, mask, camera)


def pixel_rays(camera: Camera):
    """Camera centre and per-pixel world directions scaled to unit camera-Z."""
    k = camera.intrinsics
    vs, us = np.mgrid[0:camera.height, 0:camera.width]
    xc = np.stack([(us.reshape(-1) - k.cx) / k.fx, (vs.reshape(-1) - k.cy) / k.fy,
                   np.ones(us.size)], axis=1)
    return camera.center, xc @ camera.pose.R.T


def make_synthetic_scene(kind: str, resolution: int = 64, texture_seed: int = 0, n_views: int = 24,
                         pose_config: Optional[PoseSamplerConfig] = None,
                         checker: bool = False) -> SyntheticScene:
    """Build a scene and render ``n_views`` cameras from ``sample_pose``."""
    if resolution < 16:
        raise DomainError(f"resolution must be at least 16, got {resolution}")
    res = (int(resolution), int(resolution))
    config = pose_config or PoseSamplerConfig(resolution=res)
    if config.resolution != res:
        config = PoseSamplerConfig(config.radius_range, config.fov_deg, config.polar_range_deg,
                                   config.azimuth_range_deg, config.look_at, res)
    scene = SyntheticScene(kind, res, Texture.random(texture_seed, checker=checker))
    seeds = stream(texture_seed, 2).integers(0, 2 ** 31, size=n_views)
    scene.views = [scene.render(sample_pose(int(s), config)) for s in seeds]
    return scene


def orbit_pair(resolution: int = 64, d_azimuth: float = 15.0, elevation: float = 20.0,
               radius: float = 3.0, azimuth: float = 0.0, fov_deg: float = 50.0,
               d_elevation: float = 0.0, target_radius: Optional[float] = None):
    """Source/target cameras on an orbit around the origin."""
    cfg = PoseSamplerConfig(fov_deg=fov_deg, resolution=(resolution, resolution))
    src = orbit_camera(radius, elevation, azimuth, cfg)
    tgt = orbit_camera(target_radius or radius, elevation + d_elevation, azimuth + d_azimuth, cfg)
    return src, tgt
