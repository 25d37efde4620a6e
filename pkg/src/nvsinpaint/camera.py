"""Pinhole camera model.

Conventions
-----------
* Camera frame: +Z forward, +X right, +Y down.
* Pixel coordinates: origin at the top-left, integer coordinates address pixel
  centers, so pixel index ``(i, j)`` sits at ``(u, v) = (i, j)``.
* Poses are camera-to-world: ``p_world = R @ p_cam + T``.
* Depth is camera-frame Z, not ray length.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .errors import BehindCameraError, ContractError, DegenerateCloudError, DomainError
from .parallel import stream

EPS_DEPTH = 1e-6
WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    R: np.ndarray
    T: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64).reshape(3, 3)
        T = np.asarray(self.T, dtype=np.float64).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() >= 1e-6 or np.linalg.det(R) <= 0:
            raise ContractError("rotation must be orthonormal with det +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "T", T)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.R, other.R) and np.array_equal(self.T, other.T)

    __hash__ = None

    def isclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.R, other.R, rtol=0, atol=atol) and np.allclose(self.T, other.T, rtol=0, atol=atol))

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first."""
        return Pose(self.R @ other.R, self.R @ other.T + self.T)

    def inverse(self) -> "Pose":
        return Pose(self.R.T, -self.R.T @ self.T)


@dataclass(frozen=True)
class Camera:
    intrinsics: Intrinsics
    pose: Pose
    resolution: Tuple[int, int]

    def __post_init__(self):
        w, h = (int(x) for x in self.resolution)
        if w <= 0 or h <= 0:
            raise ContractError(f"resolution must be positive, got {self.resolution}")
        object.__setattr__(self, "resolution", (w, h))
        k = self.intrinsics
        if not (0 <= k.cx <= w and 0 <= k.cy <= h):
            raise ContractError(f"principal point ({k.cx}, {k.cy}) outside image {w}x{h}")

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    @property
    def center(self) -> np.ndarray:
        return self.pose.T

    @property
    def forward(self) -> np.ndarray:
        return self.pose.R[:, 2]

    def to_dict(self) -> dict:
        k = self.intrinsics
        return {
            "intrinsics": {"fx": float(k.fx), "fy": float(k.fy), "cx": float(k.cx), "cy": float(k.cy)},
            "pose": {"R": [float(x) for x in self.pose.R.reshape(-1)],
                     "T": [float(x) for x in self.pose.T]},
            "resolution": [self.width, self.height],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        try:
            k = d["intrinsics"]
            intr = Intrinsics(float(k["fx"]), float(k["fy"]), float(k["cx"]), float(k["cy"]))
            R = d["pose"]["R"]
            T = d["pose"]["T"]
            if len(R) != 9 or len(T) != 3:
                raise ContractError("pose.R needs 9 values and pose.T needs 3")
            w, h = d["resolution"]
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ContractError):
                raise
            raise ContractError(f"malformed camera record: {exc!r}") from exc
        return cls(intr, Pose(np.array(R, dtype=np.float64), np.array(T, dtype=np.float64)), (int(w), int(h)))


def save_camera(path, camera: Camera) -> None:
    with open(path, "w") as f:
        json.dump(camera.to_dict(), f, indent=1)


def load_camera(path) -> Camera:
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as exc:
            raise ContractError(f"{path}: invalid JSON ({exc})") from exc
    return Camera.from_dict(d)


def fov_to_intrinsics(fov_deg: float, resolution: Tuple[int, int]) -> Intrinsics:
    """Square-pixel intrinsics from a horizontal field of view."""
    if not (0 < fov_deg < 180):
        raise DomainError(f"field of view must lie in (0, 180) degrees, got {fov_deg}")
    w, h = resolution
    f = (w / 2) / math.tan(math.radians(fov_deg) / 2)
    return Intrinsics(f, f, w / 2, h / 2)


def _as_points(a, width: int) -> Tuple[np.ndarray, bool]:
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    return a.reshape(-1, width), single


def unproject(pixel, depth, camera: Camera) -> np.ndarray:
    """Lift pixel(s) with camera-Z depth into world space.

    Accepts a single ``(u, v)`` with a scalar depth, or arrays of shape
    ``(N, 2)`` and ``(N,)``.
    """
    uv, single = _as_points(pixel, 2)
    d = np.asarray(depth, dtype=np.float64).reshape(-1)
    if not np.all(d > 0):
        raise DomainError("depth must be positive")
    k = camera.intrinsics
    x = np.stack([(uv[:, 0] - k.cx) / k.fx, (uv[:, 1] - k.cy) / k.fy, np.ones(len(uv))], axis=1)
    pw = (x * d[:, None]) @ camera.pose.R.T + camera.pose.T
    return pw[0] if single else pw


def world_to_camera(points: np.ndarray, camera: Camera) -> np.ndarray:
    return (np.asarray(points, dtype=np.float64) - camera.pose.T) @ camera.pose.R


def project_points(points: np.ndarray, camera: Camera) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Non-raising batch projection.

    Returns ``(uv, depth, in_front)``; rows with ``in_front == False`` have
    undefined ``uv``.
    """
    pc = world_to_camera(np.asarray(points, dtype=np.float64).reshape(-1, 3), camera)
    z = pc[:, 2]
    in_front = z > EPS_DEPTH
    zs = np.where(in_front, z, 1.0)
    k = camera.intrinsics
    uv = np.stack([k.fx * pc[:, 0] / zs + k.cx, k.fy * pc[:, 1] / zs + k.cy], axis=1)
    return uv, z, in_front


def project(point, camera: Camera):
    """Project world point(s) into ``camera``; returns ``(uv, depth)``."""
    pts, single = _as_points(point, 3)
    uv, z, ok = project_points(pts, camera)
    if not np.all(ok):
        raise BehindCameraError("point lies at or behind the camera plane")
    if single:
        return uv[0], float(z[0])
    return uv, z


def relative_transform(source: Pose, target: Pose) -> Pose:
    """Pose taking source-camera coordinates to target-camera coordinates."""
    return Pose(target.R.T @ source.R, target.R.T @ (source.T - target.T))


def look_at(eye, target, up=WORLD_UP) -> np.ndarray:
    """Camera-to-world rotation for a camera at ``eye`` looking at ``target``.

    When the view direction is parallel to ``up`` the up vector is swapped
    for world +Y (or +X), which keeps the construction defined at the poles.
    """
    f = np.asarray(target, dtype=np.float64) - np.asarray(eye, dtype=np.float64)
    n = np.linalg.norm(f)
    if n == 0:
        raise DomainError("eye coincides with look-at target")
    f = f / n
    up = np.asarray(up, dtype=np.float64)
    for candidate in (up, np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])):
        r = np.cross(f, candidate)
        if np.linalg.norm(r) > 1e-9:
            break
    r = r / np.linalg.norm(r)
    d = np.cross(f, r)
    return np.stack([r, d, f], axis=1)


@dataclass(frozen=True)
class PoseSamplerConfig:
    radius_range: Tuple[float, float] = (3.0, 4.0)
    fov_deg: float = 50.0
    polar_range_deg: Tuple[float, float] = (-65.0, 75.0)
    azimuth_range_deg: Tuple[float, float] = (0.0, 360.0)
    look_at: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    resolution: Tuple[int, int] = (512, 512)

    def __post_init__(self):
        for name in ("radius_range", "polar_range_deg", "azimuth_range_deg"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise DomainError(f"{name}: min {lo} exceeds max {hi}")
        if not (0 < self.fov_deg < 180):
            raise DomainError(f"fov_deg must lie in (0, 180), got {self.fov_deg}")


def orbit_camera(radius: float, polar_deg: float, azimuth_deg: float,
                 config: Optional[PoseSamplerConfig] = None) -> Camera:
    """Camera on a sphere around ``config.look_at``.

    ``polar_deg`` is elevation above the XY plane (0 = equator), azimuth is
    measured from +X towards +Y.
    """
    config = config or PoseSamplerConfig()
    el, az = math.radians(polar_deg), math.radians(azimuth_deg)
    center = np.asarray(config.look_at, dtype=np.float64)
    eye = center + radius * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    R = look_at(eye, center)
    return Camera(fov_to_intrinsics(config.fov_deg, config.resolution), Pose(R, eye), config.resolution)


def sample_pose(rng_seed: int, config: PoseSamplerConfig) -> Camera:
    rng = stream(rng_seed)
    radius = rng.uniform(*config.radius_range)
    polar = rng.uniform(*config.polar_range_deg)
    azimuth = rng.uniform(*config.azimuth_range_deg)
    return orbit_camera(radius, polar, azimuth, config)


@dataclass(frozen=True, eq=False)
class Normalization:
    """``p' = scale * (p - offset)``."""
    scale: float
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * (np.asarray(points, dtype=np.float64) - self.offset)

    def invert(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) / self.scale + self.offset

    def apply_to_camera(self, camera: Camera) -> Camera:
        # depths seen through the new camera must be scaled by ``scale`` too
        return Camera(camera.intrinsics, Pose(camera.pose.R, self.apply(camera.pose.T)), camera.resolution)


def recenter_rescale(points: Sequence) -> Tuple[np.ndarray, Normalization]:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise DegenerateCloudError("empty point cloud")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    half = (hi - lo).max() / 2
    if not half > 0:
        raise DegenerateCloudError("all points coincide")
    norm = Normalization(1.0 / half, (lo + hi) / 2)
    return np.clip(norm.apply(pts), -1.0, 1.0), norm
