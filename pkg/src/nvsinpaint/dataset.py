"""On-disk scene layout and view-pair sampling.

A scene directory holds index-aligned files::

    scene/rgb/0000.png  scene/depth/0000.pfm  scene/cam/0000.json  [scene/mask/0000.png]

Depth is camera-Z in world units; cameras use the JSON schema of
:mod:`nvsinpaint.camera`.  Without a mask file the foreground is the set of
valid-depth pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .camera import Camera, Pose, load_camera, relative_transform, save_camera
from .errors import ContractError, DomainError, NVSError
from .imageio import (png_size, read_depth, read_gray, read_pfm, read_rgb, valid_depth,
                      write_depth, write_gray, write_rgb)
from .parallel import stream


@dataclass(frozen=True)
class ViewRecord:
    index: str
    image: Path
    depth: Path
    camera: Path
    mask: Optional[Path] = None

    def load_camera(self) -> Camera:
        return load_camera(self.camera)

    def load(self):
        """``(rgb, depth, foreground, camera)``."""
        rgb = read_rgb(self.image)
        depth = read_depth(self.depth)
        cam = self.load_camera()
        fg = read_gray(self.mask) > 0.5 if self.mask else valid_depth(depth)
        return rgb, depth, fg, cam


@dataclass(frozen=True)
class Diagnostic:
    index: str
    path: str
    message: str


@dataclass
class ScanResult:
    records: List[ViewRecord] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)


@dataclass(frozen=True)
class ViewPair:
    source: ViewRecord
    target: ViewRecord

    def relative_pose(self) -> Pose:
        return relative_transform(self.source.load_camera().pose, self.target.load_camera().pose)


def _check_record(rec: ViewRecord) -> Optional[Diagnostic]:
    current = rec.camera
    try:
        cam = load_camera(rec.camera)
        current = rec.depth
        h, w = read_pfm(rec.depth).shape[:2]
        if (w, h) != cam.resolution:
            raise ContractError(f"depth is {w}x{h}, camera says {cam.resolution}")
        current = rec.image
        if png_size(rec.image) != cam.resolution:
            raise ContractError(f"image is {png_size(rec.image)}, camera says {cam.resolution}")
        if rec.mask is not None:
            current = rec.mask
            if png_size(rec.mask) != cam.resolution:
                raise ContractError("mask size differs from camera resolution")
    except (NVSError, OSError, ValueError) as exc:
        return Diagnostic(rec.index, str(current), str(exc))
    return None


def scan_scene(path) -> ScanResult:
    """Collect index-aligned records; broken entries become diagnostics."""
    root = Path(path)
    result = ScanResult()
    rgb_dir = root / "rgb"
    if not rgb_dir.is_dir():
        return result
    for img in sorted(rgb_dir.glob("*.png")):
        idx = img.stem
        depth, cam, mask = root / "depth" / f"{idx}.pfm", root / "cam" / f"{idx}.json", root / "mask" / f"{idx}.png"
        missing = [p for p in (depth, cam) if not p.exists()]
        if missing:
            result.diagnostics.append(Diagnostic(idx, str(missing[0]), "missing file"))
            continue
        rec = ViewRecord(idx, img, depth, cam, mask if mask.exists() else None)
        diag = _check_record(rec)
        if diag:
            result.diagnostics.append(diag)
        else:
            result.records.append(rec)
    return result


def _view_angle(a: ViewRecord, b: ViewRecord) -> float:
    fa, fb = a.load_camera().forward, b.load_camera().forward
    return math.degrees(math.acos(float(np.clip(fa @ fb, -1.0, 1.0))))


def sample_pair(records, rng_seed: int, min_angle: Optional[float] = None,
                max_tries: int = 1000) -> ViewPair:
    """Uniform ordered pair of distinct records.

    ``min_angle`` (degrees between viewing directions) rejects pairs that
    are too close; unset by default.
    """
    n = len(records)
    if n < 2:
        raise DomainError(f"need at least two views, got {n}")
    rng = stream(rng_seed)
    for _ in range(max_tries):
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        pair = ViewPair(records[i], records[j])
        if min_angle is None or _view_angle(pair.source, pair.target) >= min_angle:
            return pair
    raise DomainError(f"no pair with at least {min_angle} degrees after {max_tries} draws")


def write_view(root, index: int, rgb, depth, camera: Camera, mask=None) -> ViewRecord:
    root = Path(root)
    for sub in ("rgb", "depth", "cam") + (("mask",) if mask is not None else ()):
        (root / sub).mkdir(parents=True, exist_ok=True)
    idx = f"{index:04d}"
    rec = ViewRecord(idx, root / "rgb" / f"{idx}.png", root / "depth" / f"{idx}.pfm",
                     root / "cam" / f"{idx}.json", root / "mask" / f"{idx}.png" if mask is not None else None)
    write_rgb(rec.image, rgb)
    write_depth(rec.depth, np.where(valid_depth(depth), depth, -1.0))
    save_camera(rec.camera, camera)
    if mask is not None:
        write_gray(rec.mask, np.asarray(mask, dtype=np.float64))
    return rec


def write_scene(root, views) -> List[ViewRecord]:
    """Write synthetic views (anything with rgb/depth/mask/camera) to disk."""
    return [write_view(root, i, v.rgb, v.depth, v.camera, v.mask) for i, v in enumerate(views)]
