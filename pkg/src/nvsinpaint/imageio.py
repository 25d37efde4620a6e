"""PFM / PNG readers and writers.

RGB images live in memory as float64 ``(H, W, 3)`` arrays of *linear* values
in [0, 1]; PNG files hold sRGB-encoded 8- or 16-bit values and are converted
on load/save.  Depth maps are float ``(H, W)`` arrays where non-finite or
nonpositive values mean "no surface".  Masks are single-channel PNGs stored
without any transfer curve.
"""
from __future__ import annotations

import re

import numpy as np
import png
from PIL import Image

from .errors import ContractError


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0)
    return np.where(x <= 0.0031308, x * 12.92, 1.055 * x ** (1 / 2.4) - 0.055)


def valid_depth(depth: np.ndarray) -> np.ndarray:
    d = np.asarray(depth)
    with np.errstate(invalid="ignore"):
        return np.isfinite(d) & (d > 0)


# --- PFM -------------------------------------------------------------------

def write_pfm(path, data: np.ndarray) -> None:
    """Little-endian PFM, scale -1.0, rows stored bottom-to-top."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        tag = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        tag = b"PF"
    else:
        raise ContractError(f"PFM needs (H, W) or (H, W, 3) data, got {data.shape}")
    h, w = data.shape[:2]
    with open(path, "wb") as f:
        f.write(tag + b"\n%d %d\n-1.0\n" % (w, h))
        f.write(np.flipud(data).astype("<f4").tobytes())


_PFM_DIMS = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = f.readline().rstrip()
        if tag not in (b"PF", b"Pf"):
            raise ContractError(f"{path}: not a PFM file")
        m = _PFM_DIMS.match(f.readline())
        if not m:
            raise ContractError(f"{path}: bad PFM dimension line")
        w, h = int(m.group(1)), int(m.group(2))
        try:
            scale = float(f.readline())
        except ValueError as exc:
            raise ContractError(f"{path}: bad PFM scale line") from exc
        channels = 3 if tag == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        buf = f.read()
    n = w * h * channels
    if len(buf) != 4 * n:
        raise ContractError(f"{path}: expected {4 * n} bytes of data, found {len(buf)}")
    data = np.frombuffer(buf, dtype=dtype).astype(np.float32)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(data.reshape(shape)).copy()


def read_depth(path) -> np.ndarray:
    d = read_pfm(path).astype(np.float64)
    if d.ndim != 2:
        raise ContractError(f"{path}: depth PFM must be single-channel")
    d[~valid_depth(d)] = np.nan
    return d


def write_depth(path, depth: np.ndarray) -> None:
    write_pfm(path, depth)


# --- PNG -------------------------------------------------------------------

def _png_bit_depth(path) -> int:
    with open(path, "rb") as f:
        head = f.read(25)
    if head[:8] != b"\x89PNG\r\n\x1a\n" or len(head) < 25:
        raise ContractError(f"{path}: not a PNG file")
    return head[24]


def read_encoded(path) -> np.ndarray:
    """RGB PNG code values scaled to [0, 1], with no transfer curve applied."""
    if _png_bit_depth(path) == 16:
        # Pillow truncates 16-bit RGB to 8 bits on load
        w, h, rows, info = png.Reader(filename=str(path)).asDirect()
        planes = info["planes"]
        enc = np.vstack([np.asarray(r, dtype=np.uint16) for r in rows]).reshape(h, w, planes) / 65535.0
        if planes < 3:
            enc = np.repeat(enc[..., :1], 3, axis=2)
        return enc[..., :3]
    with Image.open(path) as img:
        enc = np.asarray(img.convert("RGB")).astype(np.float64) / 255.0
    return enc


def read_rgb(path) -> np.ndarray:
    """Load an 8- or 16-bit PNG as linear float RGB."""
    return srgb_to_linear(read_encoded(path))


def encode_rgb(rgb: np.ndarray, bits: int = 8) -> np.ndarray:
    top = 255 if bits == 8 else 65535
    enc = np.round(linear_to_srgb(rgb) * top)
    return enc.astype(np.uint8 if bits == 8 else np.uint16)


def write_rgb(path, rgb: np.ndarray, bits: int = 8) -> None:
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ContractError(f"RGB image must be (H, W, 3), got {rgb.shape}")
    enc = encode_rgb(rgb, bits)
    if bits == 8:
        Image.fromarray(enc, "RGB").save(path)
    elif bits == 16:
        _write_png16(path, enc)
    else:
        raise ContractError(f"unsupported bit depth {bits}")


def _write_png16(path, enc: np.ndarray) -> None:
    h, w, _ = enc.shape
    with open(path, "wb") as f:
        png.Writer(w, h, bitdepth=16, greyscale=False).write(f, enc.reshape(h, w * 3).tolist())


def read_gray(path) -> np.ndarray:
    """Single-channel PNG as float in [0, 1] (no transfer curve)."""
    img = Image.open(path)
    arr = np.asarray(img)
    if arr.dtype == np.uint16 or img.mode.startswith("I;16"):
        return arr.astype(np.float64) / 65535.0
    return np.asarray(img.convert("L")).astype(np.float64) / 255.0


def write_gray(path, values: np.ndarray) -> None:
    v = np.round(np.clip(np.asarray(values, dtype=np.float64), 0, 1) * 255).astype(np.uint8)
    Image.fromarray(v, "L").save(path)


def png_size(path):
    """(width, height) from the PNG header without decoding pixels."""
    with Image.open(path) as img:
        return img.size
