"""PSNR and SSIM, optionally restricted to a foreground mask.

Both operate on 8-bit dynamic range: float images in [0, 1] are scaled by
255 before comparison.
"""
from __future__ import annotations

from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import ContractError, DomainError

PSNR_CAP = 100.0
MAX_VALUE = 255.0
WINDOW = 11
SIGMA = 1.5
C1 = (0.01 * MAX_VALUE) ** 2
C2 = (0.03 * MAX_VALUE) ** 2


def _prepare(a, b, mask):
    a = np.asarray(a, dtype=np.float64) * MAX_VALUE
    b = np.asarray(b, dtype=np.float64) * MAX_VALUE
    if a.shape != b.shape:
        raise ContractError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if mask is None:
        mask = np.ones(a.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[:2]:
        raise ContractError(f"mask {mask.shape} does not match image {a.shape[:2]}")
    if not mask.any():
        raise DomainError("mask selects no pixels")
    return a, b, mask


def masked_psnr(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    a, b, mask = _prepare(a, b, mask)
    mse = np.mean((a[mask] - b[mask]) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(MAX_VALUE ** 2 / mse)))


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM of two single-channel 0..255 images (reflect padding)."""
    win = gaussian_window()

    def filt(x):
        return ndimage.correlate(x, win, mode="reflect")

    mu_a, mu_b = filt(a), filt(b)
    saa = filt(a * a) - mu_a * mu_a
    sbb = filt(b * b) - mu_b * mu_b
    sab = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + C1) * (2 * sab + C2)
    den = (mu_a * mu_a + mu_b * mu_b + C1) * (saa + sbb + C2)
    return num / den


def masked_ssim(a: np.ndarray, b: np.ndarray, mask: Optional[np.ndarray] = None) -> float:
    """Channel-averaged SSIM; with a mask, the SSIM map is averaged over
    pixels whose window centre lies in the foreground."""
    a, b, mask = _prepare(a, b, mask)
    if min(a.shape[:2]) < WINDOW:
        raise DomainError(f"images must be at least {WINDOW}x{WINDOW}")
    if np.array_equal(a[mask], b[mask]):
        # guards the exact-1.0 contract against filter round-off
        return 1.0
    scores = [ssim_map(a[..., c], b[..., c])[mask].mean() for c in range(a.shape[2])]
    return float(np.mean(scores))
