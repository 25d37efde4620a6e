"""Deterministic DDIM sampling with partial-view guidance, and a diffusion-free fill.

Images are sampled in the same value space as ``partial_view`` (linear RGB
in [0, 1]); a denoiser that expects [-1, 1] inputs has to rescale itself.
"""
from __future__ import annotations

import json
import math
import subprocess
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import ContractError
from .imageio import read_pfm, write_pfm
from .parallel import stream
from .training import NoiseSchedule, ddim_forward_noise


@dataclass
class ConditioningBundle:
    partial_view: np.ndarray                 # (H, W, 3)
    mask: np.ndarray                         # (H, W) values in [0, 1]
    source_embedding: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.partial_view = np.asarray(self.partial_view, dtype=np.float64)
        mask = self.mask.values if hasattr(self.mask, "values") else self.mask
        self.mask = np.asarray(mask, dtype=np.float64)
        self.source_embedding = np.asarray(self.source_embedding, dtype=np.float64).reshape(-1)
        if self.mask.shape != self.partial_view.shape[:2]:
            raise ContractError(f"mask {self.mask.shape} does not match image {self.partial_view.shape[:2]}")


Denoiser = Callable[[np.ndarray, int, ConditioningBundle], np.ndarray]


def predict_x0(x_t, t, eps_pred, schedule: NoiseSchedule):
    a = schedule.at(t)
    return (x_t - math.sqrt(1.0 - a) * eps_pred) / math.sqrt(a)


def ddim_step(x_t: np.ndarray, t: int, t_prev: int, eps_pred: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Deterministic (eta = 0) DDIM update from ``t`` to ``t_prev``; ``t_prev = -1`` is clean."""
    if not (t > t_prev >= -1):
        raise ContractError(f"DDIM must step backwards: t={t}, t_prev={t_prev}")
    x0_hat = predict_x0(x_t, t, eps_pred, schedule)
    a_prev = schedule.at(t_prev)
    return math.sqrt(a_prev) * x0_hat + math.sqrt(1.0 - a_prev) * eps_pred


def initial_noise(seed: int, shape) -> np.ndarray:
    return stream(seed, 0).standard_normal(shape)


def guidance_noise(seed: int, step: int, shape) -> np.ndarray:
    return stream(seed, 1, step).standard_normal(shape)


def guided_denoise_loop(denoiser: Denoiser, cond: ConditioningBundle, schedule: NoiseSchedule,
                        rng_seed: int, masked_guidance: bool = False,
                        on_step: Optional[Callable[[int, int, np.ndarray], None]] = None) -> np.ndarray:
    """Run ``schedule.inference_steps`` DDIM steps from pure noise.

    The outputs of the first ``schedule.guidance_steps`` steps are replaced
    by the partial view noised to the step's destination level (only the
    known pixels when ``masked_guidance``).  ``on_step(i, t_next, x)`` sees
    every intermediate state.  Returns the final image clipped to [0, 1].
    """
    if schedule.guidance_steps > schedule.inference_steps:
        raise ContractError("guidance_steps exceeds inference_steps")
    partial = cond.partial_view
    shape = partial.shape
    known = (cond.mask > 0)[..., None]
    ts = schedule.timesteps()
    x = initial_noise(rng_seed, shape)
    for i, t in enumerate(ts):
        t_next = int(ts[i + 1]) if i + 1 < len(ts) else -1
        eps = np.asarray(denoiser(x, int(t), cond), dtype=np.float64)
        if eps.shape != x.shape:
            raise ContractError(f"denoiser returned {eps.shape}, expected {x.shape}")
        x = ddim_step(x, int(t), t_next, eps, schedule)
        if i < schedule.guidance_steps:
            anchor = ddim_forward_noise(partial, t_next, guidance_noise(rng_seed, i, shape), schedule)
            x = np.where(known, anchor, x) if masked_guidance else anchor
        if on_step is not None:
            on_step(i, t_next, x)
    return np.clip(x, 0.0, 1.0)


class OracleDenoiser:
    """Returns the exact noise that separates ``x_t`` from a known clean image."""

    def __init__(self, x0: np.ndarray, schedule: NoiseSchedule):
        self.x0 = np.asarray(x0, dtype=np.float64)
        self.schedule = schedule

    def __call__(self, x_t, t, cond=None):
        a = self.schedule.at(t)
        return (x_t - math.sqrt(a) * self.x0) / math.sqrt(1.0 - a)


class SubprocessDenoiser:
    """Calls an external program once per step.

    Per call the work directory holds ``x_t.pfm`` (3-channel float), ``t.txt``
    and ``cond/`` (``partial_view.pfm``, ``mask.pfm``, ``embedding.json``);
    the program is run as ``command + [workdir]`` and must write ``eps.pfm``
    of the same size.  PFM is float32, so values round-trip at single
    precision.
    """

    def __init__(self, command: Sequence[str], workdir, timeout: Optional[float] = None):
        self.command = list(command)
        self.workdir = Path(workdir)
        self.timeout = timeout
        self._cond_written = None

    def _write_cond(self, cond: ConditioningBundle):
        if self._cond_written is cond:
            return
        d = self.workdir / "cond"
        d.mkdir(parents=True, exist_ok=True)
        write_pfm(d / "partial_view.pfm", cond.partial_view)
        write_pfm(d / "mask.pfm", cond.mask)
        with open(d / "embedding.json", "w") as f:
            json.dump([float(v) for v in cond.source_embedding], f)
        self._cond_written = cond

    def __call__(self, x_t, t, cond):
        self.workdir.mkdir(parents=True, exist_ok=True)
        self._write_cond(cond)
        eps_path = self.workdir / "eps.pfm"
        if eps_path.exists():
            eps_path.unlink()
        write_pfm(self.workdir / "x_t.pfm", x_t)
        (self.workdir / "t.txt").write_text(f"{int(t)}\n")
        proc = subprocess.run(self.command + [str(self.workdir)], capture_output=True, text=True,
                              timeout=self.timeout)
        if proc.returncode != 0:
            raise ContractError(f"denoiser exited with {proc.returncode}: {proc.stderr.strip()[:500]}")
        if not eps_path.exists():
            raise ContractError("denoiser did not write eps.pfm")
        eps = read_pfm(eps_path).astype(np.float64)
        if eps.shape != np.shape(x_t):
            raise ContractError(f"denoiser returned {eps.shape}, expected {np.shape(x_t)}")
        return eps


# --- push-pull fill ---------------------------------------------------------

def _pull(color, weight):
    h, w = weight.shape
    ph, pw = h + h % 2, w + w % 2
    c = np.zeros((ph, pw, color.shape[2]))
    wt = np.zeros((ph, pw))
    c[:h, :w] = color * weight[..., None]
    wt[:h, :w] = weight
    ws = wt.reshape(ph // 2, 2, pw // 2, 2).sum(axis=(1, 3))
    cs = c.reshape(ph // 2, 2, pw // 2, 2, -1).sum(axis=(1, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        coarse = np.where(ws[..., None] > 0, cs / ws[..., None], 0.0)
    return coarse, np.minimum(ws, 1.0)


def _upsample(coarse, shape):
    h, w = shape
    yy = (np.arange(h) + 0.5) / 2 - 0.5
    xx = (np.arange(w) + 0.5) / 2 - 0.5
    gy, gx = np.meshgrid(yy, xx, indexing="ij")
    return np.stack([ndimage.map_coordinates(coarse[..., c], [gy, gx], order=1, mode="nearest")
                     for c in range(coarse.shape[2])], axis=-1)


def baseline_fill(partial: np.ndarray, mask) -> np.ndarray:
    """Fill unknown pixels (mask == 0) by push-pull pyramid interpolation.

    Known pixels are returned untouched.  With no known pixel at all the
    result is background (black) and a ``RuntimeWarning`` is issued.
    """
    partial = np.asarray(partial, dtype=np.float64)
    values = mask.values if hasattr(mask, "values") else mask
    known = mask.known if hasattr(mask, "known") else np.asarray(values) > 0
    if known.shape != partial.shape[:2]:
        raise ContractError(f"mask {known.shape} does not match image {partial.shape[:2]}")
    if not known.any():
        warnings.warn("no known pixels; returning background", RuntimeWarning, stacklevel=2)
        return np.zeros_like(partial)
    levels = [(np.where(known[..., None], partial, 0.0), known.astype(np.float64))]
    while max(levels[-1][1].shape) > 1:
        levels.append(_pull(*levels[-1]))
    filled = levels[-1][0]
    for color, weight in reversed(levels[:-1]):
        up = _upsample(filled, weight.shape)
        filled = weight[..., None] * color + (1.0 - weight[..., None]) * up
    return np.where(known[..., None], partial, filled)
