"""Training-side maths: boundary weights, weighted epsilon loss, noise schedule."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError, DomainError
from .parallel import stream


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Cumulative signal rates ``alpha_bar[t]`` for ``t = 0 .. T-1``.

    Step index ``-1`` denotes the clean image (``alpha_bar = 1``); DDIM uses
    it as the destination of the final step.
    """
    alpha_bar: np.ndarray
    inference_steps: int = 500
    guidance_steps: int = 10
    beta_start: Optional[float] = None
    beta_end: Optional[float] = None

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=np.float64).reshape(-1)
        if len(ab) == 0:
            raise DomainError("schedule needs at least one step")
        if np.any(ab < 0) or np.any(ab > 1) or np.any(np.diff(ab) >= 0):
            raise DomainError("alpha_bar must lie in [0, 1] and strictly decrease")
        if not (0 <= self.guidance_steps <= self.inference_steps):
            raise DomainError("guidance_steps must lie in [0, inference_steps]")
        if not (1 <= self.inference_steps <= len(ab)):
            raise DomainError(f"inference_steps must lie in [1, {len(ab)}]")
        ab.setflags(write=False)
        object.__setattr__(self, "alpha_bar", ab)

    @property
    def T(self) -> int:
        return len(self.alpha_bar)

    def at(self, t: int) -> float:
        if t == -1:
            return 1.0
        if not (0 <= t < self.T):
            raise ContractError(f"step {t} outside schedule of length {self.T}")
        return float(self.alpha_bar[t])

    def timesteps(self) -> np.ndarray:
        """``inference_steps`` evenly spaced steps from ``T-1`` down to 0."""
        n = self.inference_steps
        ts = np.round(np.linspace(self.T - 1, 0, n)).astype(np.int64)
        if len(np.unique(ts)) != n:
            raise DomainError("inference steps collide after rounding")
        return ts

    def to_dict(self) -> dict:
        if self.beta_start is None or self.beta_end is None:
            raise ContractError("only linear-beta schedules serialise to JSON")
        return {"T": self.T, "beta_start": self.beta_start, "beta_end": self.beta_end,
                "inference_steps": self.inference_steps, "guidance_steps": self.guidance_steps}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        extra = set(d) - {"T", "beta_start", "beta_end", "inference_steps", "guidance_steps"}
        if extra:
            raise ContractError(f"unknown schedule keys: {sorted(extra)}")
        return make_linear_schedule(int(d["T"]), float(d["beta_start"]), float(d["beta_end"]),
                                    int(d.get("inference_steps", 500)), int(d.get("guidance_steps", 10)))


def make_linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02,
                         inference_steps: int = 500, guidance_steps: int = 10) -> NoiseSchedule:
    if not (0 < beta_start <= beta_end < 1):
        raise DomainError(f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")
    if T < 1:
        raise DomainError("T must be positive")
    betas = np.linspace(beta_start, beta_end, T)
    return NoiseSchedule(np.cumprod(1.0 - betas), min(inference_steps, T), min(guidance_steps, inference_steps, T),
                         beta_start, beta_end)


def save_schedule(path, schedule: NoiseSchedule) -> None:
    with open(path, "w") as f:
        json.dump(schedule.to_dict(), f, indent=1)


def load_schedule(path) -> NoiseSchedule:
    with open(path) as f:
        return NoiseSchedule.from_dict(json.load(f))


def boundary_weight_map(mask, splat, w_boundary: float = 2.0) -> np.ndarray:
    """``w_boundary`` where the mask is unknown and nothing was splatted, else 1.

    ``mask`` is an :class:`EpipolarMask` or an array (known = value > 0);
    ``splat`` a :class:`SplatResult` or a boolean coverage array.
    """
    known = mask.known if hasattr(mask, "known") else np.asarray(mask) > 0
    covered = splat.covered if hasattr(splat, "covered") else np.asarray(splat, dtype=bool)
    if known.shape != covered.shape:
        raise ContractError(f"mask {known.shape} and splat {covered.shape} differ in size")
    return np.where(~known & ~covered, float(w_boundary), 1.0)


def weighted_noise_loss(eps_true: np.ndarray, eps_pred: np.ndarray, W: np.ndarray) -> float:
    """``mean((W * (eps_true - eps_pred))**2)`` with W broadcast over channels."""
    eps_true = np.asarray(eps_true, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if eps_true.shape != eps_pred.shape:
        raise ContractError(f"shape mismatch {eps_true.shape} vs {eps_pred.shape}")
    if W.shape != eps_true.shape:
        if eps_true.ndim == W.ndim + 1 and W.shape == eps_true.shape[:-1]:
            W = W[..., None]
        else:
            raise ContractError(f"weight map {W.shape} does not match {eps_true.shape}")
    return float(np.mean((W * (eps_true - eps_pred)) ** 2))


def sample_early_timestep(rng_seed: int, schedule: NoiseSchedule, fraction: float = 0.1) -> int:
    """Uniform step from the highest-noise ``fraction`` of the schedule."""
    if not (0 < fraction <= 1):
        raise DomainError(f"fraction must lie in (0, 1], got {fraction}")
    T = schedule.T
    lo = math.ceil(round((1 - fraction) * T, 9))
    if lo > T - 1:
        raise DomainError(f"fraction {fraction} selects no steps out of {T}")
    return int(stream(rng_seed).integers(lo, T))


def forward_noise(x0: np.ndarray, noise: np.ndarray, alpha_bar: float) -> np.ndarray:
    return math.sqrt(alpha_bar) * np.asarray(x0) + math.sqrt(1.0 - alpha_bar) * np.asarray(noise)


def ddim_forward_noise(x0: np.ndarray, t: int, noise: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if x0.shape != noise.shape:
        raise ContractError(f"shape mismatch {x0.shape} vs {noise.shape}")
    return forward_noise(x0, noise, schedule.at(t))
