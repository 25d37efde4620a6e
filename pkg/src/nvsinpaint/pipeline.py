"""End-to-end helpers wiring the modules together under one RunConfig."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .camera import Camera, recenter_rescale
from .config import RunConfig
from .epipolar import EpipolarMask, epipolar_mask
from .guidance import ConditioningBundle, Denoiser, baseline_fill, guided_denoise_loop
from .imageio import valid_depth
from .splatting import SplatParams, SplatResult, forward_splat, world_points
from .training import make_linear_schedule


def splat_params(cfg: RunConfig) -> SplatParams:
    return SplatParams(beta=cfg.splat_beta, kernel=cfg.splat_kernel,
                       coverage_threshold=cfg.coverage_threshold, cull_backfacing=cfg.cull_backfacing)


def schedule_from(cfg: RunConfig):
    return make_linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.ddim_steps, cfg.guidance_steps)


def normalize_source(depth: np.ndarray, camera: Camera):
    """Recentre/rescale the source cloud into [-1, 1]^3.

    Returns the depth and camera that reproduce the normalised cloud.
    """
    pts = world_points(depth, camera)[valid_depth(depth)]
    _, norm = recenter_rescale(pts)
    return depth * norm.scale, norm.apply_to_camera(camera), norm


def warp(rgb, depth, src_cam: Camera, tgt_cam: Camera, cfg: RunConfig = RunConfig()) -> SplatResult:
    return forward_splat(rgb, depth, src_cam, tgt_cam, splat_params(cfg), workers=cfg.workers)


def mask(depth, src_cam: Camera, tgt_cam: Camera, splat: SplatResult,
         cfg: RunConfig = RunConfig()) -> EpipolarMask:
    return epipolar_mask(depth, src_cam, tgt_cam, splat, step_scale=cfg.ray_step,
                         max_steps=cfg.max_ray_steps, occlusion_tolerance=cfg.occlusion_tolerance,
                         ray_supersample=cfg.ray_supersample, workers=cfg.workers)


@dataclass
class Synthesis:
    image: np.ndarray
    splat: SplatResult
    mask: EpipolarMask


def synthesize(rgb, depth, src_cam: Camera, tgt_cam: Camera, cfg: RunConfig = RunConfig(),
               denoiser: Optional[Denoiser] = None, seed: int = 0,
               embedding: Optional[np.ndarray] = None) -> Synthesis:
    """Warp, build the mask, then complete with ``denoiser`` or the push-pull fill."""
    sp = warp(rgb, depth, src_cam, tgt_cam, cfg)
    m = mask(depth, src_cam, tgt_cam, sp, cfg)
    if denoiser is None:
        image = baseline_fill(sp.color, m)
    else:
        cond = ConditioningBundle(sp.color, m.values, embedding if embedding is not None else np.zeros(0))
        image = guided_denoise_loop(denoiser, cond, schedule_from(cfg), seed, cfg.masked_guidance)
    return Synthesis(image, sp, m)
