"""Depth-based view warping, epipolar inpainting masks and DDIM guidance
for inpainting-driven novel view synthesis."""

from .camera import Camera, Intrinsics, Pose, fov_to_intrinsics, project, unproject
from .config import RunConfig
from .epipolar import EpipolarMask, epipolar_mask, mask_oracle, ray_angle
from .errors import NVSError
from .guidance import ConditioningBundle, baseline_fill, guided_denoise_loop
from .metrics import masked_psnr, masked_ssim
from .splatting import SplatParams, SplatResult, forward_splat, splat_oracle
from .training import boundary_weight_map, ddim_forward_noise, make_linear_schedule, weighted_noise_loss

__version__ = "0.1.0"
