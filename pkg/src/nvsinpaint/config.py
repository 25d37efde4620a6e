"""Run configuration.

Stored as TOML with a single ``[defaults]`` table.  Some keys only record
settings of the original fine-tuning run (learning rate, batch size,
classifier-free guidance, ...) and drive nothing here.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .errors import ContractError

RECORD_ONLY = ("learning_rate", "lr_warmup_steps", "loss_type", "mask_dropout",
               "classifier_free_guidance", "batch_size", "clip_frozen")


@dataclass(frozen=True)
class RunConfig:
    # image / camera
    resolution: int = 512
    fov_deg: float = 50.0
    background: str = "black"
    # diffusion
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    ddim_steps: int = 500
    guidance_steps: int = 10
    masked_guidance: bool = False
    early_step_fraction: float = 0.1
    boundary_weight: float = 2.0
    # splatting
    splat_beta: float = 10.0
    splat_kernel: str = "bilinear"
    coverage_threshold: float = 1e-4
    cull_backfacing: bool = True
    # epipolar mask
    ray_step: float = 0.5
    max_ray_steps: int = 4096
    occlusion_tolerance: float = 1e-3
    ray_supersample: int = 2
    # execution
    workers: int = 1
    # recorded only
    learning_rate: float = 1e-5
    lr_warmup_steps: int = 100
    loss_type: str = "L1"
    mask_dropout: float = 0.05
    classifier_free_guidance: float = 9.0
    batch_size: int = 1152
    clip_frozen: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            want = f.type if isinstance(f.type, type) else {"int": int, "float": float, "str": str,
                                                              "bool": bool}[f.type]
            if want is float and isinstance(v, int) and not isinstance(v, bool):
                object.__setattr__(self, f.name, float(v))
            elif not isinstance(v, want) or (want is int and isinstance(v, bool)):
                raise ContractError(f"config key {f.name!r} expects {want.__name__}, got {v!r}")
        if self.background != "black":
            raise ContractError("only a black background is supported")
        if self.splat_kernel not in ("nearest", "bilinear"):
            raise ContractError(f"unknown splat_kernel {self.splat_kernel!r}")
        if not (0 <= self.guidance_steps <= self.ddim_steps <= self.T):
            raise ContractError("need 0 <= guidance_steps <= ddim_steps <= T")
        if self.resolution < 1 or self.workers < 1:
            raise ContractError("resolution and workers must be positive")

    def replace(self, **overrides) -> "RunConfig":
        unknown = set(overrides) - {f.name for f in fields(self)}
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        return dataclasses.replace(self, **overrides)

    def to_toml(self) -> str:
        return tomli_w.dumps({"defaults": dataclasses.asdict(self)})

    @classmethod
    def from_toml(cls, text: str) -> "RunConfig":
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ContractError(f"invalid config: {exc}") from exc
        extra = set(doc) - {"defaults"}
        if extra:
            raise ContractError(f"unknown config sections: {sorted(extra)}")
        return cls().replace(**doc.get("defaults", {}))


def load_config(path) -> RunConfig:
    with open(path) as f:
        return RunConfig.from_toml(f.read())
