"""``nvsinpaint`` command line.

Every subcommand reads an optional TOML config (``--config``), applies flag
overrides on top, and can write the effective config back out with
``--dump-config`` so a run can be repeated exactly.  Failures print one JSON
object ``{"code": ..., "message": ...}`` on stderr and exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import shlex
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import pipeline
from .camera import load_camera
from .config import RunConfig, load_config
from .dataset import scan_scene, sample_pair, write_scene
from .errors import ContractError, NVSError
from .guidance import SubprocessDenoiser
from .imageio import (read_depth, read_encoded, read_gray, read_rgb, valid_depth, write_depth,
                      write_gray, write_pfm, write_rgb)
from .metrics import masked_psnr, masked_ssim
from .parallel import stream
from .synthetic import make_synthetic_scene, orbit_pair
from .training import boundary_weight_map, ddim_forward_noise, sample_early_timestep

EXIT_ERROR = 2
NEAR_EMPTY = 0.01   # covered / source-foreground ratio that triggers a warning

# flag dest -> RunConfig key
OVERRIDES = {
    "workers": "workers", "beta": "splat_beta", "kernel": "splat_kernel",
    "coverage_threshold": "coverage_threshold", "step_scale": "ray_step", "occ_tol": "occlusion_tolerance",
    "max_ray_steps": "max_ray_steps", "ray_supersample": "ray_supersample",
    "boundary_weight": "boundary_weight", "ddim_steps": "ddim_steps", "guidance_steps": "guidance_steps",
    "early_fraction": "early_step_fraction", "T": "T",
}


class JSONArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        raise ContractError(f"{self.prog}: {message}")


def emit(payload: dict, file=None):
    print(json.dumps(payload, sort_keys=True), file=file or sys.stdout)


def warn(message: str, **extra):
    print(json.dumps({"warning": message, **extra}, sort_keys=True), file=sys.stderr)


def effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {key: getattr(args, dest) for dest, key in OVERRIDES.items() if getattr(args, dest, None) is not None}
    if getattr(args, "masked_guidance", False):
        over["masked_guidance"] = True
    if getattr(args, "no_cull", False):
        over["cull_backfacing"] = False
    cfg = cfg.replace(**over)
    if args.dump_config:
        Path(args.dump_config).write_text(cfg.to_toml())
    return cfg


def _out_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# --- view loading -------------------------------------------------------------

def _record(scene, index):
    scan = scan_scene(scene)
    for rec in scan.records:
        if rec.index == index:
            return rec
    for d in scan.diagnostics:
        if d.index == index:
            raise ContractError(f"view {index}: {d.message} ({d.path})")
    raise ContractError(f"view {index!r} not found in {scene}")


def load_views(args):
    """Source rgb/depth/camera and target camera, recentred if asked."""
    src = _record(args.scene, args.src)
    rgb, depth, _, src_cam = src.load()
    if args.tgt_cam:
        tgt_cam = load_camera(args.tgt_cam)
    elif args.tgt is not None:
        tgt_cam = _record(args.scene, args.tgt).load_camera()
    else:
        raise ContractError("give --tgt or --tgt-cam")
    if args.recenter:
        depth, src_cam, norm = pipeline.normalize_source(depth, src_cam)
        tgt_cam = norm.apply_to_camera(tgt_cam)
    return rgb, depth, src_cam, tgt_cam


def write_mask_png(path, mask, binary: bool):
    """8-bit mask; known pixels never round down to 0."""
    if binary:
        write_gray(path, mask.binary())
        return
    v = np.round(np.clip(mask.values, 0, 1) * 255)
    v = np.where(mask.known, np.maximum(v, 1), 0)
    write_gray(path, v / 255.0)


def _coverage_check(splat, depth):
    n_src = int(valid_depth(depth).sum())
    n_cov = int(splat.covered.sum())
    if n_cov < NEAR_EMPTY * max(n_src, 1):
        warn("coverage near-empty", covered_pixels=n_cov, source_pixels=n_src)


# --- commands -----------------------------------------------------------------

def cmd_warp(args):
    cfg = effective_config(args)
    rgb, depth, src_cam, tgt_cam = load_views(args)
    sp = pipeline.warp(rgb, depth, src_cam, tgt_cam, cfg)
    out = _out_dir(args.out)
    write_rgb(out / "splat.png", sp.color, bits=args.bits)
    write_depth(out / "depth.pfm", np.where(sp.covered, sp.depth, -1.0))
    write_gray(out / "coverage.png", sp.covered.astype(np.float64))
    _coverage_check(sp, depth)
    return 0


def cmd_mask(args):
    cfg = effective_config(args)
    rgb, depth, src_cam, tgt_cam = load_views(args)
    sp = pipeline.warp(rgb, depth, src_cam, tgt_cam, cfg)
    m = pipeline.mask(depth, src_cam, tgt_cam, sp, cfg)
    out = _out_dir(args.out)
    write_mask_png(out / "mask.png", m, args.binary)
    write_gray(out / "coverage.png", sp.covered.astype(np.float64))
    return 0


def cmd_weightmap(args):
    cfg = effective_config(args)
    known = read_gray(args.mask) > 0
    covered = read_gray(args.coverage) > 0.5
    W = boundary_weight_map(known, covered, cfg.boundary_weight)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_pfm(args.out, W)
    return 0


def cmd_noise(args):
    cfg = effective_config(args)
    schedule = pipeline.schedule_from(cfg)
    x0 = read_rgb(args.image)
    t = args.t if args.t is not None else sample_early_timestep(args.seed, schedule, cfg.early_step_fraction)
    noise = stream(args.seed, 3).standard_normal(x0.shape)
    x_t = ddim_forward_noise(x0, t, noise, schedule)
    out = _out_dir(args.out)
    write_pfm(out / "x_t.pfm", x_t)
    write_pfm(out / "noise.pfm", noise)
    emit({"t": int(t), "alpha_bar": schedule.at(t)})
    return 0


def cmd_synth(args):
    cfg = effective_config(args)
    rgb, depth, src_cam, tgt_cam = load_views(args)
    out = _out_dir(args.out)
    denoiser = None
    if args.denoiser_cmd:
        workdir = Path(args.denoiser_workdir) if args.denoiser_workdir else Path(tempfile.mkdtemp(prefix="nvs-"))
        denoiser = SubprocessDenoiser(shlex.split(args.denoiser_cmd), workdir, args.denoiser_timeout)
    res = pipeline.synthesize(rgb, depth, src_cam, tgt_cam, cfg, denoiser, seed=args.seed)
    write_rgb(out / "synth.png", res.image, bits=args.bits)
    write_rgb(out / "partial.png", res.splat.color, bits=args.bits)
    write_mask_png(out / "mask.png", res.mask, binary=False)
    write_gray(out / "coverage.png", res.splat.covered.astype(np.float64))
    _coverage_check(res.splat, depth)
    return 0


def _images(root: Path):
    d = root / "rgb" if (root / "rgb").is_dir() else root
    return {p.stem: p for p in sorted(d.glob("*.png"))}


def _gt_mask(root: Path, idx: str, shape):
    if (root / "mask" / f"{idx}.png").exists():
        return read_gray(root / "mask" / f"{idx}.png") > 0.5
    if (root / "depth" / f"{idx}.pfm").exists():
        return valid_depth(read_depth(root / "depth" / f"{idx}.pfm"))
    return np.ones(shape, dtype=bool)


def evaluate(pred_dir, gt_dir):
    """Rows ``(id, psnr_masked, psnr, ssim_masked, ssim)`` plus the mean row."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    gt, pred = _images(gt_dir), _images(pred_dir)
    if not gt:
        raise ContractError(f"no PNG images under {gt_dir}")
    missing = sorted(set(gt) - set(pred))
    if missing:
        raise ContractError(f"predictions missing for {missing[:5]}")
    rows = []
    for idx, path in gt.items():
        a, b = read_encoded(pred[idx]), read_encoded(path)
        m = _gt_mask(gt_dir, idx, b.shape[:2])
        rows.append((idx, masked_psnr(a, b, m), masked_psnr(a, b), masked_ssim(a, b, m), masked_ssim(a, b)))
    mean = tuple(float(np.mean([r[k] for r in rows])) for k in range(1, 5))
    return rows + [("mean",) + mean]


def cmd_eval(args):
    rows = evaluate(args.pred, args.gt)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "psnr_masked", "psnr", "ssim_masked", "ssim"])
    for r in rows:
        w.writerow([r[0]] + [f"{v:.6f}" for v in r[1:]])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


def cmd_pair(args):
    scan = scan_scene(args.scene)
    for d in scan.diagnostics:
        warn("skipped view", index=d.index, path=d.path, reason=d.message)
    pair = sample_pair(scan.records, args.seed, args.min_angle)
    rel = pair.relative_pose()
    emit({"source": pair.source.index, "target": pair.target.index,
                "relative_pose": {"R": rel.R.tolist(), "T": rel.T.tolist()}})
    return 0


def cmd_scene(args):
    cfg = effective_config(args)
    scene = make_synthetic_scene(args.kind, args.resolution, args.texture_seed, args.views)
    if args.orbit is not None:
        src, tgt = orbit_pair(args.resolution, args.orbit, args.elevation, fov_deg=cfg.fov_deg)
        scene.views = [scene.render(src), scene.render(tgt)]
    write_scene(args.out, scene.views)
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest
    cfg = effective_config(args)
    ok = run_selftest(workers=cfg.workers)
    return 0 if ok else 1


# --- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = JSONArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config with a [defaults] table")
    common.add_argument("--dump-config", help="write the effective config here")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--workers", type=int)

    views = JSONArgumentParser(add_help=False)
    views.add_argument("--scene", required=True, help="scene directory (rgb/, depth/, cam/)")
    views.add_argument("--src", required=True, help="source view id, e.g. 0003")
    views.add_argument("--tgt", help="target view id in the same scene")
    views.add_argument("--tgt-cam", help="target camera JSON (overrides --tgt)")
    views.add_argument("--recenter", action="store_true", help="normalise the source cloud to [-1,1]^3 first")
    views.add_argument("--beta", type=float)
    views.add_argument("--kernel", choices=["nearest", "bilinear"])
    views.add_argument("--coverage-threshold", type=float)
    views.add_argument("--no-cull", action="store_true", help="keep back-facing source points")
    views.add_argument("--out", required=True)

    mask_opts = JSONArgumentParser(add_help=False)
    mask_opts.add_argument("--step-scale", type=float, help="ray step as a fraction of the pixel footprint")
    mask_opts.add_argument("--occ-tol", type=float, help="occlusion tolerance (fraction of scene extent)")
    mask_opts.add_argument("--max-ray-steps", type=int)
    mask_opts.add_argument("--ray-supersample", type=int)

    p = JSONArgumentParser(prog="nvsinpaint", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=JSONArgumentParser)

    s = sub.add_parser("warp", parents=[common, views], help="forward-splat a source view")
    s.add_argument("--bits", type=int, default=8, choices=[8, 16])
    s.set_defaults(func=cmd_warp)

    s = sub.add_parser("mask", parents=[common, views, mask_opts], help="epipolar inpainting mask")
    s.add_argument("--binary", action="store_true", help="write {0,1} instead of the angle-shaded mask")
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("weightmap", parents=[common], help="boundary loss weights from mask + coverage")
    s.add_argument("--mask", required=True)
    s.add_argument("--coverage", required=True)
    s.add_argument("--boundary-weight", type=float)
    s.add_argument("--out", required=True, help="output PFM")
    s.set_defaults(func=cmd_weightmap)

    s = sub.add_parser("noise", parents=[common], help="noise an image to a diffusion step")
    s.add_argument("--image", required=True)
    s.add_argument("--t", type=int, help="timestep; default draws one from the early fraction")
    s.add_argument("--T", type=int)
    s.add_argument("--early-fraction", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_noise)

    s = sub.add_parser("synth", parents=[common, views, mask_opts], help="warp, mask and complete a view")
    s.add_argument("--denoiser-cmd", help="external denoiser; default is the push-pull fill")
    s.add_argument("--denoiser-workdir")
    s.add_argument("--denoiser-timeout", type=float)
    s.add_argument("--ddim-steps", type=int)
    s.add_argument("--guidance-steps", type=int)
    s.add_argument("--masked-guidance", action="store_true")
    s.add_argument("--bits", type=int, default=8, choices=[8, 16])
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("eval", help="masked PSNR / SSIM between two image directories")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--out", help="CSV path (default stdout)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("pair", parents=[common], help="draw a source/target pair from a scene")
    s.add_argument("--scene", required=True)
    s.add_argument("--min-angle", type=float)
    s.set_defaults(func=cmd_pair)

    s = sub.add_parser("scene", parents=[common], help="write a synthetic scene to disk")
    s.add_argument("--kind", choices=["plane", "sphere", "two_planes"], default="sphere")
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--texture-seed", type=int, default=0)
    s.add_argument("--views", type=int, default=24)
    s.add_argument("--orbit", type=float, help="write only an orbit pair this many degrees apart")
    s.add_argument("--elevation", type=float, default=20.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scene)

    s = sub.add_parser("selftest", parents=[common], help="run the oracle checks")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except NVSError as exc:
        emit({"code": exc.code, "message": str(exc)}, sys.stderr)
    except OSError as exc:
        emit({"code": "io_error", "message": str(exc)}, sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
