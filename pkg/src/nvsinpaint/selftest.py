"""Small oracle suite behind ``nvsinpaint selftest``.

Each check prints ``PASS``/``FAIL``, its statistic, and a short SHA-256 of
the arrays it produced.  Nothing printed depends on timing or on the number
of worker threads, so the whole output can be hashed to compare runs.
"""
from __future__ import annotations

import hashlib
import sys

import numpy as np

from .camera import PoseSamplerConfig, project_points, sample_pose, unproject
from .epipolar import epipolar_mask, mask_oracle, ray_angles
from .guidance import OracleDenoiser, ConditioningBundle, baseline_fill, guidance_noise, guided_denoise_loop
from .metrics import masked_psnr, masked_ssim
from .parallel import stream
from .splatting import SplatParams, forward_splat, splat_oracle
from .synthetic import KINDS, SyntheticScene, Texture, orbit_pair
from .training import ddim_forward_noise, make_linear_schedule, weighted_noise_loss


def digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode() + str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()[:12]


def _scene(kind, res, d_az, elevation=20.0):
    sc = SyntheticScene(kind, (res, res), Texture.random(0))
    src, tgt = orbit_pair(res, d_az, elevation)
    return sc, sc.render(src), sc.render(tgt)


def check_round_trip(workers):
    cfg = PoseSamplerConfig(resolution=(64, 64))
    rng = stream(11)
    errs = []
    for i in range(20):
        cam = sample_pose(i, cfg)
        px = rng.uniform(0, 63, size=(500, 2))
        d = rng.uniform(0.5, 8.0, size=500)
        uv, z, _ = project_points(unproject(px, d, cam), cam)
        errs.append(np.abs(uv - px).max())
        errs.append(np.abs(z - d).max())
    err = max(errs)
    return err < 1e-7, f"max_err={err:.1e}", digest(np.array(errs) < 1e-7)


def check_identity_warp(workers):
    outs, ok = [], True
    for kind in KINDS:
        sc, v, _ = _scene(kind, 32, 0.0)
        sp = forward_splat(v.rgb, v.depth, v.camera, v.camera, SplatParams(kernel="nearest"), workers)
        ok &= bool(np.array_equal(sp.color[v.mask], v.rgb[v.mask]))
        outs.append(sp.color)
    return ok, "bit_exact" if ok else "mismatch", digest(*outs)


def check_splat_oracle(workers):
    _, v, _ = _scene("two_planes", 16, 15.0)
    tgt = orbit_pair(16, 15.0, 20.0)[1]
    sp = forward_splat(v.rgb, v.depth, v.camera, tgt, SplatParams(beta=100.0), workers)
    oc = splat_oracle(v.rgb, v.depth, v.camera, tgt)
    both = sp.covered & oc.covered
    err = float(np.abs(sp.color - oc.color)[both].mean())
    return err < 0.02, f"mean_abs={err:.4f}", digest(sp.color, sp.covered)


def check_warp_fidelity(workers):
    _, v, t = _scene("sphere", 64, 15.0)
    sp = forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(), workers)
    co = sp.covered & t.mask
    psnr = masked_psnr(sp.color, t.rgb, co)
    return psnr >= 30.0, f"psnr={psnr:.2f}", digest(sp.color)


def check_mask_oracle(workers):
    stats, outs, ok = [], [], True
    for kind in KINDS:
        _, v, t = _scene(kind, 32, 15.0)
        sp = forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(), workers)
        m = epipolar_mask(v.depth, v.camera, t.camera, sp, workers=workers)
        agree = float((m.known == mask_oracle(v.depth, v.camera, t.camera)).mean())
        ok &= agree >= 0.98
        stats.append(f"{kind}={agree:.4f}")
        outs.append(m.values)
    return ok, " ".join(stats), digest(*outs)


def check_angle_law(workers):
    _, v, t = _scene("plane", 32, 90.0, elevation=45.0)
    sp = forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(), workers)
    m = epipolar_mask(v.depth, v.camera, t.camera, sp, workers=workers)
    vs, us = np.nonzero(sp.covered)
    pts = unproject(np.stack([us, vs], 1).astype(float), sp.depth[vs, us], t.camera)
    want = 1.0 - ray_angles(pts, v.camera.center, t.camera.center) / 180.0
    err = float(np.abs(m.values[vs, us] - want).max()) if len(vs) else np.inf
    return err <= 0.05, f"max_dev={err:.4f}", digest(m.values)


def check_loss(workers):
    rng = stream(5)
    a, b = rng.standard_normal((2, 8, 8, 4))
    one = weighted_noise_loss(a, b, np.ones((8, 8)))
    two = weighted_noise_loss(a, b, np.full((8, 8), 2.0))
    ok = abs(one - np.mean((a - b) ** 2)) <= 1e-12 and two == 4 * one
    return ok, f"loss={one:.6f}", digest(np.array([one, two]))


def check_ddim(workers):
    sched = make_linear_schedule(1000, 1e-4, 0.02, 50, 0)
    errs = []
    for seed in range(5):
        x0 = stream(seed, 9).uniform(0, 1, (8, 8, 3))
        cond = ConditioningBundle(np.zeros_like(x0), np.zeros((8, 8)))
        out = guided_denoise_loop(OracleDenoiser(x0, sched), cond, sched, seed)
        errs.append(np.abs(out - x0).max())
    x0 = np.ones((2, 2))
    ends = ddim_forward_noise(x0, -1, 3 * x0, sched)
    err = max(errs)
    return err < 1e-4 and np.array_equal(ends, x0), f"max_err={err:.1e}", digest(np.array(errs) < 1e-4)


def check_guidance(workers):
    sched = make_linear_schedule(1000, 1e-4, 0.02, 50, 10)
    partial = stream(3).uniform(0, 1, (8, 8, 3))
    cond = ConditioningBundle(partial, np.ones((8, 8)))
    ok, seen = True, {}
    for seed in range(3):
        guided_denoise_loop(lambda x, t, c: np.zeros_like(x), cond, sched, seed,
                            on_step=lambda i, t, x: seen.__setitem__(i, (t, x.copy())))
        t, x = seen[9]
        ok &= bool(np.array_equal(x, ddim_forward_noise(partial, t, guidance_noise(seed, 9, partial.shape), sched)))
    return ok, "bit_exact" if ok else "mismatch", digest(seen[9][1])


def check_metrics(workers):
    a = np.full((16, 16, 3), 0.5)
    b = a + 1 / 255
    psnr = masked_psnr(a, b)
    ok = abs(psnr - 48.1308) < 0.01 and masked_ssim(a, a) == 1.0
    x = stream(4).uniform(0, 1, (16, 16, 3))
    y = np.clip(x + 0.05 * stream(6).standard_normal(x.shape), 0, 1)
    s1, s2 = masked_ssim(x, y), masked_ssim(y, x)
    ok &= s1 == s2 and masked_ssim(x, y, np.ones((16, 16), bool)) == s1
    return ok, f"psnr={psnr:.4f} ssim={s1:.4f}", digest(np.array([psnr, s1]))


def check_fill(workers):
    _, v, t = _scene("sphere", 32, 15.0)
    sp = forward_splat(v.rgb, v.depth, v.camera, t.camera, SplatParams(), workers)
    m = epipolar_mask(v.depth, v.camera, t.camera, sp, workers=workers)
    out = baseline_fill(sp.color, m)
    ok = np.all(np.isfinite(out)) and np.array_equal(out[m.known], sp.color[m.known])
    return bool(ok), f"known={int(m.known.sum())}", digest(out)


CHECKS = [
    ("round_trip", check_round_trip),
    ("identity_warp", check_identity_warp),
    ("splat_oracle", check_splat_oracle),
    ("warp_fidelity", check_warp_fidelity),
    ("mask_oracle", check_mask_oracle),
    ("mask_angle_law", check_angle_law),
    ("loss_equivalence", check_loss),
    ("ddim_oracle", check_ddim),
    ("guidance", check_guidance),
    ("metrics", check_metrics),
    ("baseline_fill", check_fill),
]


def run_selftest(workers: int = 1, out=None) -> bool:
    out = out or sys.stdout
    passed = 0
    for name, fn in CHECKS:
        ok, stat, h = fn(workers)
        passed += bool(ok)
        print(f"{'PASS' if ok else 'FAIL'} {name:<17} {stat} sha={h}", file=out)
    print(f"selftest: {passed}/{len(CHECKS)} passed", file=out)
    return passed == len(CHECKS)
