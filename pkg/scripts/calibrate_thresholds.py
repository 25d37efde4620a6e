"""Sweep azimuth offsets and print the oracle statistics behind the frozen thresholds.

    python scripts/calibrate_thresholds.py --resolution 64 --angles 5 15 30 60
"""
import argparse

import numpy as np

from nvsinpaint.epipolar import epipolar_mask
from nvsinpaint.guidance import baseline_fill
from nvsinpaint.metrics import masked_psnr
from nvsinpaint.splatting import SplatParams, forward_splat, splat_oracle
from nvsinpaint.synthetic import KINDS, SyntheticScene, Texture, orbit_pair


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--resolution", type=int, default=64)
    ap.add_argument("--oracle-resolution", type=int, default=16)
    ap.add_argument("--angles", type=float, nargs="+", default=[5.0, 15.0, 30.0, 60.0])
    ap.add_argument("--betas", type=float, nargs="+", default=[10.0, 100.0, 1000.0])
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    print("kind,d_az,seed,warp_psnr,fill_psnr," + ",".join(f"oracle_err_b{b:g}" for b in args.betas))
    for kind in KINDS:
        for d_az in args.angles:
            for seed in range(args.seeds):
                sc = SyntheticScene(kind, (args.resolution,) * 2, Texture.random(seed))
                src, tgt = orbit_pair(args.resolution, d_az)
                v, t = sc.render(src), sc.render(tgt)
                sp = forward_splat(v.rgb, v.depth, v.camera, t.camera)
                co = sp.covered & t.mask
                warp = masked_psnr(sp.color, t.rgb, co) if co.any() else np.nan
                m = epipolar_mask(v.depth, v.camera, t.camera, sp)
                fill = masked_psnr(baseline_fill(sp.color, m), t.rgb, t.mask)

                small = SyntheticScene(kind, (args.oracle_resolution,) * 2, Texture.random(seed))
                s_src, s_tgt = orbit_pair(args.oracle_resolution, d_az)
                sv = small.render(s_src)
                oc = splat_oracle(sv.rgb, sv.depth, s_src, s_tgt)
                errs = []
                for beta in args.betas:
                    ss = forward_splat(sv.rgb, sv.depth, s_src, s_tgt, SplatParams(beta=beta))
                    both = ss.covered & oc.covered
                    errs.append(np.abs(ss.color - oc.color)[both].mean() if both.any() else np.nan)
                print(f"{kind},{d_az:g},{seed},{warp:.3f},{fill:.3f}," + ",".join(f"{e:.4f}" for e in errs))


if __name__ == "__main__":
    main()
