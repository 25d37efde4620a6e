import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from nvsinpaint.cli import main
from nvsinpaint.imageio import read_encoded, read_gray, read_pfm, read_rgb
from nvsinpaint.metrics import masked_psnr


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def orbit15(tmp_path_factory):
    root = tmp_path_factory.mktemp("orbit15")
    assert run("scene", "--kind", "sphere", "--resolution", 64, "--orbit", 15, "--out", root) == 0
    return root


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_identity_warp_matches_input(orbit15, tmp_path):
    assert run("warp", "--scene", orbit15, "--src", "0000", "--tgt", "0000", "--kernel", "nearest",
               "--out", tmp_path) == 0
    fg = read_gray(orbit15 / "mask" / "0000.png") > 0.5
    out, src = read_encoded(tmp_path / "splat.png"), read_encoded(orbit15 / "rgb" / "0000.png")
    assert np.array_equal(out[fg], src[fg])
    assert np.array_equal(read_gray(tmp_path / "coverage.png") > 0.5, fg)
    assert read_pfm(tmp_path / "depth.pfm").shape == (64, 64)


def test_warp_15_degrees(orbit15, tmp_path):
    assert run("warp", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path) == 0
    cov = read_gray(tmp_path / "coverage.png") > 0.5
    gt_fg = read_gray(orbit15 / "mask" / "0001.png") > 0.5
    psnr = masked_psnr(read_rgb(tmp_path / "splat.png"), read_rgb(orbit15 / "rgb" / "0001.png"), cov & gt_fg)
    assert psnr >= 30.0


def test_warp_behind_object_warns(tmp_path, capsys):
    assert run("scene", "--kind", "sphere", "--resolution", 32, "--orbit", 180, "--elevation", 0,
               "--out", tmp_path / "sc") == 0
    assert run("warp", "--scene", tmp_path / "sc", "--src", "0000", "--tgt", "0001", "--out", tmp_path / "w") == 0
    warning = json.loads(capsys.readouterr().err.strip())
    assert warning["warning"] == "coverage near-empty"


def test_error_schema(orbit15, tmp_path, capsys):
    assert run("warp", "--scene", orbit15, "--src", "0042", "--tgt", "0000", "--out", tmp_path) == 2
    err = _err(capsys)
    assert set(err) == {"code", "message"} and err["code"] == "contract_error"
    assert run("warp", "--scene", orbit15) == 2
    assert set(_err(capsys)) == {"code", "message"}
    (tmp_path / "bad.toml").write_text("[defaults]\nbogus = 1\n")
    assert run("warp", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path,
               "--config", tmp_path / "bad.toml") == 2
    assert _err(capsys)["code"] == "contract_error"


def test_error_schema_subprocess(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nvsinpaint", "pair", "--scene", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["code"] == "domain_error"


def test_mask_outputs(orbit15, tmp_path):
    assert run("mask", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path / "s") == 0
    assert run("mask", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path / "b",
               "--binary", "--step-scale", 0.25, "--occ-tol", 2e-3) == 0
    smooth = np.round(read_gray(tmp_path / "s" / "mask.png") * 255)
    binary = np.round(read_gray(tmp_path / "b" / "mask.png") * 255)
    assert set(np.unique(binary)) <= {0, 255}
    cov = read_gray(tmp_path / "s" / "coverage.png") > 0.5
    assert (smooth[cov] > 0).all()
    assert ((smooth > 0) == (binary > 0)).mean() > 0.98


def test_weightmap(orbit15, tmp_path):
    run("mask", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path)
    assert run("weightmap", "--mask", tmp_path / "mask.png", "--coverage", tmp_path / "coverage.png",
               "--out", tmp_path / "w.pfm") == 0
    W = read_pfm(tmp_path / "w.pfm")
    assert set(np.unique(W)) == {1.0, 2.0}
    known = read_gray(tmp_path / "mask.png") > 0
    assert np.array_equal(W == 2.0, ~known)


def test_noise(orbit15, tmp_path, capsys):
    assert run("noise", "--image", orbit15 / "rgb" / "0000.png", "--seed", 3, "--out", tmp_path / "a") == 0
    info = json.loads(capsys.readouterr().out)
    assert 900 <= info["t"] <= 999
    run("noise", "--image", orbit15 / "rgb" / "0000.png", "--seed", 3, "--out", tmp_path / "b")
    assert (tmp_path / "a" / "x_t.pfm").read_bytes() == (tmp_path / "b" / "x_t.pfm").read_bytes()
    x0 = read_rgb(orbit15 / "rgb" / "0000.png")
    n = read_pfm(tmp_path / "a" / "noise.pfm")
    a = info["alpha_bar"]
    np.testing.assert_allclose(read_pfm(tmp_path / "a" / "x_t.pfm"), np.sqrt(a) * x0 + np.sqrt(1 - a) * n, atol=1e-5)
    assert run("noise", "--image", orbit15 / "rgb" / "0000.png", "--t", 0, "--out", tmp_path / "c") == 0


def test_synth_identity(orbit15, tmp_path):
    assert run("synth", "--scene", orbit15, "--src", "0000", "--tgt", "0000", "--out", tmp_path) == 0
    fg = read_gray(orbit15 / "mask" / "0000.png") > 0.5
    out, src = read_rgb(tmp_path / "synth.png"), read_rgb(orbit15 / "rgb" / "0000.png")
    assert np.abs(out[fg] - src[fg]).max() <= 1e-6


def test_synth_with_external_denoiser(orbit15, tmp_path):
    script = tmp_path / "zero.py"
    script.write_text(textwrap.dedent("""
        import sys, pathlib
        from nvsinpaint.imageio import read_pfm, write_pfm
        d = pathlib.Path(sys.argv[1])
        write_pfm(d / "eps.pfm", 0 * read_pfm(d / "x_t.pfm"))
    """))
    cfg = tmp_path / "c.toml"
    cfg.write_text("[defaults]\nddim_steps = 3\nguidance_steps = 3\n")
    assert run("synth", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path / "o",
               "--config", cfg, "--denoiser-cmd", f"{sys.executable} {script}",
               "--denoiser-workdir", tmp_path / "work") == 0
    # full guidance ends on the partial view itself
    assert (read_encoded(tmp_path / "o" / "synth.png") == read_encoded(tmp_path / "o" / "partial.png")).all()


def test_eval_identical(orbit15, tmp_path, capsys):
    assert run("eval", "--pred", orbit15, "--gt", orbit15, "--out", tmp_path / "e.csv") == 0
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "id,psnr_masked,psnr,ssim_masked,ssim"
    assert [l.split(",")[0] for l in lines[1:]] == ["0000", "0001", "mean"]
    for line in lines[1:]:
        assert line.split(",")[1:] == ["100.000000", "100.000000", "1.000000", "1.000000"]


def test_eval_missing_prediction(orbit15, tmp_path, capsys):
    (tmp_path / "p").mkdir()
    assert run("eval", "--pred", tmp_path / "p", "--gt", orbit15) == 2
    assert _err(capsys)["code"] == "contract_error"


def test_pair_deterministic(orbit15, capsys):
    run("pair", "--scene", orbit15, "--seed", 7)
    a = capsys.readouterr().out
    run("pair", "--scene", orbit15, "--seed", 7)
    assert capsys.readouterr().out == a
    assert {json.loads(a)["source"], json.loads(a)["target"]} == {"0000", "0001"}


def test_config_dump_replay(orbit15, tmp_path):
    assert run("synth", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path / "a",
               "--beta", 30, "--step-scale", 0.4, "--dump-config", tmp_path / "eff.toml") == 0
    assert run("synth", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path / "b",
               "--config", tmp_path / "eff.toml", "--workers", 3) == 0
    for name in ("synth.png", "partial.png", "mask.png", "coverage.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_recenter_flag(orbit15, tmp_path):
    assert run("warp", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path / "a") == 0
    assert run("warp", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--recenter",
               "--out", tmp_path / "b") == 0
    a, b = read_encoded(tmp_path / "a" / "splat.png"), read_encoded(tmp_path / "b" / "splat.png")
    # a similarity transform of the whole scene leaves the picture unchanged up to round-off
    assert np.abs(a - b).max() <= 1 / 255 + 1e-12


def test_tgt_cam_json(orbit15, tmp_path):
    assert run("warp", "--scene", orbit15, "--src", "0000", "--tgt-cam", orbit15 / "cam" / "0001.json",
               "--out", tmp_path / "a") == 0
    assert run("warp", "--scene", orbit15, "--src", "0000", "--tgt", "0001", "--out", tmp_path / "b") == 0
    assert (tmp_path / "a" / "splat.png").read_bytes() == (tmp_path / "b" / "splat.png").read_bytes()
