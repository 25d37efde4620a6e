import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from nvsinpaint.errors import ContractError
from nvsinpaint.imageio import (encode_rgb, linear_to_srgb, read_depth, read_encoded, read_gray, read_pfm,
                                read_rgb, srgb_to_linear, write_depth, write_gray, write_pfm, write_rgb)


@given(hnp.arrays(np.float32, st.tuples(st.integers(1, 9), st.integers(1, 9)),
                  elements=st.floats(-1e6, 1e6, width=32)))
def test_pfm_round_trip_gray(tmp_path_factory, a):
    p = tmp_path_factory.mktemp("pfm") / "a.pfm"
    write_pfm(p, a)
    assert np.array_equal(read_pfm(p), a)


def test_pfm_layout(tmp_path):
    a = np.arange(6, dtype=np.float32).reshape(2, 3)
    write_pfm(tmp_path / "a.pfm", a)
    raw = (tmp_path / "a.pfm").read_bytes()
    assert raw.startswith(b"Pf\n3 2\n-1.0\n")
    # bottom row first, little endian
    assert np.array_equal(np.frombuffer(raw[12:], "<f4"), [3, 4, 5, 0, 1, 2])


def test_pfm_color_and_big_endian(tmp_path):
    a = np.random.default_rng(0).standard_normal((4, 5, 3)).astype(np.float32)
    write_pfm(tmp_path / "c.pfm", a)
    assert np.array_equal(read_pfm(tmp_path / "c.pfm"), a)
    p = tmp_path / "be.pfm"
    p.write_bytes(b"Pf\n2 1\n1.0\n" + np.array([1.5, -2], ">f4").tobytes())
    assert np.array_equal(read_pfm(p), [[1.5, -2]])


@pytest.mark.parametrize("blob", [b"P6\n1 1\n-1\n", b"Pf\nx y\n-1\n", b"Pf\n2 2\n-1.0\n" + b"\0" * 7])
def test_pfm_corrupt(tmp_path, blob):
    p = tmp_path / "bad.pfm"
    p.write_bytes(blob)
    with pytest.raises(ContractError):
        read_pfm(p)


def test_depth_invalid_becomes_nan(tmp_path):
    write_depth(tmp_path / "d.pfm", np.array([[1.0, -1.0], [0.0, np.inf]]))
    d = read_depth(tmp_path / "d.pfm")
    assert d[0, 0] == 1.0 and np.isnan(d[0, 1]) and np.isnan(d[1, 0]) and np.isnan(d[1, 1])


def test_srgb_inverse():
    x = np.linspace(0, 1, 1001)
    np.testing.assert_allclose(linear_to_srgb(srgb_to_linear(x)), x, atol=1e-12)


@pytest.mark.parametrize("bits", [8, 16])
def test_png_codes_round_trip(tmp_path, bits):
    top = 255 if bits == 8 else 65535
    codes = np.arange(top + 1)
    side = int(np.ceil(np.sqrt(len(codes) / 3)))
    enc = np.resize(codes, (side, side, 3))
    rgb = srgb_to_linear(enc / top)
    write_rgb(tmp_path / "a.png", rgb, bits)
    assert np.array_equal(encode_rgb(read_rgb(tmp_path / "a.png"), bits), enc)
    np.testing.assert_array_equal(read_encoded(tmp_path / "a.png"), enc / top)


def test_png_reads_foreign_8bit(tmp_path):
    arr = np.random.default_rng(0).integers(0, 256, (5, 6, 3), dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "x.png")
    assert np.array_equal(encode_rgb(read_rgb(tmp_path / "x.png")), arr)


def test_write_rgb_checks(tmp_path):
    with pytest.raises(ContractError):
        write_rgb(tmp_path / "a.png", np.zeros((4, 4)))
    with pytest.raises(ContractError):
        write_rgb(tmp_path / "a.png", np.zeros((4, 4, 3)), bits=12)


def test_gray_round_trip(tmp_path):
    v = np.arange(256).reshape(16, 16) / 255
    write_gray(tmp_path / "g.png", v)
    np.testing.assert_array_equal(read_gray(tmp_path / "g.png"), v)
