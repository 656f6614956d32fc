import struct

import numpy as np
import pytest

from activesim.imageio import (
    ImageFormatError,
    read_image,
    read_pfm,
    read_pnm,
    to_unit_float,
    write_image,
    write_pfm,
    write_pgm,
    write_ppm,
)


def test_pfm_bytes_are_exact(tmp_path):
    img = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, np.nan]], dtype=np.float32)
    path = tmp_path / "a.pfm"
    write_pfm(path, img)
    raw = path.read_bytes()
    header = b"Pf\n3 2\n-1.0\n"
    assert raw.startswith(header)
    # scanlines are stored bottom-up, little-endian
    payload = raw[len(header):]
    values = struct.unpack("<6f", payload)
    assert values[:3] == (4.0, 5.0, values[2])
    assert np.isnan(values[2])
    assert values[3:] == (1.0, 2.0, 3.0)


def test_pfm_roundtrip_color(tmp_path, rng):
    img = rng.random((5, 7, 3)).astype(np.float32)
    write_pfm(tmp_path / "c.pfm", img)
    back = read_pfm(tmp_path / "c.pfm")
    assert back.shape == (5, 7, 3)
    assert np.array_equal(back, img)
    assert (tmp_path / "c.pfm").read_bytes()[:3] == b"PF\n"


def test_pfm_big_endian_read(tmp_path):
    img = np.arange(6, dtype=np.float32).reshape(2, 3)
    path = tmp_path / "be.pfm"
    path.write_bytes(b"Pf\n3 2\n1.0\n" + np.flipud(img).astype(">f4").tobytes())
    assert np.array_equal(read_pfm(path), img)


def test_pfm_nan_roundtrip(tmp_path):
    img = np.full((3, 3), np.nan, np.float32)
    img[1, 1] = 0.5
    write_pfm(tmp_path / "n.pfm", img)
    back = read_pfm(tmp_path / "n.pfm")
    assert np.isnan(back).sum() == 8 and back[1, 1] == 0.5


def test_pnm_roundtrip(tmp_path, rng):
    gray = rng.integers(0, 256, (4, 6)).astype(np.uint8)
    color = rng.integers(0, 256, (4, 6, 3)).astype(np.uint8)
    write_pgm(tmp_path / "g.pgm", gray)
    write_ppm(tmp_path / "c.ppm", color)
    assert (tmp_path / "g.pgm").read_bytes().startswith(b"P5\n6 4\n255\n")
    assert np.array_equal(read_pnm(tmp_path / "g.pgm"), gray)
    assert np.array_equal(read_image(tmp_path / "c.ppm"), color)


def test_pgm_16bit_and_comments(tmp_path):
    data = np.array([[0, 1000], [65535, 7]], dtype=">u2")
    path = tmp_path / "w.pgm"
    path.write_bytes(b"P5\n# comment\n2 2\n65535\n" + data.tobytes())
    img = read_pnm(path)
    assert img.dtype == np.uint16
    assert img.tolist() == [[0, 1000], [65535, 7]]
    assert to_unit_float(img)[1, 0] == 1.0


def test_errors(tmp_path):
    bad = tmp_path / "bad.pfm"
    bad.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(ImageFormatError):
        read_pfm(bad)
    trunc = tmp_path / "t.pgm"
    trunc.write_bytes(b"P5\n4 4\n255\n\x00")
    with pytest.raises(ImageFormatError):
        read_pnm(trunc)
    with pytest.raises(ImageFormatError):
        write_image(tmp_path / "x.png", np.zeros((2, 2)))
    with pytest.raises(ImageFormatError):
        write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 2)))
