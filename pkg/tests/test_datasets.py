import hashlib

import numpy as np
import pytest

from patchbreak import datasets, encoder
from patchbreak.errors import ConfigError, ShapeError


SPEC = encoder.ImageSpec()


def test_count_zero_empty_dataset(tmp_path):
    imgs = datasets.gen_images(0, SPEC, "lowfreq", 0)
    assert imgs.shape == (0, 32, 32, 1)
    path = datasets.save_dataset(tmp_path / "d.json", imgs, SPEC, "lowfreq", 0)
    spec, back = datasets.load_dataset(path)
    assert spec == SPEC and back.shape == (0, 32, 32, 1)


def test_fixed_seed_byte_identical():
    a = datasets.gen_images(5, SPEC, "lowfreq", 33)
    b = datasets.gen_images(5, SPEC, "lowfreq", 33)
    assert a.tobytes() == b.tobytes()


def test_1000_lowfreq_pairwise_distinct():
    imgs = datasets.gen_images(1000, SPEC, "lowfreq", 1)
    digests = {hashlib.sha256(im.tobytes()).digest() for im in imgs}
    assert len(digests) == 1000
    assert imgs.min() >= 0.0 and imgs.max() <= 1.0


def test_blobs_range_and_distinctness():
    imgs = datasets.gen_images(50, SPEC, "blobs", 2)
    assert imgs.min() >= 0.0 and imgs.max() <= 1.0
    digests = {hashlib.sha256(im.tobytes()).digest() for im in imgs}
    assert len(digests) == 50


def test_unknown_style_rejected():
    with pytest.raises(ConfigError):
        datasets.gen_images(1, SPEC, "checkerboard", 0)


def _write_pgm(path, width, height, maxval=255, comment=False):
    pixels = bytes((i * 7 + 13) % (maxval + 1) for i in range(width * height))
    header = b"P5\n"
    if comment:
        header += b"# synthetic test image\n"
    header += f"{width} {height}\n{maxval}\n".encode()
    path.write_bytes(header + pixels)


def test_pgm_import_round_trip(tmp_path):
    _write_pgm(tmp_path / "a.pgm", 32, 32)
    _write_pgm(tmp_path / "b.pgm", 32, 32, comment=True)
    imgs = datasets.import_pgm_dir(tmp_path, SPEC)
    assert imgs.shape == (2, 32, 32, 1)
    assert imgs.min() >= 0.0 and imgs.max() <= 1.0
    # pixel (row r, col c) of the PGM lands at [c, r, 0]
    raw = (tmp_path / "a.pgm").read_bytes()[-1024:]
    assert imgs[0, 5, 2, 0] == raw[2 * 32 + 5] / 255.0


def test_pgm_import_lists_every_bad_file(tmp_path):
    _write_pgm(tmp_path / "ok.pgm", 32, 32)
    _write_pgm(tmp_path / "small.pgm", 16, 16)
    _write_pgm(tmp_path / "tiny.pgm", 8, 8)
    with pytest.raises(ConfigError) as err:
        datasets.import_pgm_dir(tmp_path, SPEC)
    msg = str(err.value)
    assert "small.pgm" in msg and "tiny.pgm" in msg and "ok.pgm" not in msg


def test_pgm_rejects_ascii_variant(tmp_path):
    (tmp_path / "x.pgm").write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(ConfigError):
        datasets.read_pgm(tmp_path / "x.pgm", SPEC)


def test_pgm_wrong_size_is_shape_error(tmp_path):
    _write_pgm(tmp_path / "x.pgm", 16, 16)
    with pytest.raises(ShapeError):
        datasets.read_pgm(tmp_path / "x.pgm", SPEC)
