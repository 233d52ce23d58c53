"""Synthetic image generation and PGM import.

Two generator styles stand in for natural-image datasets: lowfreq (sums of
random low-frequency sinusoids, smooth global structure) and blobs (random
Gaussian bumps, localized structure). Both normalize to [0, 1] and guarantee
pairwise-distinct images by redrawing byte-identical duplicates.
"""

import hashlib
import os

import numpy as np

from . import rng, serialize
from .errors import ConfigError, ShapeError
from .encoder import ImageSpec

STYLES = ("lowfreq", "blobs", "import")


def _lowfreq_image(gen, w, h, c, max_freq=3):
    xs = np.arange(w)[:, None] / w
    ys = np.arange(h)[None, :] / h
    img = np.zeros((w, h))
    for fx in range(max_freq + 1):
        for fy in range(max_freq + 1):
            if fx == 0 and fy == 0:
                continue
            amp = gen.normal() / (1.0 + fx + fy)
            phx, phy = gen.uniform(0, 2 * np.pi, size=2)
            img += amp * np.cos(2 * np.pi * fx * xs + phx) * np.cos(
                2 * np.pi * fy * ys + phy
            )
    lo, hi = img.min(), img.max()
    img = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    return np.repeat(img[:, :, None], c, axis=2)


def _blobs_image(gen, w, h, c):
    xs = np.arange(w)[:, None]
    ys = np.arange(h)[None, :]
    img = np.zeros((w, h))
    for _ in range(int(gen.integers(3, 9))):
        cx, cy = gen.uniform(0, w), gen.uniform(0, h)
        width = gen.uniform(2.0, 8.0)
        amp = gen.uniform(0.5, 1.0)
        img += amp * np.exp(-(((xs - cx) ** 2) + (ys - cy) ** 2) / (2 * width**2))
    hi = img.max()
    img = img / hi if hi > 0 else img
    return np.repeat(img[:, :, None], c, axis=2)


def gen_images(count, spec, style, seed):
    """Generate `count` pairwise-distinct images of the given style."""
    if style not in ("lowfreq", "blobs"):
        raise ConfigError(f"unknown generator style {style!r}")
    draw = _lowfreq_image if style == "lowfreq" else _blobs_image
    images = np.empty((count, spec.width, spec.height, spec.channels))
    seen = set()
    i = 0
    attempt = 0
    while i < count:
        gen = rng.stream(seed, "datasets", style, attempt)
        img = draw(gen, spec.width, spec.height, spec.channels)
        attempt += 1
        digest = hashlib.sha256(img.tobytes()).digest()
        if digest in seen:  # duplicate: redraw from the next substream
            continue
        seen.add(digest)
        images[i] = img
        i += 1
    return images


def import_pgm_dir(path, spec):
    """Read every .pgm (binary P5) file in a directory, sorted by name."""
    if spec.channels != 1:
        raise ConfigError("PGM import supports single-channel specs only")
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".pgm"))
    images, problems = [], []
    for name in names:
        try:
            images.append(read_pgm(os.path.join(path, name), spec))
        except (ShapeError, ConfigError, OSError) as exc:
            problems.append(f"{name}: {exc}")
    if problems:
        raise ConfigError("PGM import failed:\n" + "\n".join(problems))
    return np.array(images)


def read_pgm(filepath, spec):
    with open(filepath, "rb") as fh:
        data = fh.read()
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed; pixel bytes follow the single whitespace after maxval
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1
    if tokens[0] != b"P5":
        raise ConfigError(f"not a binary PGM (P5) file: magic {tokens[0]!r}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if (width, height) != (spec.width, spec.height):
        raise ShapeError(
            f"PGM is {width}x{height}, spec wants {spec.width}x{spec.height}"
        )
    if maxval >= 256:
        raise ConfigError("16-bit PGM not supported")
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    # PGM stores rows of the visual image; our axis 0 is width
    img = pixels.reshape(height, width).T.astype(np.float64) / maxval
    return img[:, :, None]


def save_dataset(json_path, images, spec, style, seed):
    meta = {
        "kind": "dataset", "spec": spec.to_dict(), "style": style,
        "seed": seed, "count": len(images),
    }
    return serialize.write_arrays(json_path, {"images": images}, meta=meta)


def load_dataset(json_path):
    meta, arrays = serialize.read_arrays(json_path)
    if meta.get("kind") != "dataset":
        raise ConfigError(f"not a dataset manifest: {json_path}")
    return ImageSpec.from_dict(meta["spec"]), arrays["images"]
