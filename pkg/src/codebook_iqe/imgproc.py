"""Image loading, patch sampling and descriptor standardization.

Images are kept as float64 luminance in [0, 1]. Descriptor sets are plain
(d, l) arrays holding l vectorized patches of dimension d = size * size.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

__all__ = [
    "STD_EPS",
    "GrayImage",
    "load_grayscale",
    "write_pgm",
    "sample_patches",
    "standardize",
]

# stabilizer added to the per-patch standard deviation; maps constant patches to zero
STD_EPS = 1e-8

# ITU-R BT.601 luma weights for RGB input
_BT601 = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class GrayImage:
    """Grayscale image, row-major, values in [0, 1]."""

    data: np.ndarray  # (height, width) float64

    def __post_init__(self):
        d = self.data
        if d.ndim != 2 or d.size == 0:
            raise ValueError("GrayImage needs a non-empty 2D array")
        if not np.all(np.isfinite(d)) or d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("GrayImage values must be finite and in [0, 1]")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _read_pgm(raw: bytes) -> np.ndarray:
    """Parse a binary (P5) PGM with 8-bit samples."""
    pos = 0

    def token():
        nonlocal pos
        while pos < len(raw):
            c = raw[pos : pos + 1]
            if c == b"#":
                while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                    pos += 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        return raw[start:pos]

    if token() != b"P5":
        raise ValueError("not a binary (P5) PGM file")
    width, height, maxval = (int(token()) for _ in range(3))
    if width <= 0 or height <= 0:
        raise ValueError("zero-dimension image")
    if not 0 < maxval < 256:
        raise ValueError(f"unsupported PGM maxval {maxval} (8-bit only)")
    pos += 1  # single whitespace after maxval
    pixels = np.frombuffer(raw, dtype=np.uint8, count=width * height, offset=pos)
    if pixels.size != width * height:
        raise ValueError("truncated PGM raster")
    return pixels.reshape(height, width).astype(np.float64) / maxval


def load_grayscale(path) -> GrayImage:
    """Load a PGM (P5) or PNG image as grayscale.

    RGB inputs are converted with BT.601 luma (0.299 R + 0.587 G + 0.114 B);
    all values are scaled to [0, 1].
    """
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"P5":
        return GrayImage(_read_pgm(raw))
    if raw[:8] == b"\x89PNG\r\n\x1a\n":
        with Image.open(path) as im:
            if im.mode == "P":
                im = im.convert("RGB")
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif im.mode == "RGB":
                rgb = np.asarray(im, dtype=np.float64) / 255.0
                arr = rgb @ _BT601
            else:
                raise ValueError(f"unsupported PNG mode {im.mode!r} (want 8-bit L or RGB)")
        if arr.size == 0:
            raise ValueError("zero-dimension image")
        return GrayImage(arr)
    raise ValueError(f"unsupported image format: {path}")


def write_pgm(path, img: GrayImage) -> None:
    """Write an 8-bit binary PGM; output is byte-deterministic."""
    data = np.clip(np.rint(img.data * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def sample_patches(img: GrayImage, count: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Sample `count` square patches with replacement, uniform over positions.

    Returns the unstandardized descriptor set, shape (size*size, count),
    each column one patch flattened row-major.
    """
    if count <= 0 or size <= 0:
        raise ValueError("count and size must be positive")
    if size > img.height or size > img.width:
        raise ValueError(f"image {img.height}x{img.width} smaller than patch size {size}")
    rows = rng.integers(0, img.height - size + 1, size=count)
    cols = rng.integers(0, img.width - size + 1, size=count)
    out = np.empty((size * size, count), dtype=np.float64)
    for j in range(count):
        out[:, j] = img.data[rows[j] : rows[j] + size, cols[j] : cols[j] + size].ravel()
    return out


def standardize(descriptors: np.ndarray) -> np.ndarray:
    """Standardize each column to zero mean, unit population std.

    x <- (x - mean(x)) / (std(x) + STD_EPS); constant columns become zero.
    """
    x = np.asarray(descriptors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError("descriptor set must be a non-empty (d, l) array")
    mean = x.mean(axis=0)
    std = x.std(axis=0)  # population std (1/N)
    return (x - mean) / (std + STD_EPS)
