"""Grayscale image I/O, 8x8 block DCT in zig-zag order, and PSNR."""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.fft import dctn, idctn
from scipy.ndimage import gaussian_filter

from .lut import FpParams, MediaVector, round_half_away

BLOCK = 8


class ImageFormatError(ValueError):
    pass


@dataclass(eq=False)
class GrayImage:
    pixels: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        h, w = self.pixels.shape
        if h % BLOCK or w % BLOCK or h == 0 or w == 0:
            raise ImageFormatError(f"dimensions must be positive multiples of {BLOCK}, got {w}x{h}")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


_PGM_HEADER = re.compile(rb"P5(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)(?:\s|#[^\n]*\n)+(\d+)\s")


def load_pgm(path) -> GrayImage:
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if not m:
        raise ImageFormatError(f"{path}: not a binary PGM (P5) file")
    w, h, maxval = (int(x) for x in m.groups())
    if maxval != 255:
        raise ImageFormatError(f"{path}: maxval must be 255, got {maxval}")
    body = data[m.end() :]
    if len(body) != w * h:
        raise ImageFormatError(f"{path}: expected {w * h} samples, found {len(body)}")
    return GrayImage(np.frombuffer(body, dtype=np.uint8).reshape(h, w))


def save_pgm(img: GrayImage, path) -> None:
    Path(path).write_bytes(pgm_bytes(img))


def pgm_bytes(img: GrayImage) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + img.pixels.tobytes()


@lru_cache(maxsize=None)
def zigzag_order(n: int = BLOCK) -> np.ndarray:
    """Flat indices of an ``n x n`` block in JPEG zig-zag order."""
    cells = sorted(
        ((r, c) for r in range(n) for c in range(n)),
        key=lambda rc: (rc[0] + rc[1], rc[0] if (rc[0] + rc[1]) % 2 else rc[1]),
    )
    return np.array([r * n + c for r, c in cells])


def _blocks(a: np.ndarray) -> np.ndarray:
    h, w = a.shape
    return a.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).transpose(0, 2, 1, 3)


def _unblocks(b: np.ndarray) -> np.ndarray:
    bh, bw = b.shape[:2]
    return b.transpose(0, 2, 1, 3).reshape(bh * BLOCK, bw * BLOCK)


def block_dct(pixels: np.ndarray) -> np.ndarray:
    """Real-valued coefficient vector: blocks in raster order, zig-zag inside."""
    coeffs = dctn(_blocks(np.asarray(pixels, dtype=np.float64)), axes=(2, 3), norm="ortho")
    return coeffs.reshape(-1, BLOCK * BLOCK)[:, zigzag_order()].reshape(-1)


def block_idct(vec: np.ndarray, width: int, height: int) -> np.ndarray:
    flat = np.asarray(vec, dtype=np.float64).reshape(-1, BLOCK * BLOCK)
    if flat.shape[0] != (width // BLOCK) * (height // BLOCK):
        raise ImageFormatError(f"{len(vec)} coefficients do not fit a {width}x{height} image")
    blocks = np.empty_like(flat)
    blocks[:, zigzag_order()] = flat
    blocks = blocks.reshape(height // BLOCK, width // BLOCK, BLOCK, BLOCK)
    return _unblocks(idctn(blocks, axes=(2, 3), norm="ortho"))


def to_coefficients(img: GrayImage, fp: FpParams | None = None) -> MediaVector:
    fp = fp or FpParams()
    return MediaVector(fp.quantize(block_dct(img.pixels), fp.media_bits), fp.frac_bits)


def from_coefficients(v: MediaVector, width: int, height: int) -> GrayImage:
    px = block_idct(v.real(), width, height)
    return GrayImage(np.clip(round_half_away(px), 0, 255).astype(np.uint8))


def psnr(a: GrayImage, b: GrayImage) -> float:
    if a.pixels.shape != b.pixels.shape:
        raise ImageFormatError("images differ in size")
    mse = np.mean((a.pixels.astype(np.float64) - b.pixels.astype(np.float64)) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


# -- deterministic stand-ins for the standard test pictures ------------------
#
# name -> (smooth structure amplitude, structure scale in px, fine texture std)
STANDARD_IMAGES = {
    "baboon": (45.0, 6.0, 30.0),
    "pirate": (55.0, 14.0, 14.0),
    "lena": (50.0, 20.0, 8.0),
    "car": (60.0, 10.0, 12.0),
}


def synthetic_image(name: str, size: int = 512) -> GrayImage:
    """A textured 8-bit picture seeded by ``name``.

    Used in place of the standard test pictures, which are not bundled; real
    PGM files can be passed to the experiment commands instead.
    """
    amp, scale, fine = STANDARD_IMAGES.get(name, (50.0, 12.0, 15.0))
    seed = int.from_bytes(hashlib.sha256(b"creams/image/" + name.encode()).digest()[:8], "little")
    rng = np.random.default_rng(seed)
    field = gaussian_filter(rng.normal(0.0, 1.0, (size, size)), scale * size / 512, mode="wrap")
    field *= amp / field.std()
    y, x = np.mgrid[0:size, 0:size] / size
    ramp = 25.0 * np.sin(2 * np.pi * (x + 0.5 * y))
    px = 128.0 + field + ramp + rng.normal(0.0, fine, (size, size))
    return GrayImage(np.clip(round_half_away(px), 0, 255).astype(np.uint8))
