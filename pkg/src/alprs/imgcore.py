"""Grayscale/binary rasters, PNM file I/O, and the convolution primitives.

Images are carried as numpy arrays wrapped in thin containers that enforce
the value-range invariants the rest of the pipeline relies on. All
operations are pure: inputs are never mutated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

# Luma weights (ITU-R BT.601), applied as integer ratios in load_image.
LUMA_R, LUMA_G, LUMA_B = 0.299, 0.587, 0.114


class PnmError(Exception):
    """Problem with a PNM (PGM/PPM) file."""


class PnmMagicError(PnmError):
    """File does not start with a supported PNM magic number."""


class PnmHeaderError(PnmError):
    """PNM header is present but malformed."""


class PnmDataError(PnmError):
    """PNM raster data is truncated or invalid."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Row-major raster of intensities in [0, 1].

    ``pixels`` has shape (height, width) and dtype float64.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("GrayImage requires a non-empty 2-d array")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("GrayImage intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def crop(self, x0: int, y0: int, x1: int, y1: int) -> "GrayImage":
        """Half-open window [x0,x1) x [y0,y1), clipped to the image."""
        x0 = max(0, x0)
        y0 = max(0, y0)
        x1 = min(self.width, x1)
        y1 = min(self.height, y1)
        if x1 <= x0 or y1 <= y0:
            raise ValueError("empty crop window")
        return GrayImage(self.pixels[y0:y1, x0:x1].copy())


@dataclass(frozen=True, eq=False)
class BinaryImage:
    """Row-major raster over {0, 1}; 1 marks foreground (character ink)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("BinaryImage requires a non-empty 2-d array")
        if not np.isin(px, (0, 1)).all():
            raise ValueError("BinaryImage values must be 0 or 1")
        object.__setattr__(self, "pixels", px.astype(np.uint8))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


def _tokenize_header(raw: bytes):
    """Yield whitespace-separated header tokens, skipping '#' comments.

    Also yields the byte offset just past each token so binary readers can
    find where the raster starts.
    """
    i = 0
    n = len(raw)
    while i < n:
        c = raw[i : i + 1]
        if c in b" \t\r\n\x0b\x0c":
            i += 1
        elif c == b"#":
            while i < n and raw[i : i + 1] not in b"\r\n":
                i += 1
        else:
            start = i
            while i < n and raw[i : i + 1] not in b" \t\r\n\x0b\x0c#":
                i += 1
            yield raw[start:i], i
    return


def _int_token(token: bytes, what: str) -> int:
    try:
        value = int(token)
    except ValueError:
        raise PnmHeaderError(f"malformed {what}: {token!r}") from None
    return value


def load_image(path) -> GrayImage:
    """Read a PGM (P2/P5) or PPM (P3/P6) file as a GrayImage.

    Color images are reduced to luma 0.299 R + 0.587 G + 0.114 B; samples
    are scaled by 1/maxval into [0, 1]. Header comments are tolerated.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 2:
        raise PnmMagicError(f"{path}: too short to hold a PNM magic number")
    magic = raw[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise PnmMagicError(f"{path}: unsupported magic number {magic!r}")
    plain = magic in (b"P2", b"P3")
    channels = 3 if magic in (b"P3", b"P6") else 1

    tokens = _tokenize_header(raw)
    next(tokens)  # the magic itself
    fields = []
    end = 2
    try:
        for what in ("width", "height", "maxval"):
            token, end = next(tokens)
            fields.append(_int_token(token, what))
    except StopIteration:
        raise PnmHeaderError(f"{path}: incomplete header") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PnmHeaderError(f"{path}: bad dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise PnmHeaderError(f"{path}: maxval {maxval} outside [1, 65535]")

    count = width * height * channels
    if plain:
        samples = np.empty(count, dtype=np.float64)
        got = 0
        for token, _ in tokens:
            if got >= count:
                break
            samples[got] = _int_token(token, "sample")
            got += 1
        if got < count:
            raise PnmDataError(f"{path}: expected {count} samples, found {got}")
    else:
        # Exactly one whitespace byte separates maxval from the raster.
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        body = raw[end + 1 : end + 1 + need]
        if len(body) < need:
            raise PnmDataError(f"{path}: raster truncated ({len(body)}/{need} bytes)")
        samples = np.frombuffer(body, dtype=dtype).astype(np.float64)

    if samples.max(initial=0.0) > maxval:
        raise PnmDataError(f"{path}: sample exceeds maxval {maxval}")
    if channels == 3:
        rgb = samples.reshape(height, width, 3)
        # Integer weights over a common denominator keep pure white at
        # exactly 1.0 (the float coefficients sum to 1 - 1 ulp).
        gray = (299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2]) / (
            1000.0 * maxval
        )
    else:
        gray = samples.reshape(height, width) / maxval
    return GrayImage(np.clip(gray, 0.0, 1.0))


def save_pgm(img: GrayImage, path, maxval: int = 255) -> None:
    """Write a binary PGM (P5). Intensities are rounded to [0, maxval]."""
    if not 1 <= maxval <= 65535:
        raise ValueError(f"maxval {maxval} outside [1, 65535]")
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    quant = np.rint(img.pixels * maxval).astype(np.uint32)
    data = quant.astype(">u2" if maxval > 255 else "u1").tobytes()
    Path(path).write_bytes(header + data)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-d Gaussian sampled at integer offsets up to radius ceil(3*sigma).

    Renormalized to sum to one, so convolution preserves constants.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def blur_array(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian convolution with edge-clamp borders."""
    kernel = gaussian_kernel(sigma)
    out = ndimage.convolve1d(arr, kernel, axis=1, mode="nearest")
    return ndimage.convolve1d(out, kernel, axis=0, mode="nearest")


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Blur a GrayImage; output has the same dimensions and stays in [0, 1]."""
    out = blur_array(img.pixels, sigma)
    return GrayImage(np.clip(out, 0.0, 1.0))


def downsample_half(img: GrayImage) -> GrayImage:
    """Keep every second pixel; output is floor(w/2) x floor(h/2)."""
    if img.width < 2 or img.height < 2:
        raise ValueError("image too small to downsample")
    out_h = img.height // 2
    out_w = img.width // 2
    return GrayImage(img.pixels[: 2 * out_h : 2, : 2 * out_w : 2].copy())


def subtract(a: GrayImage, b: GrayImage) -> np.ndarray:
    """Per-pixel a - b as a signed float array in [-1, 1]."""
    if a.pixels.shape != b.pixels.shape:
        raise ValueError(
            f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}"
        )
    return a.pixels - b.pixels
