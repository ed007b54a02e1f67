"""Plate thresholding and character segmentation.

The located plate window is binarized with Otsu's criterion on a 256-bin
histogram, split into 8-connected components, and each component that
looks character-sized relative to the seed digit box is cropped out and
resampled to the classifier grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import BinaryImage, GrayImage

HIST_BINS = 256


class DegenerateHistogramError(Exception):
    """All intensity mass in a single bin; no threshold separates anything."""


class SegmentationFailedError(Exception):
    """Fewer than two character-sized components inside the plate window."""


@dataclass(frozen=True)
class OtsuResult:
    threshold: float
    between_class_variance: float
    total_variance: float

    @property
    def separability(self) -> float:
        """Between-class share of the total variance, in [0, 1]."""
        return self.between_class_variance / self.total_variance


def otsu_threshold(region: GrayImage | np.ndarray) -> OtsuResult:
    """Threshold maximizing the between-class variance.

    Intensities are counted into 256 equal bins over [0, 1]; every cut
    between adjacent bins is scored and the best cut t is reported as the
    intensity t/256, so pixels strictly below the threshold fall in the
    lower class. Ties resolve to the lowest threshold.
    """
    pixels = region.pixels if isinstance(region, GrayImage) else np.asarray(region)
    bins = np.minimum((pixels * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    hist = np.bincount(bins.ravel(), minlength=HIST_BINS).astype(np.float64)
    if (hist > 0).sum() < 2:
        raise DegenerateHistogramError("degenerate histogram")

    n = hist.sum()
    # Bin representatives at bin centers; moments for every cut at once.
    reps = (np.arange(HIST_BINS) + 0.5) / HIST_BINS
    w0 = np.cumsum(hist)[:-1]               # mass of bins [0, t) for t in 1..255
    w1 = n - w0
    m0 = np.cumsum(hist * reps)[:-1]
    m1 = (hist * reps).sum() - m0
    valid = (w0 > 0) & (w1 > 0)
    sigma_b = np.zeros(HIST_BINS - 1)
    mu0 = m0[valid] / w0[valid]
    mu1 = m1[valid] / w1[valid]
    sigma_b[valid] = w0[valid] * w1[valid] / (n * n) * (mu0 - mu1) ** 2

    cut = int(np.argmax(sigma_b)) + 1       # first maximum = lowest threshold
    mu = (hist * reps).sum() / n
    total = (hist * (reps - mu) ** 2).sum() / n
    return OtsuResult(
        threshold=cut / HIST_BINS,
        between_class_variance=float(sigma_b[cut - 1]),
        total_variance=float(total),
    )


def binarize(
    region: GrayImage, threshold: float, polarity: str = "auto"
) -> BinaryImage:
    """Split at the threshold; foreground 1, background 0.

    polarity "dark" takes pixels below the threshold as foreground, "light"
    the rest, "auto" whichever class is the minority (dark on a tie, as
    plate characters are dark on a light plate).
    """
    dark = region.pixels < threshold
    if polarity == "dark":
        fg = dark
    elif polarity == "light":
        fg = ~dark
    elif polarity == "auto":
        n_dark = int(dark.sum())
        fg = dark if 2 * n_dark <= dark.size else ~dark
    else:
        raise ValueError(f"unknown polarity {polarity!r}")
    return BinaryImage(fg.astype(np.uint8))


@dataclass(frozen=True)
class CharBox:
    """One segmented character: its plate-window box and binary crop."""

    bbox: tuple[int, int, int, int]         # half-open, window coords
    image: BinaryImage


def clip_characters(
    binary: BinaryImage,
    seed_bbox: tuple[int, int, int, int],
    height_range: tuple[float, float] = (0.6, 1.4),
    width_range: tuple[float, float] = (0.3, 1.6),
    min_row_overlap: float = 0.5,
) -> list[CharBox]:
    """Character-sized 8-connected components, left to right.

    The seed box fixes the expected character scale and the text row.
    A component is kept when its height and width fall inside the given
    multiples of the seed box and its vertical extent overlaps the seed
    rows by at least min_row_overlap of the seed height. Other foreground
    pixels sharing a kept component's box are masked out of the crop.
    """
    labels, count = ndimage.label(binary.pixels, structure=np.ones((3, 3), dtype=int))
    seed_h = seed_bbox[3] - seed_bbox[1]
    seed_w = seed_bbox[2] - seed_bbox[0]
    boxes: list[CharBox] = []
    for idx, sl in enumerate(ndimage.find_objects(labels), start=1):
        if sl is None:
            continue
        ys, xs = sl
        h = ys.stop - ys.start
        w = xs.stop - xs.start
        if not (height_range[0] * seed_h <= h <= height_range[1] * seed_h):
            continue
        if not (width_range[0] * seed_w <= w <= width_range[1] * seed_w):
            continue
        overlap = min(ys.stop, seed_bbox[3]) - max(ys.start, seed_bbox[1])
        if overlap < min_row_overlap * seed_h:
            continue
        crop = (labels[sl] == idx).astype(np.uint8)
        boxes.append(
            CharBox(bbox=(xs.start, ys.start, xs.stop, ys.stop), image=BinaryImage(crop))
        )
    if len(boxes) < 2:
        raise SegmentationFailedError(
            f"found {len(boxes)} character-sized components, need at least 2"
        )
    boxes.sort(key=lambda b: b.bbox[0])
    return boxes


def _nn_resample(mask: np.ndarray, grid_w: int, grid_h: int) -> np.ndarray:
    src_h, src_w = mask.shape
    rows = np.minimum((np.arange(grid_h) + 0.5) * src_h // grid_h, src_h - 1).astype(int)
    cols = np.minimum((np.arange(grid_w) + 0.5) * src_w // grid_w, src_w - 1).astype(int)
    return mask[np.ix_(rows, cols)]


def normalize_character(
    char: CharBox | BinaryImage, grid_w: int, grid_h: int
) -> BinaryImage:
    """Tight-crop the foreground and resample to grid_w x grid_h.

    Nearest-neighbor resampling keeps the mask binary. An input already at
    the grid size passes through unchanged, so pre-sized masks are stable
    under repeated normalization.
    """
    img = char.image if isinstance(char, CharBox) else char
    mask = img.pixels
    if mask.shape == (grid_h, grid_w):
        return BinaryImage(mask.copy())
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("empty foreground")
    tight = mask[ys.min() : ys.max() + 1, xs.min() : xs.max() + 1]
    return BinaryImage(_nn_resample(tight, grid_w, grid_h).astype(np.uint8))
