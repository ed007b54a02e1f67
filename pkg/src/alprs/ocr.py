"""Character recognition from transition vectors.

A normalized binary character is walked in a serpentine path (even rows
left to right, odd rows right to left) and every adjacent pair (order 2)
or triple (order 3) of pixel values along the path, wrapping cyclically,
is coded into a small alphabet. Training records which codes ever occur
at each path position per class; the complement is that class's forbidden
set. Classification counts forbidden hits and applies three elimination
rules, ending in a relative-violation noise test.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .imgcore import BinaryImage

MODEL_MAGIC = b"ALPRSOCR1"
NOISE_FRACTION = 0.30


class ModelFormatError(Exception):
    """Model file structurally unreadable."""


class ModelMagicError(ModelFormatError):
    """Leading bytes are not the classifier model signature."""


@dataclass(frozen=True)
class GridSpec:
    """Normalization grid and transition order of the path code."""

    grid_w: int
    grid_h: int
    order: int = 2

    def __post_init__(self):
        if self.grid_w < 2 or self.grid_h < 2:
            raise ValueError("grid must be at least 2x2")
        if self.order not in (2, 3):
            raise ValueError("order must be 2 or 3")

    @property
    def n_positions(self) -> int:
        return self.grid_w * self.grid_h

    @property
    def alphabet_size(self) -> int:
        return 2**self.order


def serpentine_path(grid: GridSpec) -> np.ndarray:
    """Flat pixel indices along the boustrophedon scan, length w*h."""
    idx = np.arange(grid.n_positions).reshape(grid.grid_h, grid.grid_w)
    idx[1::2] = idx[1::2, ::-1]
    return idx.ravel()


def transition_vector(img: BinaryImage, grid: GridSpec) -> np.ndarray:
    """Code the pixel sequence along the serpentine path.

    Position i holds the code of the window starting at path step i; the
    path wraps, so the vector length equals the pixel count. Order-2 codes
    are (first << 1) | second over {0..3}, order 3 extends to {0..7}.
    """
    if img.pixels.shape != (grid.grid_h, grid.grid_w):
        raise ValueError(
            f"character is {img.pixels.shape[1]}x{img.pixels.shape[0]}, "
            f"grid wants {grid.grid_w}x{grid.grid_h}"
        )
    seq = img.pixels.ravel()[serpentine_path(grid)].astype(np.uint8)
    codes = seq.copy()
    for step in range(1, grid.order):
        codes = (codes << 1) | np.roll(seq, -step)
    return codes


@dataclass(frozen=True)
class ClassRuleSet:
    """Forbidden transition codes per path position for one class."""

    label: str
    forbidden: np.ndarray       # bool, (n_positions, alphabet_size)
    restriction_count: int

    def violations(self, tv: np.ndarray) -> int:
        return int(self.forbidden[np.arange(tv.size), tv].sum())


@dataclass
class ClassifierModel:
    grid: GridSpec
    classes: dict[str, ClassRuleSet]
    noise_fraction: float = NOISE_FRACTION


def train(
    samples: list[tuple[str, BinaryImage]] | dict[str, list[BinaryImage]],
    grid: GridSpec,
    noise_fraction: float = NOISE_FRACTION,
) -> ClassifierModel:
    """Build per-class forbidden sets from labeled normalized characters.

    A code is forbidden at a position when no training sample of the class
    ever produced it there. Classes must each have at least one sample.
    """
    if isinstance(samples, dict):
        pairs = [(lab, img) for lab, imgs in samples.items() for img in imgs]
    else:
        pairs = list(samples)
    if not pairs:
        raise ValueError("no training samples")
    observed: dict[str, np.ndarray] = {}
    for label, img in pairs:
        tv = transition_vector(img, grid)
        seen = observed.get(label)
        if seen is None:
            seen = np.zeros((grid.n_positions, grid.alphabet_size), dtype=bool)
            observed[label] = seen
        seen[np.arange(tv.size), tv] = True
    classes = {}
    for label in sorted(observed):
        forbidden = ~observed[label]
        classes[label] = ClassRuleSet(
            label=label,
            forbidden=forbidden,
            restriction_count=int(forbidden.sum()),
        )
    return ClassifierModel(grid=grid, classes=classes, noise_fraction=noise_fraction)


def count_violations(tv: np.ndarray, rules: ClassRuleSet) -> int:
    """Forbidden-code hits of the vector against one class."""
    if tv.size != rules.forbidden.shape[0]:
        raise ValueError("transition vector length does not match the rule set")
    return rules.violations(tv)


def classify(
    img: BinaryImage,
    model: ClassifierModel,
    allowed: set[str] | None = None,
) -> str | None:
    """Label of the normalized character, or None for unrecognizable noise.

    Classes with zero violations win outright; among several, the class
    with the most restrictions (the most specific one) is chosen. With no
    clean class, the least relative violator wins unless even it violates
    at least noise_fraction of its restrictions. Ties break to the
    lexicographically smallest label. `allowed` restricts the candidates.
    """
    labels = sorted(model.classes if allowed is None else allowed & set(model.classes))
    if not labels:
        raise ValueError("no candidate classes")
    tv = transition_vector(img, model.grid)
    scores = {lab: model.classes[lab].violations(tv) for lab in labels}

    clean = [lab for lab in labels if scores[lab] == 0]
    if clean:
        return min(clean, key=lambda lab: (-model.classes[lab].restriction_count, lab))
    best = None
    best_ratio = None
    for lab in labels:
        count = model.classes[lab].restriction_count
        if count == 0:
            continue
        ratio = scores[lab] / count
        if best_ratio is None or ratio < best_ratio:
            best, best_ratio = lab, ratio
    if best is None or 1.0 - best_ratio < model.noise_fraction:
        return None
    return best


def save_model(model: ClassifierModel, path) -> None:
    """Write the rule sets in the fixed binary layout, CRC-terminated.

    Per class: the label byte, then one byte per path position whose low
    alphabet-size bits flag the forbidden codes at that position.
    """
    grid = model.grid
    weights = 1 << np.arange(grid.alphabet_size, dtype=np.uint8)
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack(
        "<IIBdI",
        grid.grid_w,
        grid.grid_h,
        grid.order,
        model.noise_fraction,
        len(model.classes),
    )
    for label in sorted(model.classes):
        rules = model.classes[label]
        out += struct.pack("<B", ord(label))
        out += (rules.forbidden @ weights).astype(np.uint8).tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    with open(path, "wb") as f:
        f.write(bytes(out))


def load_model(path) -> ClassifierModel:
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(MODEL_MAGIC):
        raise ModelMagicError("not a classifier model file")
    if len(blob) < len(MODEL_MAGIC) + 4:
        raise ModelFormatError("model file truncated")
    body, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("model file checksum mismatch")

    pos = len(MODEL_MAGIC)

    def take(fmt: str):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(body):
            raise ModelFormatError("model file truncated")
        vals = struct.unpack_from(fmt, body, pos)
        pos += size
        return vals

    grid_w, grid_h, order, noise_fraction, n_classes = take("<IIBdI")
    try:
        grid = GridSpec(grid_w, grid_h, order)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc
    classes = {}
    for _ in range(n_classes):
        (code,) = take("<B")
        if pos + grid.n_positions > len(body):
            raise ModelFormatError("model file truncated")
        packed = np.frombuffer(body, dtype=np.uint8, count=grid.n_positions, offset=pos)
        pos += grid.n_positions
        forbidden = (packed[:, None] >> np.arange(grid.alphabet_size)) & 1 != 0
        label = chr(code)
        classes[label] = ClassRuleSet(
            label=label, forbidden=forbidden, restriction_count=int(forbidden.sum())
        )
    if pos != len(body):
        raise ModelFormatError("trailing bytes after the last class")
    return ClassifierModel(grid=grid, classes=classes, noise_fraction=noise_fraction)
