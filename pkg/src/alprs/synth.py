"""Synthetic plate rendering for training, evaluation, and demos.

Everything here draws with one bold sans font so that template digits,
OCR training samples, and rendered plates share glyph shapes. Images are
composed as float arrays in [0, 1]; randomness comes only from the numpy
Generator passed in, so corpora are reproducible from a seed.

Requires Pillow and matplotlib (for the bundled font file); the core
pipeline does not import this module.
"""

from __future__ import annotations

import string
from functools import lru_cache
from pathlib import Path

import numpy as np

from .imgcore import GrayImage, save_pgm
from .matchdb import DIGITS

INK = 0.12
PLATE_BG = 0.88
SURROUND = 0.35
OCR_CHARS = DIGITS + string.ascii_uppercase

_FONT_FILE = "DejaVuSans-Bold.ttf"


def _font_path() -> str:
    import matplotlib

    path = Path(matplotlib.get_data_path()) / "fonts" / "ttf" / _FONT_FILE
    if not path.is_file():
        raise RuntimeError(f"bundled font not found: {path}")
    return str(path)


@lru_cache(maxsize=None)
def _font(size: int):
    from PIL import ImageFont

    return ImageFont.truetype(_font_path(), size)


@lru_cache(maxsize=None)
def _font_for_cap_height(target_h: int):
    """Font whose digit cap height lands on the target pixel height."""
    size = target_h
    for _ in range(3):
        font = _font(size)
        x0, y0, x1, y1 = font.getbbox("0")
        got = y1 - y0
        if got == target_h:
            break
        size = max(4, round(size * target_h / got))
    return _font(size)


def _glyph_mask(char: str, height: int) -> np.ndarray:
    """Anti-aliased ink coverage of one glyph, tight box, in [0, 1]."""
    from PIL import Image, ImageDraw

    font = _font_for_cap_height(height)
    x0, y0, x1, y1 = font.getbbox(char)
    canvas = Image.new("L", (x1 - x0, y1 - y0), 0)
    ImageDraw.Draw(canvas).text((-x0, -y0), char, font=font, fill=255)
    return np.asarray(canvas, dtype=np.float64) / 255.0


def _glyph_sprite(char: str, height: int) -> tuple[np.ndarray, int]:
    """Column-tight glyph mask plus its top offset below the line top.

    The offset preserves baseline alignment when sprites of different
    vertical extents (descenders on J and Q) are placed on one text line.
    """
    font = _font_for_cap_height(height)
    y0 = font.getbbox(char)[1]
    mask = _glyph_mask(char, height)
    cols = np.nonzero(mask.max(axis=0) > 0)[0]
    return mask[:, cols[0] : cols[-1] + 1], y0


def render_glyph(
    char: str,
    height: int = 80,
    ink: float = INK,
    bg: float = PLATE_BG,
    margin: float = 0.15,
) -> GrayImage:
    """One character on a plain background with a proportional margin."""
    mask = _glyph_mask(char, height)
    pad = max(2, round(margin * height))
    h, w = mask.shape
    out = np.full((h + 2 * pad, w + 2 * pad), bg)
    out[pad : pad + h, pad : pad + w] += (ink - bg) * mask
    return GrayImage(np.clip(out, 0.0, 1.0))


def render_digit_templates(height: int = 80) -> dict[str, GrayImage]:
    return {c: render_glyph(c, height) for c in DIGITS}


def write_digit_templates(out_dir, height: int = 80) -> list[Path]:
    """Save 0.pgm .. 9.pgm; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for char, img in render_digit_templates(height).items():
        path = out_dir / f"{char}.pgm"
        save_pgm(img, path)
        paths.append(path)
    return paths


def write_training_set(
    out_dir,
    rng: np.random.Generator,
    samples_per_class: int = 12,
    base_height: int = 80,
    scale_jitter: float = 0.10,
    noise_sigma: float = 0.02,
) -> Path:
    """Labeled glyph renders, `<label>/<nn>.pgm`, for the 36 plate classes.

    Sizes and noise are jittered so the trained forbidden sets absorb the
    mask wobble that binarized plate characters show.
    """
    out_dir = Path(out_dir)
    for label in OCR_CHARS:
        sub = out_dir / label
        sub.mkdir(parents=True, exist_ok=True)
        for i in range(samples_per_class):
            scale = 1.0 + rng.uniform(-scale_jitter, scale_jitter)
            img = render_glyph(label, max(16, round(base_height * scale)))
            noisy = img.pixels + rng.normal(0.0, noise_sigma, img.pixels.shape)
            save_pgm(GrayImage(np.clip(noisy, 0.0, 1.0)), sub / f"{i:02d}.pgm")
    return out_dir


def random_plate_text(rng: np.random.Generator) -> str:
    letters = "".join(rng.choice(list(string.ascii_uppercase), size=3))
    digits = "".join(rng.choice(list(DIGITS), size=4))
    return letters + digits


def render_plate_image(
    text: str,
    rng: np.random.Generator,
    width: int = 640,
    height: int = 240,
    plate_w: int = 600,
    plate_h: int = 160,
    char_height: int = 80,
    scale_jitter: float = 0.10,
    noise_sigma: float = 0.02,
    screw_holes: bool = True,
) -> GrayImage:
    """A seven-character plate (LLL-NNNN drawn with a hyphen) in a scene.

    The plate rectangle sits on a darker surround, characters share one
    jittered scale, screw-hole blobs are drawn small enough to fail the
    character size gates, and Gaussian noise is added last. A text row
    too wide for the plate (three W's at high jitter) is re-rendered
    proportionally smaller rather than clipped.
    """
    if len(text) != 7:
        raise ValueError("plate text must be 7 characters")
    out = np.full((height, width), SURROUND)
    px0 = (width - plate_w) // 2
    py0 = (height - plate_h) // 2
    cy = py0 + plate_h // 2
    out[py0 : py0 + plate_h, px0 : px0 + plate_w] = PLATE_BG

    scale = 1.0 + rng.uniform(-scale_jitter, scale_jitter)
    glyph_h = max(16, round(char_height * scale))
    seq = text[:3] + "-" + text[3:]
    avail = plate_w - 20

    def layout(h: int):
        sprites = [_glyph_sprite(c, h) for c in seq]
        gap = max(3, round(0.10 * h))
        total = sum(m.shape[1] for m, _ in sprites) + gap * (len(sprites) - 1)
        return sprites, gap, total

    sprites, gap, total = layout(glyph_h)
    if total > avail:
        glyph_h = max(16, int(glyph_h * avail / total))
        sprites, gap, total = layout(glyph_h)
        while total > avail and gap > 1:
            gap -= 1
            total = sum(m.shape[1] for m, _ in sprites) + gap * (len(sprites) - 1)

    # Caps band centered on the plate row; per-sprite top offsets keep
    # descenders hanging from the shared baseline.
    font = _font_for_cap_height(glyph_h)
    cap_y0, cap_y1 = font.getbbox("0")[1], font.getbbox("0")[3]
    line_top = cy - (cap_y1 - cap_y0) // 2 - cap_y0
    x = px0 + (plate_w - total) // 2
    for mask, y0 in sprites:
        gh, gw = mask.shape
        y = line_top + y0
        out[y : y + gh, x : x + gw] += (INK - PLATE_BG) * mask
        x += gw + gap

    if screw_holes:
        # Small enough to fail the character height gate, high enough to
        # clear the caps band of the widest jittered row.
        r = round(0.18 * glyph_h)
        hy = py0 + round(0.11 * plate_h)
        yy, xx = np.mgrid[0:height, 0:width]
        for hx in (px0 + plate_w // 4, px0 + 3 * plate_w // 4):
            hole = (xx - hx) ** 2 + (yy - hy) ** 2 <= r * r
            out[hole] = INK

    out += rng.normal(0.0, noise_sigma, out.shape)
    return GrayImage(np.clip(out, 0.0, 1.0))


def write_corpus(
    out_dir,
    n_plates: int = 36,
    seed: int = 7,
    **plate_kwargs,
) -> Path:
    """Render a corpus plus `manifest.tsv` rows `path<TAB>plate`.

    Image paths are written relative to the manifest, which sits in the
    same directory, so the corpus stays valid when the directory moves.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = out_dir / "manifest.tsv"
    with open(manifest, "w") as f:
        for i in range(n_plates):
            text = random_plate_text(rng)
            img = render_plate_image(text, rng, **plate_kwargs)
            name = f"plate_{i:03d}.pgm"
            save_pgm(img, out_dir / name)
            f.write(f"{name}\t{text}\n")
    return manifest
