"""
Transition vectors and the restriction classifier
=================================================

A normalized glyph is read along a serpentine path: down the first
column, up the second, and so on, closing back on the start. Each step
packs the two pixel values into a 2-bit code, one code per grid cell.
Training records which codes each class ever produces at each path
position; the complement is that class's forbidden set. A probe is
classified by three elimination rules: keep classes it never violates,
prefer the most restrictive of those, and otherwise take the class with
the least relative violation, unless even that is too noisy to trust.
"""

import numpy as np

from alprs.ocr import GridSpec, classify, count_violations, train, transition_vector
from alprs.segment import binarize, normalize_character, otsu_threshold
from alprs.synth import OCR_CHARS, render_glyph

grid = GridSpec(20, 18)
print(f"grid {grid.grid_w}x{grid.grid_h}: path of {grid.n_positions} cells, "
      f"{grid.n_positions} transition codes, alphabet size {grid.alphabet_size}")


def glyph_sample(char, height, rng=None):
    # render, binarize, and resample a glyph onto the grid
    img = render_glyph(char, height)
    if rng is not None:
        noisy = np.clip(img.pixels + rng.normal(0, 0.04, img.pixels.shape), 0, 1)
        img = type(img)(noisy)
    binary = binarize(img, otsu_threshold(img).threshold, polarity="dark")
    return normalize_character(binary, grid.grid_w, grid.grid_h)


# the vector of a clean "8": mostly 00 (background) and 11 (ink)
tv = transition_vector(glyph_sample("8", 80), grid)
counts = np.bincount(tv, minlength=4)
print(f"code histogram for '8': 00={counts[0]} 01={counts[1]} "
      f"10={counts[2]} 11={counts[3]}")

# train on a few sizes per class; size variation widens the observed sets
rng = np.random.default_rng(5)
samples = []
for char in OCR_CHARS:
    for height in (70, 80, 90):
        samples.append((char, glyph_sample(char, height, rng)))
model = train(samples, grid)
print(f"\ntrained {len(model.classes)} classes on {len(samples)} samples")

rc = {c: r.restriction_count for c, r in model.classes.items()}
most = max(rc, key=rc.get)
least = min(rc, key=rc.get)
print(f"most restrictive class: {most!r} ({rc[most]} forbidden codes), "
      f"least: {least!r} ({rc[least]})")

# unseen sizes classify correctly through the elimination rules
probe_rng = np.random.default_rng(99)
wrong = []
for char in OCR_CHARS:
    probe = glyph_sample(char, 76, probe_rng)
    got = classify(probe, model)
    if got != char:
        wrong.append((char, got))
print(f"\nunseen-size probes: {len(OCR_CHARS) - len(wrong)}/{len(OCR_CHARS)} correct")
if wrong:
    print(f"  misses: {wrong}")

# violation counts are what the rules actually consume
probe = transition_vector(glyph_sample("7", 76), grid)
for char in "017":
    v = count_violations(probe, model.classes[char])
    print(f"probe '7' against class {char!r}: {v} violated positions")

# a pattern mask restricts the alphabet, as plate layouts do
digit_only = classify(glyph_sample("B", 76), model, allowed=set("0123456789"))
print(f"\n'B' forced through a digit-only mask: {digit_only!r} "
      f"(the least-violated digit, or None when too noisy)")
