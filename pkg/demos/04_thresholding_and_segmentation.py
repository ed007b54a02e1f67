"""
Otsu thresholding and character extraction
==========================================

Inside the located window the image is binarized at the histogram cut
that maximizes between-class variance. Characters are the minority
polarity; connected components that are character-sized relative to the
seed digit box and lie on its row survive, everything else (screws,
frame, dirt) is dropped.
"""

import numpy as np

from alprs.segment import binarize, clip_characters, normalize_character, otsu_threshold
from alprs.synth import render_plate_image

rng = np.random.default_rng(12)
scene = render_plate_image("HDN6402", rng)

# a window around the plate, as the locator would produce
window = scene.crop(20, 40, 620, 200)

# the histogram is strongly bimodal: dark ink against light plate
res = otsu_threshold(window)
print(f"threshold: {res.threshold:.4f} ({round(res.threshold * 256)}/256)")
print(f"separability: {res.separability:.3f} (1.0 means two clean classes)")

# binarize with automatic polarity: the minority class is the foreground
binary = binarize(window, res.threshold, polarity="auto")
fg = int(binary.pixels.sum())
print(f"foreground pixels: {fg} of {binary.pixels.size} "
      f"({100 * fg / binary.pixels.size:.1f}%)")

# a seed box the size of one digit anchors the size and row gates
seed_bbox = (258, 36, 310, 120)
boxes = clip_characters(binary, seed_bbox)
print(f"\naccepted components: {len(boxes)}, left to right:")
for b in boxes:
    x0, y0, x1, y1 = b.bbox
    print(f"  x {x0:3d}..{x1:3d}  y {y0:3d}..{y1:3d}  {x1 - x0:2d}x{y1 - y0:2d}")

# screw holes are far smaller than a character, so the gates discard them
rng2 = np.random.default_rng(12)
clean = render_plate_image("HDN6402", rng2, screw_holes=False)
clean_window = clean.crop(20, 40, 620, 200)
clean_bin = binarize(clean_window, otsu_threshold(clean_window).threshold)
clean_boxes = clip_characters(clean_bin, seed_bbox)
print(f"\nwith screw holes: {len(boxes)} boxes, without: {len(clean_boxes)} boxes")

# every accepted glyph is resampled onto the classifier grid
grid_w, grid_h = 65, 60
norm = normalize_character(boxes[0], grid_w, grid_h)
print(f"\nnormalized first glyph: {norm.width}x{norm.height}, "
      f"ink fraction {norm.pixels.mean():.3f}")
