"""
Template matching and plate location
====================================

Ten digit templates are rendered once and their keypoints stored in a
feature database. Image keypoints are matched against each template
through a k-d tree (best-bin-first search, distance-ratio test), then
two filters separate the wheat from the chaff: orientations must agree
within one histogram bin, and the offset vectors image_xy - template_xy
must cluster, because a true glyph match is a pure translation.
"""

import numpy as np

from alprs.locator import (
    filter_by_orientation,
    locate_plate,
    offset_density_inliers,
    pairs_from_matches,
)
from alprs.matchdb import build_template_db, match_template
from alprs.sift import extract_keypoints
from alprs.synth import render_digit_templates, render_plate_image

# build the template side: one entry per digit, keypoints plus k-d tree
templates = render_digit_templates(80)
db = build_template_db(templates)
for char in "012":
    entry = db.entries[char]
    print(f"template {char!r}: {len(entry.keypoints)} keypoints, "
          f"{entry.width}x{entry.height}")

# the image side: a rendered plate with a known answer
rng = np.random.default_rng(7)
scene = render_plate_image("KWR3519", rng)
image_kps = extract_keypoints(scene)
print(f"\nimage keypoints: {len(image_kps)}")

# match every template; each image keypoint may claim at most one match
for char, entry in db.entries.items():
    matches = match_template(entry, image_kps, template_char=char)
    pairs = pairs_from_matches(matches)
    oriented = filter_by_orientation(pairs)
    inliers = offset_density_inliers(oriented)
    print(f"digit {char}: {len(pairs):3d} matches, "
          f"{len(oriented):3d} orientation-consistent, {len(inliers):3d} inliers")

# the locator picks the best-supported digit and grows a search window
region = locate_plate(image_kps, db, image_size=(scene.width, scene.height))
x0, y0, x1, y1 = region.bbox
print(f"\nseed digit: {region.seed_char!r} with {len(region.inliers)} inliers")
print(f"translation: ({region.translation[0]:.1f}, {region.translation[1]:.1f}), "
      f"seed box: {region.seed_bbox}")
print(f"search window: ({x0}, {y0}) .. ({x1}, {y1})")

# the window must cover the whole plate text, which was rendered at y 80..160
print(f"window covers the text band: {y0 <= 80 and y1 >= 160}")
