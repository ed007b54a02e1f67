"""
Scale-space keypoints on a rendered plate
=========================================

The detector stacks Gaussian blurs, takes adjacent differences, and
keeps pixels that are extreme against all 26 scale-space neighbors.
Survivors get an orientation from a 36-bin gradient histogram and a
128-value descriptor from 4x4 spatial cells of 8 orientation bins.
"""

import numpy as np

from alprs.sift import SiftConfig, build_scale_space, detect_extrema, extract_keypoints
from alprs.synth import render_plate_image

rng = np.random.default_rng(3)
scene = render_plate_image("XQJ5087", rng)

# the scale space: each octave holds s+3 blur levels, sigma doubling per octave
cfg = SiftConfig()
ss = build_scale_space(scene, cfg)
print(f"octaves: {len(ss.octaves)}")
for octave in ss.octaves:
    h, w = octave.gaussians[0].shape
    print(f"  octave {octave.index}: {w}x{h}, {len(octave.gaussians)} blur levels, "
          f"{len(octave.dogs)} difference planes")

# raw extrema, before the contrast and edge-response gates do their work
raw = detect_extrema(ss, cfg)
print(f"scale-space extrema after gates: {len(raw)}")

# the full pipeline adds orientations and descriptors
kps = extract_keypoints(scene, cfg)
print(f"keypoints: {len(kps)} (multi-peak histograms split into several)")

sigmas = np.array([k.sigma for k in kps])
print(f"scale range: {sigmas.min():.2f} .. {sigmas.max():.2f} px")

# descriptors are unit length, clamped at 0.2 so no single cell dominates
d = kps[0].descriptor
print(f"descriptor: {d.size} values, norm {np.linalg.norm(d):.4f}, max {d.max():.3f}")

# most keypoints should sit on the glyphs, which live in the caps band
on_band = sum(1 for k in kps if 80 <= k.y <= 160)
print(f"keypoints inside the text band: {on_band}/{len(kps)}")
