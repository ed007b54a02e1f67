"""
Grayscale images, PGM round-trips, and Gaussian smoothing
=========================================================

Everything downstream works on float arrays in [0, 1]. This script
renders a plate, saves it as a binary PGM, loads it back, and walks the
smoothing and resampling steps the keypoint detector is built from.
"""

from pathlib import Path

import numpy as np

from alprs.imgcore import (
    GrayImage,
    downsample_half,
    gaussian_blur,
    gaussian_kernel,
    load_image,
    save_pgm,
    subtract,
)
from alprs.synth import render_plate_image

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

# render a synthetic scene: dark surround, light plate, dark glyphs
rng = np.random.default_rng(0)
scene = render_plate_image("ABC1234", rng)
print(f"scene: {scene.width}x{scene.height}, "
      f"intensity range [{scene.pixels.min():.3f}, {scene.pixels.max():.3f}]")

# a PGM file stores 8-bit samples; one quantization step of error is expected
save_pgm(scene, out / "scene.pgm")
back = load_image(out / "scene.pgm")
err = np.abs(back.pixels - scene.pixels).max()
print(f"PGM round-trip max error: {err:.6f} (half a gray level is {0.5 / 255:.6f})")

# Gaussian kernels are cut at three sigma and normalized to sum 1
for sigma in (0.8, 1.6, 3.2):
    k = gaussian_kernel(sigma)
    print(f"sigma {sigma}: kernel length {k.size}, sum {k.sum():.6f}")

# blurring is separable: rows then columns with the same 1-d kernel
blurred = gaussian_blur(back, 2.0)
save_pgm(blurred, out / "scene_blur.pgm")
print(f"blur keeps the range: [{blurred.pixels.min():.3f}, {blurred.pixels.max():.3f}]")

# the difference of two blurs is a band-pass plane; glyph edges light up
wide = gaussian_blur(back, 3.2)
dog = subtract(wide, blurred)
print(f"difference-of-Gaussians extremes: {dog.min():+.4f} .. {dog.max():+.4f}")

# each pyramid octave halves the resolution by dropping every other pixel
half = downsample_half(blurred)
print(f"downsampled: {half.width}x{half.height}")

# crop is half-open and clips to the image, like numpy slicing
plate = back.crop(20, 40, 620, 200)
save_pgm(plate, out / "plate_crop.pgm")
print(f"plate crop: {plate.width}x{plate.height}, wrote 3 files to {out}")
