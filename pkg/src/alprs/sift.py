"""Scale-space keypoint detection and 128-value gradient descriptors.

Octaves of progressively blurred images are built from the input; adjacent
levels are subtracted into difference-of-Gaussian planes, whose strict
26-neighbor extrema become keypoint candidates. Each candidate is assigned
one or more dominant gradient orientations and a 4x4x8 histogram descriptor
sampled from a rotated window around it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgcore import GrayImage, blur_array

TWO_PI = 2.0 * math.pi
ORI_BINS = 36
ORI_PEAK_RATIO = 0.8
ORI_SIGMA_FACTOR = 1.5
DESC_WIDTH = 4          # spatial cells per side
DESC_ORI_BINS = 8
DESC_WINDOW = 16        # samples per side
DESC_SIGMA = 8.0        # Gaussian weight over the sample window
DESC_CLAMP = 0.2
MIN_IMAGE_SIDE = 16


def wrap_angle(theta: float) -> float:
    """Map an angle into (-pi, pi]."""
    r = (theta + math.pi) % TWO_PI - math.pi
    if r == -math.pi:
        return math.pi
    return r


@dataclass
class SiftConfig:
    s: int = 3
    num_octaves: int | None = None      # None: go until min dimension < 16
    sigma0: float = 1.6
    contrast_threshold: float = 0.03
    edge_ratio_threshold: float = 10.0
    refine_subpixel: bool = False       # optional quadratic extremum refinement

    def __post_init__(self):
        if self.s < 1:
            raise ValueError("s must be >= 1")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.contrast_threshold <= 0 or self.edge_ratio_threshold <= 0:
            raise ValueError("thresholds must be positive")

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.s)


@dataclass
class Octave:
    index: int
    gaussians: list[np.ndarray]     # s+3 planes
    dogs: list[np.ndarray]          # s+2 planes, dogs[i] = gaussians[i+1] - gaussians[i]
    sigmas: list[float]             # within-octave scale sigma0 * k**i


@dataclass
class ScaleSpace:
    octaves: list[Octave]
    s: int
    sigma0: float

    @property
    def k(self) -> float:
        return 2.0 ** (1.0 / self.s)


@dataclass(eq=False)
class OrientedCandidate:
    """Extremum with an assigned orientation, still in octave coordinates."""

    octave: int
    level: int
    x: float
    y: float
    sigma: float        # absolute scale in input-image units
    theta: float


@dataclass(eq=False)
class Keypoint:
    """Position (input-image coordinates), scale, orientation, descriptor."""

    x: float
    y: float
    sigma: float
    theta: float
    descriptor: np.ndarray      # 128 float32 values, unit L2 norm


def build_scale_space(img: GrayImage, cfg: SiftConfig) -> ScaleSpace:
    """Construct the Gaussian and difference-of-Gaussian pyramids.

    Octave 0 starts from the input pre-blurred to sigma0; each following
    octave is seeded with every second pixel of the previous octave's
    level at scale 2*sigma0.
    """
    if img.width < MIN_IMAGE_SIDE or img.height < MIN_IMAGE_SIDE:
        raise ValueError(
            f"image {img.width}x{img.height} too small for one octave "
            f"(minimum {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE})"
        )
    k = cfg.k
    levels = cfg.s + 3
    base = blur_array(img.pixels, cfg.sigma0)
    octaves = []
    o = 0
    while True:
        gaussians = [base]
        sigmas = [cfg.sigma0]
        for i in range(1, levels):
            target = cfg.sigma0 * k**i
            previous = cfg.sigma0 * k ** (i - 1)
            inc = math.sqrt(target * target - previous * previous)
            gaussians.append(blur_array(gaussians[-1], inc))
            sigmas.append(target)
        dogs = [gaussians[i + 1] - gaussians[i] for i in range(levels - 1)]
        octaves.append(Octave(o, gaussians, dogs, sigmas))
        o += 1
        if cfg.num_octaves is not None and o >= cfg.num_octaves:
            break
        seed = gaussians[cfg.s]     # scale 2*sigma0
        if min(seed.shape) // 2 < MIN_IMAGE_SIDE:
            break
        base = seed[::2, ::2].copy()
    return ScaleSpace(octaves, cfg.s, cfg.sigma0)


def _edge_response_ok(plane: np.ndarray, y: int, x: int, edge_ratio: float) -> bool:
    """Reject extrema on straight edges via the principal-curvature ratio."""
    c = plane[y, x]
    dxx = plane[y, x + 1] + plane[y, x - 1] - 2.0 * c
    dyy = plane[y + 1, x] + plane[y - 1, x] - 2.0 * c
    dxy = (
        plane[y + 1, x + 1]
        - plane[y + 1, x - 1]
        - plane[y - 1, x + 1]
        + plane[y - 1, x - 1]
    ) / 4.0
    trace = dxx + dyy
    det = dxx * dyy - dxy * dxy
    if det <= 0:
        return False
    r = edge_ratio
    return trace * trace * r < (r + 1.0) * (r + 1.0) * det


def detect_extrema(ss: ScaleSpace, cfg: SiftConfig) -> list[tuple[int, int, int, int]]:
    """Strict 26-neighbor extrema of the DoG planes as (octave, level, x, y).

    Only interior levels and interior pixels are eligible; candidates whose
    |D| falls below the contrast threshold or that fail the edge-ratio test
    are discarded.
    """
    footprint = np.ones((3, 3, 3), dtype=bool)
    footprint[1, 1, 1] = False
    out = []
    for octave in ss.octaves:
        vol = np.stack(octave.dogs)
        nb_max = ndimage.maximum_filter(
            vol, footprint=footprint, mode="constant", cval=-np.inf
        )
        nb_min = ndimage.minimum_filter(
            vol, footprint=footprint, mode="constant", cval=np.inf
        )
        mask = (vol > nb_max) | (vol < nb_min)
        mask &= np.abs(vol) >= cfg.contrast_threshold
        mask[0, :, :] = mask[-1, :, :] = False
        mask[:, 0, :] = mask[:, -1, :] = False
        mask[:, :, 0] = mask[:, :, -1] = False
        for level, y, x in np.argwhere(mask):
            if _edge_response_ok(octave.dogs[level], y, x, cfg.edge_ratio_threshold):
                out.append((octave.index, int(level), int(x), int(y)))
    return out


def _refine_extremum(dogs: list[np.ndarray], level: int, y: int, x: int):
    """One quadratic-fit step in (x, y, level); offsets clamped to +-0.5."""
    prev_p, cur, next_p = dogs[level - 1], dogs[level], dogs[level + 1]
    g = np.array(
        [
            (cur[y, x + 1] - cur[y, x - 1]) / 2.0,
            (cur[y + 1, x] - cur[y - 1, x]) / 2.0,
            (next_p[y, x] - prev_p[y, x]) / 2.0,
        ]
    )
    dxx = cur[y, x + 1] + cur[y, x - 1] - 2.0 * cur[y, x]
    dyy = cur[y + 1, x] + cur[y - 1, x] - 2.0 * cur[y, x]
    dss = next_p[y, x] + prev_p[y, x] - 2.0 * cur[y, x]
    dxy = (
        cur[y + 1, x + 1] - cur[y + 1, x - 1] - cur[y - 1, x + 1] + cur[y - 1, x - 1]
    ) / 4.0
    dxs = (next_p[y, x + 1] - next_p[y, x - 1] - prev_p[y, x + 1] + prev_p[y, x - 1]) / 4.0
    dys = (next_p[y + 1, x] - next_p[y - 1, x] - prev_p[y + 1, x] + prev_p[y - 1, x]) / 4.0
    hess = np.array([[dxx, dxy, dxs], [dxy, dyy, dys], [dxs, dys, dss]])
    try:
        offset = -np.linalg.solve(hess, g)
    except np.linalg.LinAlgError:
        return 0.0, 0.0, 0.0
    return tuple(np.clip(offset, -0.5, 0.5))


def assign_orientations(
    ss: ScaleSpace, candidates: list[tuple[int, int, int, int]], cfg: SiftConfig
) -> list[OrientedCandidate]:
    """Attach dominant gradient orientations to extremum candidates.

    Gradients are taken from the Gaussian level matching the candidate's
    scale; a 36-bin histogram over a Gaussian-weighted circular window
    (sigma = 1.5 * scale) is peak-picked, and each peak at >= 0.8 of the
    maximum spawns one oriented copy with a parabolic bin refinement.
    """
    bin_width = TWO_PI / ORI_BINS
    out = []
    for octave_i, level, x, y in candidates:
        octave = ss.octaves[octave_i]
        plane = octave.gaussians[level]
        h, w = plane.shape
        scale = octave.sigmas[level]
        dx_off = dy_off = dl_off = 0.0
        if cfg.refine_subpixel:
            dx_off, dy_off, dl_off = _refine_extremum(octave.dogs, level, y, x)
        sigma_w = ORI_SIGMA_FACTOR * scale
        radius = max(1, int(round(3.0 * sigma_w)))
        y0, y1 = max(1, y - radius), min(h - 2, y + radius)
        x0, x1 = max(1, x - radius), min(w - 2, x + radius)
        if y1 < y0 or x1 < x0:
            continue
        win = plane[y0 - 1 : y1 + 2, x0 - 1 : x1 + 2]
        gx = win[1:-1, 2:] - win[1:-1, :-2]
        gy = win[2:, 1:-1] - win[:-2, 1:-1]
        yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
        d2 = (yy - y) ** 2 + (xx - x) ** 2
        inside = d2 <= radius * radius
        mag = np.hypot(gx, gy)
        weight = np.exp(-d2 / (2.0 * sigma_w * sigma_w)) * mag * inside
        theta = np.arctan2(gy, gx)
        bins = np.round((theta + math.pi) / bin_width).astype(int) % ORI_BINS
        hist = np.bincount(bins.ravel(), weights=weight.ravel(), minlength=ORI_BINS)
        peak_val = hist.max()
        if peak_val <= 0.0:
            continue
        left = np.roll(hist, 1)
        right = np.roll(hist, -1)
        peaks = np.nonzero((hist > left) & (hist > right) & (hist >= ORI_PEAK_RATIO * peak_val))[0]
        if peaks.size == 0:
            peaks = np.array([int(np.argmax(hist))])
        abs_sigma = ss.sigma0 * ss.k ** (level + dl_off) * 2.0**octave_i
        for b in peaks:
            denom = hist[(b - 1) % ORI_BINS] - 2.0 * hist[b] + hist[(b + 1) % ORI_BINS]
            if abs(denom) > 1e-12:
                shift = 0.5 * (hist[(b - 1) % ORI_BINS] - hist[(b + 1) % ORI_BINS]) / denom
            else:
                shift = 0.0
            angle = wrap_angle(-math.pi + (b + shift) * bin_width)
            out.append(
                OrientedCandidate(
                    octave=octave_i,
                    level=level,
                    x=x + dx_off,
                    y=y + dy_off,
                    sigma=abs_sigma,
                    theta=angle,
                )
            )
    return out


def _gradient_planes(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences L(x+1)-L(x-1), L(y+1)-L(y-1); zero on borders."""
    gx = np.zeros_like(plane)
    gy = np.zeros_like(plane)
    gx[:, 1:-1] = plane[:, 2:] - plane[:, :-2]
    gy[1:-1, :] = plane[2:, :] - plane[:-2, :]
    return gx, gy


def _bilinear(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx = xs - x0
    fy = ys - y0
    return (
        arr[y0, x0] * (1 - fy) * (1 - fx)
        + arr[y0, x0 + 1] * (1 - fy) * fx
        + arr[y0 + 1, x0] * fy * (1 - fx)
        + arr[y0 + 1, x0 + 1] * fy * fx
    )


def compute_descriptors(
    ss: ScaleSpace, oriented: list[OrientedCandidate]
) -> list[Keypoint]:
    """4x4 spatial cells x 8 orientation bins from a rotated 16x16 window.

    Samples whose window leaves the image drop the keypoint. The 128-vector
    is L2-normalized, clamped at 0.2, and renormalized.
    """
    half = DESC_WIDTH / 2.0             # cells from center to window edge
    cell = DESC_WINDOW // DESC_WIDTH    # samples per cell side
    offs = np.arange(DESC_WINDOW) - (DESC_WINDOW - 1) / 2.0
    u, v = np.meshgrid(offs, offs)      # u: x offset, v: y offset
    u = u.ravel()
    v = v.ravel()
    sample_weight = np.exp(-(u * u + v * v) / (2.0 * DESC_SIGMA * DESC_SIGMA))
    ori_bin_width = TWO_PI / DESC_ORI_BINS
    grad_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}

    out = []
    for oc in oriented:
        octave = ss.octaves[oc.octave]
        plane = octave.gaussians[oc.level]
        h, w = plane.shape
        cos_t = math.cos(oc.theta)
        sin_t = math.sin(oc.theta)
        px = oc.x + u * cos_t - v * sin_t
        py = oc.y + u * sin_t + v * cos_t
        if px.min() < 1 or py.min() < 1 or px.max() >= w - 2 or py.max() >= h - 2:
            continue
        key = (oc.octave, oc.level)
        if key not in grad_cache:
            grad_cache[key] = _gradient_planes(plane)
        gx_plane, gy_plane = grad_cache[key]
        gx = _bilinear(gx_plane, py, px)
        gy = _bilinear(gy_plane, py, px)
        mag = np.hypot(gx, gy) * sample_weight
        ang = (np.arctan2(gy, gx) - oc.theta) % TWO_PI

        rbin = v / cell + half - 0.5    # in [-0.375, 3.375] for 16x16 / 4x4
        cbin = u / cell + half - 0.5
        obin = ang / ori_bin_width
        hist = np.zeros((DESC_WIDTH, DESC_WIDTH, DESC_ORI_BINS))
        r0 = np.floor(rbin).astype(int)
        c0 = np.floor(cbin).astype(int)
        o0 = np.floor(obin).astype(int)
        fr = rbin - r0
        fc = cbin - c0
        fo = obin - o0
        for dr in (0, 1):
            rr = r0 + dr
            wr = fr if dr else 1.0 - fr
            okr = (rr >= 0) & (rr < DESC_WIDTH)
            for dc in (0, 1):
                cc = c0 + dc
                wc = fc if dc else 1.0 - fc
                okc = okr & (cc >= 0) & (cc < DESC_WIDTH)
                for do in (0, 1):
                    oo = (o0 + do) % DESC_ORI_BINS
                    wo = fo if do else 1.0 - fo
                    contrib = mag * wr * wc * wo
                    sel = okc & (contrib != 0.0)
                    np.add.at(hist, (rr[sel], cc[sel], oo[sel]), contrib[sel])
        vec = hist.ravel()
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            continue
        vec = np.minimum(vec / norm, DESC_CLAMP)
        norm = np.linalg.norm(vec)
        if norm < 1e-12:
            continue
        vec = (vec / norm).astype(np.float32)
        factor = 2.0**oc.octave
        out.append(
            Keypoint(
                x=oc.x * factor,
                y=oc.y * factor,
                sigma=oc.sigma,
                theta=oc.theta,
                descriptor=vec,
            )
        )
    return out


def extract_keypoints(img: GrayImage, cfg: SiftConfig | None = None) -> list[Keypoint]:
    """Full detection pipeline: scale space, extrema, orientations, descriptors."""
    if cfg is None:
        cfg = SiftConfig()
    ss = build_scale_space(img, cfg)
    candidates = detect_extrema(ss, cfg)
    oriented = assign_orientations(ss, candidates, cfg)
    return compute_descriptors(ss, oriented)
