"""Inlier selection and plate localization from template matches.

Raw matches are reduced in two stages: pairs whose gradient orientations
disagree by more than 10 degrees are dropped outright, then each survivor
is mapped to the offset plane (image position minus template position)
where a correct match set piles up in one tight cluster. The densest
cluster under a square-wave kernel supplies the inliers; three of them
suffice to seed a plate region, with a pooled all-templates fallback when
no single template reaches three.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .matchdb import DIGITS, Match, TemplateFeatureDB, match_template
from .sift import Keypoint, wrap_angle

# Rotations beyond 10 degrees are not expected between template and image,
# so orientation disagreement above 2*pi/36 marks an outlier. Fixed by the
# method, not configurable.
ORIENTATION_TOLERANCE = 2.0 * math.pi / 36.0


class PlateNotFoundError(Exception):
    """No template produced any usable match in the image."""


@dataclass(frozen=True)
class MatchPair:
    """Coordinates and orientations of one template-image keypoint pair."""

    template_char: str
    template_xy: tuple[float, float]
    template_theta: float
    image_xy: tuple[float, float]
    image_theta: float

    def offset(self) -> tuple[float, float]:
        return (
            self.image_xy[0] - self.template_xy[0],
            self.image_xy[1] - self.template_xy[1],
        )


@dataclass
class DensityConfig:
    """Square-wave (h-ball indicator) kernel bandwidth, in pixels."""

    h: float = 10.0

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("bandwidth h must be positive")


@dataclass
class LocatorConfig:
    tau_match: float = 0.35
    density: DensityConfig = field(default_factory=DensityConfig)
    min_inliers: int = 3
    window_w_ratio: float = 9.0     # plate window, multiples of the seed box
    window_h_ratio: float = 1.6
    max_checks: int = 200


@dataclass
class PlateRegion:
    """Axis-aligned plate window plus the seed character evidence."""

    bbox: tuple[int, int, int, int]         # half-open, image coords
    seed_char: str
    seed_bbox: tuple[int, int, int, int]    # template box shifted into the image
    translation: tuple[float, float]
    inliers: list[MatchPair]
    fallback: bool = False


def pairs_from_matches(matches: list[Match]) -> list[MatchPair]:
    """Project Match objects down to the coordinate/orientation pairs."""
    return [
        MatchPair(
            template_char=m.template_char,
            template_xy=(m.template_kp.x, m.template_kp.y),
            template_theta=m.template_kp.theta,
            image_xy=(m.image_kp.x, m.image_kp.y),
            image_theta=m.image_kp.theta,
        )
        for m in matches
    ]


def filter_by_orientation(pairs: list[MatchPair]) -> list[MatchPair]:
    """Keep pairs whose orientations agree within 2*pi/36, circularly."""
    return [
        p
        for p in pairs
        if abs(wrap_angle(p.template_theta - p.image_theta)) <= ORIENTATION_TOLERANCE
    ]


def _density_cluster(
    pairs: list[MatchPair], cfg: DensityConfig
) -> tuple[list[MatchPair], int]:
    """Densest offset cluster: (member pairs, anchor pair index)."""
    offsets = np.array([p.offset() for p in pairs])
    diff = offsets[:, None, :] - offsets[None, :, :]
    dist2 = (diff * diff).sum(axis=2)
    within = dist2 <= cfg.h * cfg.h
    density = within.sum(axis=1)
    anchor = int(np.argmax(density))        # ties resolve to the lowest index
    members = [p for p, ok in zip(pairs, within[anchor]) if ok]
    return members, anchor


def offset_density_inliers(
    pairs: list[MatchPair], cfg: DensityConfig | None = None
) -> list[MatchPair]:
    """Inliers by offset-space density under the square-wave kernel.

    Each pair maps to the offset point image_xy - template_xy; a point's
    density is the count of offset points within the h-ball around it. All
    pairs within h of the maximal-density point are returned.
    """
    if cfg is None:
        cfg = DensityConfig()
    if not pairs:
        return []
    members, _ = _density_cluster(pairs, cfg)
    return members


def locate_plate(
    image_kps: list[Keypoint],
    db: TemplateFeatureDB,
    cfg: LocatorConfig | None = None,
    image_size: tuple[int, int] | None = None,
) -> PlateRegion:
    """Search all digit templates and emit the plate region.

    Per template: match, orientation-filter, density-filter. The template
    with the most inliers among those reaching min_inliers wins (ties go to
    the lower digit). When none reaches min_inliers, the orientation
    survivors of all ten templates are pooled into one density pass and the
    densest region is used, flagged as fallback.

    image_size (width, height) clips the plate window when given.
    """
    if cfg is None:
        cfg = LocatorConfig()
    if not image_kps:
        raise PlateNotFoundError("no keypoints in the input image")

    survivors: dict[str, list[MatchPair]] = {}
    best_char = None
    best_inliers: list[MatchPair] = []
    total_matches = 0
    for char in DIGITS:
        entry = db.entries[char]
        matches = match_template(
            entry, image_kps, cfg.tau_match, cfg.max_checks, template_char=char
        )
        total_matches += len(matches)
        surv = filter_by_orientation(pairs_from_matches(matches))
        survivors[char] = surv
        if not surv:
            continue
        inliers = offset_density_inliers(surv, cfg.density)
        if len(inliers) >= cfg.min_inliers and len(inliers) > len(best_inliers):
            best_char = char
            best_inliers = inliers

    if total_matches == 0:
        raise PlateNotFoundError("no template matched any image keypoint")

    fallback = best_char is None
    if fallback:
        pooled = [p for char in DIGITS for p in survivors[char]]
        if not pooled:
            raise PlateNotFoundError("all matches rejected by the orientation filter")
        best_inliers, anchor = _density_cluster(pooled, cfg.density)
        best_char = pooled[anchor].template_char

    offsets = np.array([p.offset() for p in best_inliers])
    tx = float(np.median(offsets[:, 0]))
    ty = float(np.median(offsets[:, 1]))
    entry = db.entries[best_char]
    sx0 = int(round(tx))
    sy0 = int(round(ty))
    seed_bbox = (sx0, sy0, sx0 + entry.width, sy0 + entry.height)

    cx = tx + entry.width / 2.0
    cy = ty + entry.height / 2.0
    half_w = cfg.window_w_ratio * entry.width / 2.0
    half_h = cfg.window_h_ratio * entry.height / 2.0
    x0 = int(math.floor(cx - half_w))
    y0 = int(math.floor(cy - half_h))
    x1 = int(math.ceil(cx + half_w))
    y1 = int(math.ceil(cy + half_h))
    if image_size is not None:
        w, h = image_size
        x0, y0 = max(0, x0), max(0, y0)
        x1, y1 = min(w, x1), min(h, y1)
        if x1 <= x0 or y1 <= y0:
            raise PlateNotFoundError("plate window fell outside the image")
    return PlateRegion(
        bbox=(x0, y0, x1, y1),
        seed_char=best_char,
        seed_bbox=seed_bbox,
        translation=(tx, ty),
        inliers=best_inliers,
        fallback=fallback,
    )
