"""License plate location and recognition.

The pipeline: scale-space keypoints are extracted from the input image and
matched against cached digit-template features (k-d tree, best-bin-first);
orientation agreement and an offset-space density peak reduce matches to
inliers that pin down the plate; the plate window is binarized with Otsu's
threshold, characters are clipped as connected components, and each glyph
is classified by its forbidden-transition rule sets.
"""

from .imgcore import BinaryImage, GrayImage, gaussian_blur, load_image, save_pgm
from .sift import Keypoint, SiftConfig, extract_keypoints
from .matchdb import (
    KdIndex,
    Match,
    TemplateFeatureDB,
    build_index,
    build_template_db,
    load_db,
    match_template,
    nearest_neighbor_bbf,
    save_db,
)
from .locator import (
    DensityConfig,
    LocatorConfig,
    MatchPair,
    PlateNotFoundError,
    PlateRegion,
    filter_by_orientation,
    locate_plate,
    offset_density_inliers,
)
from .segment import (
    CharBox,
    OtsuResult,
    SegmentationFailedError,
    binarize,
    clip_characters,
    normalize_character,
    otsu_threshold,
)
from .ocr import (
    ClassifierModel,
    ClassRuleSet,
    GridSpec,
    classify,
    count_violations,
    load_model,
    save_model,
    train,
    transition_vector,
)

__version__ = "0.1.0"

__all__ = [
    "BinaryImage",
    "GrayImage",
    "gaussian_blur",
    "load_image",
    "save_pgm",
    "Keypoint",
    "SiftConfig",
    "extract_keypoints",
    "KdIndex",
    "Match",
    "TemplateFeatureDB",
    "build_index",
    "build_template_db",
    "load_db",
    "match_template",
    "nearest_neighbor_bbf",
    "save_db",
    "DensityConfig",
    "LocatorConfig",
    "MatchPair",
    "PlateNotFoundError",
    "PlateRegion",
    "filter_by_orientation",
    "locate_plate",
    "offset_density_inliers",
    "CharBox",
    "OtsuResult",
    "SegmentationFailedError",
    "binarize",
    "clip_characters",
    "normalize_character",
    "otsu_threshold",
    "ClassifierModel",
    "ClassRuleSet",
    "GridSpec",
    "classify",
    "count_violations",
    "load_model",
    "save_model",
    "train",
    "transition_vector",
]
