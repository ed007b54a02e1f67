"""Command-line pipeline: template DB building, OCR training, recognition.

Subcommands: build-templates, train-ocr, recognize, evaluate. Recognition
emits one machine-readable line per image on stdout,

    path<TAB>status<TAB>plate<TAB>sift_match_ms<TAB>segment_ms<TAB>ocr_ms

with human narration on stderr. Exit codes: 0 success or partial read,
1 plate not found / segmentation failed, 2 usage or data errors.

The env var ALPRS_CONFIG may point to a `key = value` file overriding
pipeline defaults (see CONFIG_KEYS).
"""

from __future__ import annotations

import argparse
import os
import string
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .imgcore import GrayImage, PnmError, load_image
from .locator import (
    DensityConfig,
    LocatorConfig,
    PlateNotFoundError,
    locate_plate,
)
from .matchdb import (
    DIGITS,
    TemplateDbError,
    build_template_db,
    load_db,
    save_db,
)
from .ocr import (
    ClassifierModel,
    GridSpec,
    ModelFormatError,
    classify,
    load_model,
    save_model,
    train,
)
from .segment import (
    DegenerateHistogramError,
    SegmentationFailedError,
    binarize,
    clip_characters,
    normalize_character,
    otsu_threshold,
)
from .sift import SiftConfig, extract_keypoints

STATUS_OK = "OK"
STATUS_PARTIAL = "PARTIAL"
STATUS_PLATE_NOT_FOUND = "PLATE_NOT_FOUND"
STATUS_SEGMENTATION_FAILED = "SEGMENTATION_FAILED"
STATUSES = (
    STATUS_OK,
    STATUS_PARTIAL,
    STATUS_PLATE_NOT_FOUND,
    STATUS_SEGMENTATION_FAILED,
)
NOISE_MARK = "?"

EXIT_OK = 0
EXIT_NOT_FOUND = 1
EXIT_USAGE = 2

OCR_LABELS = DIGITS + string.ascii_uppercase


class ConfigError(Exception):
    pass


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline, flattened for the config file."""

    sift: SiftConfig = field(default_factory=SiftConfig)
    locator: LocatorConfig = field(default_factory=LocatorConfig)
    grid: GridSpec = field(default_factory=lambda: GridSpec(65, 60, 2))
    noise_fraction: float = 0.30
    plate_pattern: str | None = None
    polarity: str = "auto"
    char_height_range: tuple[float, float] = (0.6, 1.4)
    char_width_range: tuple[float, float] = (0.3, 1.6)
    min_row_overlap: float = 0.5
    report_timings: bool = True


def _parse_bool(value: str) -> bool:
    low = value.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {value!r}")


def _parse_pattern(value: str) -> str | None:
    if value == "":
        return None
    bad = set(value) - set("LN")
    if bad:
        raise ConfigError("plate_pattern may only contain L (letter) and N (digit)")
    return value


# config-file key -> (section, attribute, parser). Section "" targets the
# PipelineConfig itself.
CONFIG_KEYS = {
    "sigma0": ("sift", "sigma0", float),
    "scales_per_octave": ("sift", "s", int),
    "contrast_threshold": ("sift", "contrast_threshold", float),
    "edge_ratio_threshold": ("sift", "edge_ratio_threshold", float),
    "tau_match": ("locator", "tau_match", float),
    "density_h": ("locator", "density_h", float),
    "min_inliers": ("locator", "min_inliers", int),
    "window_w_ratio": ("locator", "window_w_ratio", float),
    "window_h_ratio": ("locator", "window_h_ratio", float),
    "max_checks": ("locator", "max_checks", int),
    "grid_w": ("grid", "grid_w", int),
    "grid_h": ("grid", "grid_h", int),
    "order": ("grid", "order", int),
    "noise_fraction": ("", "noise_fraction", float),
    "plate_pattern": ("", "plate_pattern", _parse_pattern),
    "polarity": ("", "polarity", str),
    "char_height_min": ("", "char_height_min", float),
    "char_height_max": ("", "char_height_max", float),
    "char_width_min": ("", "char_width_min", float),
    "char_width_max": ("", "char_width_max", float),
    "min_row_overlap": ("", "min_row_overlap", float),
    "report_timings": ("", "report_timings", _parse_bool),
}


def parse_config_text(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    cfg = base if base is not None else PipelineConfig()
    sift_kw: dict = {}
    locator_kw: dict = {}
    grid_kw: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected `key = value`")
        if key not in CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        section, attr, parse = CONFIG_KEYS[key]
        try:
            parsed = parse(value)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
        if section == "sift":
            sift_kw[attr] = parsed
        elif section == "locator":
            locator_kw[attr] = parsed
        elif section == "grid":
            grid_kw[attr] = parsed
        else:
            if attr == "char_height_min":
                cfg.char_height_range = (parsed, cfg.char_height_range[1])
            elif attr == "char_height_max":
                cfg.char_height_range = (cfg.char_height_range[0], parsed)
            elif attr == "char_width_min":
                cfg.char_width_range = (parsed, cfg.char_width_range[1])
            elif attr == "char_width_max":
                cfg.char_width_range = (cfg.char_width_range[0], parsed)
            else:
                setattr(cfg, attr, parsed)
    try:
        if sift_kw:
            cfg.sift = replace(cfg.sift, **sift_kw)
        if locator_kw:
            h = locator_kw.pop("density_h", None)
            cfg.locator = replace(cfg.locator, **locator_kw)
            if h is not None:
                cfg.locator.density = DensityConfig(h=h)
        if grid_kw:
            cfg.grid = replace(cfg.grid, **grid_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_pipeline_config(env: dict | None = None) -> PipelineConfig:
    """Defaults, overridden by the file named in ALPRS_CONFIG when set."""
    env = os.environ if env is None else env
    path = env.get("ALPRS_CONFIG")
    if not path:
        return PipelineConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


@dataclass
class StageTimings:
    sift_match_ms: float = 0.0
    segment_ms: float = 0.0
    ocr_ms: float = 0.0

    def columns(self) -> list[str]:
        return [
            f"{self.sift_match_ms:.3f}",
            f"{self.segment_ms:.3f}",
            f"{self.ocr_ms:.3f}",
        ]


@dataclass
class RecognitionReport:
    path: str
    status: str
    plate: str                      # one char per accepted box, ? for noise
    boxes: list[tuple[int, int, int, int]] = field(default_factory=list)
    timings: StageTimings = field(default_factory=StageTimings)

    def to_line(self) -> str:
        plate = self.plate if self.plate else "-"
        return "\t".join([self.path, self.status, plate] + self.timings.columns())

    @classmethod
    def from_line(cls, line: str) -> "RecognitionReport":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 6:
            raise ValueError(f"report line has {len(parts)} fields, expected 6")
        path, status, plate, t1, t2, t3 = parts
        if status not in STATUSES:
            raise ValueError(f"unknown status {status!r}")
        return cls(
            path=path,
            status=status,
            plate="" if plate == "-" else plate,
            timings=StageTimings(float(t1), float(t2), float(t3)),
        )


def _pattern_classes(pattern: str | None, position: int) -> set[str] | None:
    if pattern is None or position >= len(pattern):
        return None
    return set(string.ascii_uppercase) if pattern[position] == "L" else set(DIGITS)


def recognize_image(
    img: GrayImage,
    db,
    model: ClassifierModel,
    cfg: PipelineConfig,
    path: str = "-",
) -> RecognitionReport:
    """Full pipeline on one loaded image; never raises on pipeline failure."""
    timer = time.perf_counter
    t0 = timer()
    kps = extract_keypoints(img, cfg.sift)
    try:
        region = locate_plate(kps, db, cfg.locator, image_size=(img.width, img.height))
    except PlateNotFoundError:
        ms = (timer() - t0) * 1e3
        timings = StageTimings(ms if cfg.report_timings else 0.0, 0.0, 0.0)
        return RecognitionReport(path, STATUS_PLATE_NOT_FOUND, "", timings=timings)
    t1 = timer()

    x0, y0, _, _ = region.bbox
    window = img.crop(*region.bbox)
    seed_local = (
        region.seed_bbox[0] - x0,
        region.seed_bbox[1] - y0,
        region.seed_bbox[2] - x0,
        region.seed_bbox[3] - y0,
    )
    try:
        otsu = otsu_threshold(window)
        mask = binarize(window, otsu.threshold, cfg.polarity)
        boxes = clip_characters(
            mask,
            seed_local,
            height_range=cfg.char_height_range,
            width_range=cfg.char_width_range,
            min_row_overlap=cfg.min_row_overlap,
        )
    except (DegenerateHistogramError, SegmentationFailedError):
        t2 = timer()
        timings = (
            StageTimings((t1 - t0) * 1e3, (t2 - t1) * 1e3, 0.0)
            if cfg.report_timings
            else StageTimings()
        )
        return RecognitionReport(path, STATUS_SEGMENTATION_FAILED, "", timings=timings)
    t2 = timer()

    grid = model.grid
    labels = []
    for i, box in enumerate(boxes):
        allowed = _pattern_classes(cfg.plate_pattern, i)
        label = classify(normalize_character(box, grid.grid_w, grid.grid_h), model, allowed)
        labels.append(NOISE_MARK if label is None else label)
    t3 = timer()

    status = STATUS_PARTIAL if NOISE_MARK in labels else STATUS_OK
    timings = (
        StageTimings((t1 - t0) * 1e3, (t2 - t1) * 1e3, (t3 - t2) * 1e3)
        if cfg.report_timings
        else StageTimings()
    )
    image_boxes = [
        (b.bbox[0] + x0, b.bbox[1] + y0, b.bbox[2] + x0, b.bbox[3] + y0) for b in boxes
    ]
    return RecognitionReport(path, status, "".join(labels), image_boxes, timings)


def recognize_file(path, db, model, cfg: PipelineConfig) -> RecognitionReport:
    return recognize_image(load_image(path), db, model, cfg, path=str(path))


def _fail(message: str) -> int:
    print(f"alprs: {message}", file=sys.stderr)
    return EXIT_USAGE


def cmd_build_templates(template_dir, out_path, cfg: PipelineConfig) -> int:
    template_dir = Path(template_dir)
    missing = [f"{c}.pgm" for c in DIGITS if not (template_dir / f"{c}.pgm").is_file()]
    if missing:
        return _fail(f"missing digit template(s): {', '.join(missing)}")
    templates = {}
    for char in DIGITS:
        path = template_dir / f"{char}.pgm"
        try:
            templates[char] = load_image(path)
        except (PnmError, OSError) as exc:
            return _fail(f"cannot read {path}: {exc}")
    db = build_template_db(templates, cfg.sift)
    save_db(db, out_path)
    for char in DIGITS:
        print(f"{char}\t{len(db.entries[char].keypoints)}")
    print(f"wrote template DB: {out_path}", file=sys.stderr)
    return EXIT_OK


def _binarized_grid_sample(path, grid: GridSpec):
    img = load_image(path)
    otsu = otsu_threshold(img)
    mask = binarize(img, otsu.threshold, "auto")
    return normalize_character(mask, grid.grid_w, grid.grid_h)


def cmd_train_ocr(sample_dir, out_path, cfg: PipelineConfig) -> int:
    sample_dir = Path(sample_dir)
    samples = []
    for label in OCR_LABELS:
        sub = sample_dir / label
        files = sorted(sub.glob("*.pgm")) if sub.is_dir() else []
        if not files:
            return _fail(f"no training samples for class {label!r} in {sub}")
        for path in files:
            try:
                samples.append((label, _binarized_grid_sample(path, cfg.grid)))
            except (PnmError, OSError, DegenerateHistogramError, ValueError) as exc:
                return _fail(f"cannot use sample {path}: {exc}")
    model = train(samples, cfg.grid, noise_fraction=cfg.noise_fraction)
    save_model(model, out_path)
    for label in sorted(model.classes):
        print(f"{label}\t{model.classes[label].restriction_count}")
    print(f"wrote classifier model: {out_path}", file=sys.stderr)
    return EXIT_OK


def _load_db_and_model(db_path, model_path):
    try:
        db = load_db(db_path)
    except (TemplateDbError, OSError) as exc:
        raise ConfigError(f"cannot load template DB {db_path}: {exc}") from exc
    try:
        model = load_model(model_path)
    except (ModelFormatError, OSError) as exc:
        raise ConfigError(f"cannot load model {model_path}: {exc}") from exc
    return db, model


def cmd_recognize(image_path, db_path, model_path, cfg: PipelineConfig) -> int:
    try:
        db, model = _load_db_and_model(db_path, model_path)
        report = recognize_file(image_path, db, model, cfg)
    except (ConfigError, PnmError, OSError) as exc:
        return _fail(str(exc))
    print(report.to_line())
    if report.status in (STATUS_OK, STATUS_PARTIAL):
        print(
            f"{report.path}: {report.status}, plate {report.plate!r}, "
            f"{len(report.boxes)} characters",
            file=sys.stderr,
        )
        return EXIT_OK
    print(f"{report.path}: {report.status}", file=sys.stderr)
    return EXIT_NOT_FOUND


@dataclass
class EvalSummary:
    located: tuple[int, int]
    recognized: tuple[int, int]
    plates: tuple[int, int]
    mean_timings: StageTimings

    @staticmethod
    def _rate(pair: tuple[int, int]) -> str:
        n, d = pair
        pct = f"{100.0 * n / d:.2f}%" if d else "n/a"
        return f"{n}/{d}\t{pct}"

    def lines(self) -> list[str]:
        return [
            f"located_characters\t{self._rate(self.located)}",
            f"recognized_characters\t{self._rate(self.recognized)}",
            f"plates\t{self._rate(self.plates)}",
            f"mean_sift_match_ms\t{self.mean_timings.sift_match_ms:.3f}",
            f"mean_segment_ms\t{self.mean_timings.segment_ms:.3f}",
            f"mean_ocr_ms\t{self.mean_timings.ocr_ms:.3f}",
        ]


def summarize(results: list[tuple[RecognitionReport, str]]) -> EvalSummary:
    """Evaluation metrics over (report, ground truth plate) pairs.

    A character counts as located when a box was accepted at its position
    (capped at the ground-truth length), as recognized when the label at
    that position also matches; a plate succeeds only on exact equality.
    """
    located = recognized = plates = chars_total = 0
    sums = [0.0, 0.0, 0.0]
    for report, truth in results:
        chars_total += len(truth)
        if report.status in (STATUS_OK, STATUS_PARTIAL):
            pred = report.plate
            located += min(len(pred), len(truth))
            recognized += sum(
                1 for a, b in zip(pred, truth) if a == b and a != NOISE_MARK
            )
            plates += int(pred == truth)
        sums[0] += report.timings.sift_match_ms
        sums[1] += report.timings.segment_ms
        sums[2] += report.timings.ocr_ms
    n = len(results)
    mean = StageTimings(*(s / n for s in sums)) if n else StageTimings()
    return EvalSummary(
        located=(located, chars_total),
        recognized=(recognized, chars_total),
        plates=(plates, n),
        mean_timings=mean,
    )


def read_manifest(path) -> list[tuple[str, str]]:
    path = Path(path)
    rows = []
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise ConfigError(f"manifest line {lineno}: expected `path<TAB>plate`")
        img = Path(parts[0])
        if not img.is_absolute():
            img = path.parent / img
        rows.append((str(img), parts[1]))
    if not rows:
        raise ConfigError(f"manifest {path} holds no rows")
    return rows


def cmd_evaluate(manifest_path, db_path, model_path, cfg: PipelineConfig, jobs: int | None = None) -> int:
    try:
        rows = read_manifest(manifest_path)
        db, model = _load_db_and_model(db_path, model_path)
    except ConfigError as exc:
        return _fail(str(exc))
    if jobs is None:
        jobs = os.cpu_count() or 1

    def run(row):
        path, _ = row
        return recognize_file(path, db, model, cfg)

    try:
        if jobs == 1:
            reports = [run(r) for r in rows]
        else:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                reports = list(ex.map(run, rows))
    except (PnmError, OSError) as exc:
        return _fail(f"cannot read image: {exc}")

    for report in reports:
        print(report.to_line())
    summary = summarize(list(zip(reports, (truth for _, truth in rows))))
    for line in summary.lines():
        print(line)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="alprs",
        description="License plate recognition from digit-template keypoints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-templates", help="extract keypoints from 0.pgm..9.pgm")
    p.add_argument("--dir", required=True, help="directory holding 0.pgm .. 9.pgm")
    p.add_argument("--out", required=True, help="output template DB file")

    p = sub.add_parser("train-ocr", help="train the transition classifier")
    p.add_argument("--dir", required=True, help="directory of <label>/<sample>.pgm")
    p.add_argument("--grid", default=None, help="normalization grid, e.g. 65x60")
    p.add_argument("--order", type=int, default=None, help="transition order (2 or 3)")
    p.add_argument("--out", required=True, help="output model file")

    p = sub.add_parser("recognize", help="recognize one image")
    p.add_argument("--db", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--pattern", default=None, help="positional classes, e.g. LLLNNNN")
    p.add_argument("image")

    p = sub.add_parser("evaluate", help="batch recognition with summary metrics")
    p.add_argument("--db", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True, help="rows `path<TAB>plate`")
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--pattern", default=None, help="positional classes, e.g. LLLNNNN")

    args = parser.parse_args(argv)
    try:
        cfg = load_pipeline_config()
        if getattr(args, "pattern", None) is not None:
            cfg.plate_pattern = _parse_pattern(args.pattern)
        if getattr(args, "grid", None) is not None:
            w, sep, h = args.grid.lower().partition("x")
            if not sep or not w.isdigit() or not h.isdigit():
                raise ConfigError(f"bad grid {args.grid!r}, expected WxH")
            cfg.grid = GridSpec(int(w), int(h), cfg.grid.order)
        if getattr(args, "order", None) is not None:
            cfg.grid = GridSpec(cfg.grid.grid_w, cfg.grid.grid_h, args.order)
    except (ConfigError, ValueError) as exc:
        return _fail(str(exc))

    if args.command == "build-templates":
        return cmd_build_templates(args.dir, args.out, cfg)
    if args.command == "train-ocr":
        return cmd_train_ocr(args.dir, args.out, cfg)
    if args.command == "recognize":
        return cmd_recognize(args.image, args.db, args.model, cfg)
    return cmd_evaluate(args.manifest, args.db, args.model, cfg, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
