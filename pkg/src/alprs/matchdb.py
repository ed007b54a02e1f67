"""Template feature database, k-d tree index, and best-bin-first matching.

The ten digit templates are processed once and their keypoints cached in a
binary file so the templates never need re-processing. Image keypoints are
matched against a template's descriptors through a k-d tree traversed in
best-bin-first order with a bounded number of leaf examinations.
"""

from __future__ import annotations

import heapq
import logging
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgcore import GrayImage
from .sift import Keypoint, SiftConfig, extract_keypoints

log = logging.getLogger(__name__)

DIGITS = "0123456789"
DB_MAGIC = b"ALPRSDB1"
DB_VERSION = 1
DESC_LEN = 128


class TemplateDbError(Exception):
    """Problem with a template database file."""


class TemplateDbMagicError(TemplateDbError):
    """File is not a template DB (bad magic bytes)."""


class TemplateDbVersionError(TemplateDbError):
    """Template DB has an unsupported format version."""


class TemplateDbCorruptError(TemplateDbError):
    """Template DB is truncated or fails its checksum."""


@dataclass
class TemplateEntry:
    width: int
    height: int
    keypoints: list[Keypoint]


@dataclass
class TemplateFeatureDB:
    """Cached keypoints for the ten digit templates '0'..'9'."""

    entries: dict[str, TemplateEntry]
    format_version: int = DB_VERSION

    def __post_init__(self):
        missing = sorted(set(DIGITS) - set(self.entries))
        extra = sorted(set(self.entries) - set(DIGITS))
        if missing or extra:
            raise ValueError(
                f"template DB must hold exactly the digits 0-9 "
                f"(missing {missing}, unexpected {extra})"
            )


@dataclass(eq=False)
class Match:
    """One image keypoint paired with its nearest template keypoint."""

    template_char: str
    template_kp: Keypoint
    image_kp: Keypoint
    distance: float
    template_index: int
    image_index: int


def build_template_db(
    templates: dict[str, GrayImage], cfg: SiftConfig | None = None
) -> TemplateFeatureDB:
    """Run keypoint extraction once per digit template and cache the results."""
    missing = sorted(set(DIGITS) - set(templates))
    if missing:
        raise ValueError(f"missing digit templates: {missing}")
    if cfg is None:
        cfg = SiftConfig()
    entries = {}
    for char in DIGITS:
        img = templates[char]
        kps = extract_keypoints(img, cfg)
        if not kps:
            log.warning("template %r produced zero keypoints", char)
        entries[char] = TemplateEntry(img.width, img.height, kps)
    return TemplateFeatureDB(entries)


def save_db(db: TemplateFeatureDB, path) -> None:
    """Write the database in the ALPRSDB1 little-endian binary layout."""
    parts = [DB_MAGIC, struct.pack("<II", db.format_version, len(db.entries))]
    for char in sorted(db.entries):
        entry = db.entries[char]
        parts.append(
            struct.pack(
                "<cIII", char.encode("ascii"), entry.width, entry.height, len(entry.keypoints)
            )
        )
        for kp in entry.keypoints:
            parts.append(struct.pack("<dddd", kp.x, kp.y, kp.sigma, kp.theta))
            parts.append(np.asarray(kp.descriptor, dtype="<f4").tobytes())
    body = b"".join(parts)
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body)))


def load_db(path) -> TemplateFeatureDB:
    """Read an ALPRSDB1 file; magic, version, and checksum are verified."""
    raw = Path(path).read_bytes()
    if len(raw) < len(DB_MAGIC) or raw[: len(DB_MAGIC)] != DB_MAGIC:
        raise TemplateDbMagicError(f"{path}: not a template DB")
    if len(raw) < len(DB_MAGIC) + 12:
        raise TemplateDbCorruptError(f"{path}: truncated header")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise TemplateDbCorruptError(f"{path}: checksum mismatch")
    pos = len(DB_MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(body):
            raise TemplateDbCorruptError(f"{path}: truncated at byte {pos}")
        values = struct.unpack_from(fmt, body, pos)
        pos += size
        return values

    version, n_entries = take("<II")
    if version != DB_VERSION:
        raise TemplateDbVersionError(
            f"{path}: format version {version}, expected {DB_VERSION}"
        )
    entries = {}
    for _ in range(n_entries):
        char_b, width, height, n_kps = take("<cIII")
        kps = []
        for _ in range(n_kps):
            x, y, sigma, theta = take("<dddd")
            if pos + 4 * DESC_LEN > len(body):
                raise TemplateDbCorruptError(f"{path}: truncated descriptor")
            desc = np.frombuffer(body, dtype="<f4", count=DESC_LEN, offset=pos).copy()
            pos += 4 * DESC_LEN
            kps.append(Keypoint(x=x, y=y, sigma=sigma, theta=theta, descriptor=desc))
        entries[char_b.decode("ascii")] = TemplateEntry(width, height, kps)
    if pos != len(body):
        raise TemplateDbCorruptError(f"{path}: {len(body) - pos} trailing bytes")
    return TemplateFeatureDB(entries, format_version=version)


@dataclass(eq=False)
class _KdNode:
    split_dim: int
    split_val: float
    left: object
    right: object


@dataclass(eq=False)
class _KdLeaf:
    index: int


class KdIndex:
    """Balanced k-d tree over descriptor vectors, one leaf per descriptor.

    Each node splits on the dimension of greatest spread at the median.
    """

    def __init__(self, root, vectors: np.ndarray):
        self.root = root
        self.vectors = vectors

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


def build_index(descriptors) -> KdIndex:
    """Build a KdIndex from a non-empty sequence of equal-length vectors."""
    vectors = np.asarray(descriptors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("build_index needs a non-empty list of vectors")

    def recurse(ids: np.ndarray):
        if len(ids) == 1:
            return _KdLeaf(int(ids[0]))
        pts = vectors[ids]
        spread = pts.max(axis=0) - pts.min(axis=0)
        dim = int(np.argmax(spread))
        order = np.argsort(pts[:, dim], kind="stable")
        mid = len(ids) // 2
        split_val = float(pts[order[mid], dim])
        return _KdNode(
            split_dim=dim,
            split_val=split_val,
            left=recurse(ids[order[:mid]]),
            right=recurse(ids[order[mid:]]),
        )

    return KdIndex(recurse(np.arange(vectors.shape[0])), vectors)


def nearest_neighbor_bbf(
    index: KdIndex, query, max_checks: int = 200
) -> tuple[int, float]:
    """Best-bin-first nearest neighbor: (descriptor id, Euclidean distance).

    Bins are visited in order of increasing distance to the query through a
    priority queue; the search stops after max_checks leaf examinations (or
    sooner, once no unexplored bin can beat the best distance found). With
    max_checks >= leaf count the result is the exact nearest neighbor.
    """
    if max_checks < 1:
        raise ValueError("max_checks must be >= 1")
    q = np.asarray(query, dtype=np.float64)
    best_id = -1
    best_dist = np.inf
    checks = 0
    heap: list[tuple[float, int, object]] = []
    counter = 0

    def descend(node):
        nonlocal best_id, best_dist, checks, counter
        while isinstance(node, _KdNode):
            delta = q[node.split_dim] - node.split_val
            near, far = (node.left, node.right) if delta < 0 else (node.right, node.left)
            counter += 1
            heapq.heappush(heap, (abs(delta), counter, far))
            node = near
        dist = float(np.linalg.norm(q - index.vectors[node.index]))
        checks += 1
        if dist < best_dist:
            best_dist = dist
            best_id = node.index

    descend(index.root)
    while heap and checks < max_checks:
        bound, _, node = heapq.heappop(heap)
        if bound >= best_dist:
            break
        descend(node)
    return best_id, best_dist


def match_template(
    entry: TemplateEntry,
    image_kps: list[Keypoint],
    tau_match: float = 0.35,
    max_checks: int = 200,
    template_char: str = "?",
) -> list[Match]:
    """Pair every image keypoint with its nearest template keypoint.

    A Match is emitted when the descriptor distance is within tau_match; a
    template keypoint may appear in many matches, an image keypoint in at
    most one.
    """
    if not entry.keypoints or not image_kps:
        return []
    index = build_index([kp.descriptor for kp in entry.keypoints])
    matches = []
    for i, ikp in enumerate(image_kps):
        tid, dist = nearest_neighbor_bbf(index, ikp.descriptor, max_checks)
        if dist <= tau_match:
            matches.append(
                Match(
                    template_char=template_char,
                    template_kp=entry.keypoints[tid],
                    image_kp=ikp,
                    distance=dist,
                    template_index=tid,
                    image_index=i,
                )
            )
    return matches
