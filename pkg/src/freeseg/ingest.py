"""File formats: images, JSON-lines manifests and COCO-style annotation files.

All writers are deterministic: keys are sorted and floats are written with at
most 6 significant digits, so identical inputs give identical bytes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from PIL import Image, ImageDraw, UnidentifiedImageError

from .masks import BoundingBox, RleError, RleMask, rle_encode
from .rank import ConfidencePair

SOURCE_TAGS = ("imagenet", "google", "other")
CANDIDATE_FIELDS = ("record_id", "class_id", "image_path", "raw_map_path", "box",
                    "conf_before", "conf_after", "source_tag")


class ImageDecodeError(OSError):
    pass


@dataclass(frozen=True)
class LineError:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


# ---------------------------------------------------------------- images

def decode_image(path) -> np.ndarray:
    """Read PNG/JPEG/PGM as ``(H, W, 3)`` uint8 RGB."""
    img = _open(path)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.uint8)


def _open(path) -> Image.Image:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, UnidentifiedImageError, SyntaxError, ValueError) as exc:
        raise ImageDecodeError(f"cannot decode image {path}: {exc}") from exc
    return img


def luma(rgb: np.ndarray) -> np.ndarray:
    """Integer luma, round((299 R + 587 G + 114 B) / 1000)."""
    rgb = rgb.astype(np.int64)
    return ((299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000).astype(np.uint8)


def decode_graymap(path) -> np.ndarray:
    """Read an 8-bit single-channel map as float64 in [0, 255]."""
    img = _open(path)
    if img.mode == "L":
        arr = np.asarray(img)
    elif img.mode == "1":
        arr = np.asarray(img, dtype=np.uint8) * 255
    elif img.mode == "LA":
        arr = np.asarray(img)[..., 0]
    elif img.mode in ("RGB", "RGBA", "P", "CMYK", "YCbCr"):
        arr = luma(np.asarray(img.convert("RGB")))
    else:
        raise ImageDecodeError(f"unsupported pixel mode {img.mode!r} in {path} (8-bit only)")
    return arr.astype(np.float64)


def decode_mask(path) -> np.ndarray:
    return decode_graymap(path) > 0


def encode_png(data: np.ndarray, path) -> None:
    """Write a bool mask (1-bit), a gray map (8-bit) or an RGB raster as PNG."""
    arr = np.asarray(data)
    if arr.dtype == bool:
        img = Image.fromarray(arr.astype(np.uint8) * 255).convert("1")
    elif arr.ndim == 2:
        img = Image.fromarray(np.clip(np.rint(arr), 0, 255).astype(np.uint8), mode="L")
    elif arr.ndim == 3 and arr.shape[2] == 3:
        img = Image.fromarray(arr.astype(np.uint8), mode="RGB")
    else:
        raise ValueError(f"cannot encode array of shape {arr.shape} as PNG")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


# ---------------------------------------------------------------- JSON helpers

def normalize_floats(obj: Any) -> Any:
    """Round floats to 6 significant digits; NaN/inf become None."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(f"{obj:.6g}")
    if isinstance(obj, (np.floating,)):
        return normalize_floats(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): normalize_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize_floats(v) for v in obj]
    return obj


def dumps(obj: Any, indent: int | None = None) -> str:
    return json.dumps(normalize_floats(obj), sort_keys=True, indent=indent, ensure_ascii=False)


def read_jsonl(path) -> tuple[list[dict], list[LineError]]:
    rows, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(LineError(lineno, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                errors.append(LineError(lineno, "expected a JSON object"))
                continue
            rows.append(obj)
    return rows, errors


def write_jsonl(rows: Iterable[dict], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(dumps(row) + "\n")


# ---------------------------------------------------------------- candidate manifests

@dataclass
class CandidateRecord:
    record_id: str
    class_id: int
    image_path: str
    raw_map_path: str
    box: BoundingBox
    confidence: ConfidencePair
    source_tag: str = "other"
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        row = dict(self.extra)
        row.update({
            "record_id": self.record_id,
            "class_id": self.class_id,
            "image_path": self.image_path,
            "raw_map_path": self.raw_map_path,
            "box": self.box.to_list(),
            "conf_before": self.confidence.before,
            "conf_after": self.confidence.after,
            "source_tag": self.source_tag,
        })
        return row

    @classmethod
    def from_json(cls, obj: dict) -> "CandidateRecord":
        """Validate one manifest row; raises ``ValueError`` naming the bad field."""
        missing = [k for k in CANDIDATE_FIELDS if k not in obj]
        if missing:
            raise ValueError(f"missing field(s): {', '.join(missing)}")
        if not isinstance(obj["record_id"], str) or not obj["record_id"]:
            raise ValueError("field 'record_id' must be a nonempty string")
        if isinstance(obj["class_id"], bool) or not isinstance(obj["class_id"], int):
            raise ValueError("field 'class_id' must be an integer")
        for key in ("image_path", "raw_map_path"):
            if not isinstance(obj[key], str):
                raise ValueError(f"field '{key}' must be a string")
        box = obj["box"]
        if (not isinstance(box, list) or len(box) != 4
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in box)):
            raise ValueError("field 'box' must be [x, y, w, h]")
        try:
            box = BoundingBox.from_xywh(box)
        except ValueError as exc:
            raise ValueError(f"field 'box': {exc}") from None
        try:
            conf = ConfidencePair(float(obj["conf_before"]), float(obj["conf_after"]))
        except (TypeError, ValueError) as exc:
            raise ValueError(f"field 'conf_before'/'conf_after': {exc}") from None
        if obj["source_tag"] not in SOURCE_TAGS:
            raise ValueError(f"field 'source_tag' must be one of {SOURCE_TAGS}")
        extra = {k: v for k, v in obj.items() if k not in CANDIDATE_FIELDS}
        return cls(obj["record_id"], obj["class_id"], obj["image_path"], obj["raw_map_path"],
                   box, conf, obj["source_tag"], extra)


def read_candidate_manifest(path) -> tuple[list[CandidateRecord], list[LineError]]:
    """Parse a JSON-lines manifest. Bad lines are reported, good ones kept."""
    records, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(LineError(lineno, f"invalid JSON: {exc.msg}"))
                continue
            if not isinstance(obj, dict):
                errors.append(LineError(lineno, "expected a JSON object"))
                continue
            try:
                records.append(CandidateRecord.from_json(obj))
            except ValueError as exc:
                errors.append(LineError(lineno, str(exc)))
    return records, errors


def write_candidate_manifest(records: Iterable[CandidateRecord], path) -> None:
    write_jsonl((r.to_json() for r in records), path)


def read_class_map(path) -> dict[int, int]:
    """Two-column (source id, target category id) CSV/TSV; '#' lines are comments."""
    mapping = {}
    with open(path, encoding="utf-8", newline="") as fh:
        sample = fh.read(4096)
        fh.seek(0)
        delimiter = "\t" if "\t" in sample else ","
        for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected two columns")
            try:
                mapping[int(row[0])] = int(row[1])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-integer id") from None
    return mapping


# ---------------------------------------------------------------- COCO

@dataclass
class CocoCatalog:
    images: list[dict] = field(default_factory=list)
    annotations: list[dict] = field(default_factory=list)
    categories: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    problems: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        out = dict(self.extra)
        out.update(images=self.images, annotations=self.annotations, categories=self.categories)
        return out

    @property
    def size(self) -> tuple[int, int]:
        return len(self.images), len(self.annotations)

    def annotations_by_image(self) -> dict[Any, list[dict]]:
        out: dict[Any, list[dict]] = {}
        for ann in self.annotations:
            out.setdefault(ann.get("image_id"), []).append(ann)
        return out


def _check_annotation(ann: dict, image: dict | None) -> str | None:
    seg = ann.get("segmentation")
    if isinstance(seg, dict):
        try:
            rle = RleMask.from_coco(seg)
        except (RleError, KeyError, TypeError, ValueError) as exc:
            return f"bad RLE segmentation ({exc})"
        if sum(rle.counts) != rle.height * rle.width:
            return (f"RLE counts sum to {sum(rle.counts)} but size is "
                    f"{rle.height}x{rle.width}")
        if image is not None and "height" in image and "width" in image:
            if (rle.height, rle.width) != (image["height"], image["width"]):
                return "RLE size differs from its image"
    return None


def read_coco(path) -> CocoCatalog:
    """Load a COCO-style file. Inconsistent annotations are removed and
    listed in ``catalog.problems``; unknown fields are kept."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be an object")
    cat = CocoCatalog(extra={k: v for k, v in data.items()
                             if k not in ("images", "annotations", "categories")})
    cat.images = list(data.get("images", []))
    cat.categories = list(data.get("categories", []))
    images = {img.get("id"): img for img in cat.images}
    for ann in data.get("annotations", []):
        problem = _check_annotation(ann, images.get(ann.get("image_id")))
        if problem:
            cat.problems.append(f"annotation {ann.get('id')}: {problem}")
        else:
            cat.annotations.append(ann)
    return cat


def write_coco(catalog: CocoCatalog, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(catalog.to_json()))
        fh.write("\n")


def annotation_rle(ann: dict, height: int, width: int) -> RleMask:
    """RLE of an annotation, rasterizing polygon segmentations when needed."""
    seg = ann.get("segmentation")
    if isinstance(seg, dict):
        return RleMask.from_coco(seg)
    if isinstance(seg, list) and seg:
        canvas = Image.new("L", (width, height), 0)
        draw = ImageDraw.Draw(canvas)
        for poly in seg:
            if len(poly) >= 6:
                draw.polygon([(float(x), float(y)) for x, y in zip(poly[::2], poly[1::2])], fill=1)
        return rle_encode(np.asarray(canvas, dtype=bool))
    raise RleError(f"annotation {ann.get('id')} has no usable segmentation")


def backgrounds_from_coco(catalog: CocoCatalog, image_dir, class_map: dict[int, int] | None = None):
    """Turn a COCO catalog into synthesis backgrounds; returns ``(backgrounds, problems)``."""
    from .synth import Background

    by_image = catalog.annotations_by_image()
    backgrounds, problems = [], []
    for img in catalog.images:
        anns = []
        for ann in by_image.get(img.get("id"), []):
            try:
                rle = annotation_rle(ann, int(img["height"]), int(img["width"]))
            except (RleError, KeyError, TypeError, ValueError) as exc:
                problems.append(f"annotation {ann.get('id')}: {exc}")
                continue
            extra = {k: v for k, v in ann.items()
                     if k not in ("id", "image_id", "category_id", "segmentation", "bbox", "area")}
            extra["source_annotation_id"] = ann.get("id")
            cid = int(ann["category_id"])
            anns.append(((class_map or {}).get(cid, cid), rle, extra))
        backgrounds.append(Background(img["id"], image_path=Path(image_dir) / img["file_name"],
                                      annotations=anns))
    return backgrounds, problems
