"""Overlay rendering: tinted masks, box outlines and score captions."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from PIL.PngImagePlugin import PngInfo

from .ingest import ImageDecodeError, decode_image, decode_mask, read_coco, read_jsonl
from .masks import BoundingBox, RleMask, rle_decode

# pasted instances in reds, native ones in greens
PASTED_COLORS = [(230, 40, 40), (200, 70, 120), (250, 110, 60), (170, 30, 60)]
NATIVE_COLORS = [(40, 200, 60), (110, 220, 40), (30, 160, 120), (150, 230, 110)]
BOX_COLOR_KEPT = (40, 220, 40)
BOX_COLOR = (255, 255, 0)
ALPHA = 0.5


def tint(image: np.ndarray, mask: np.ndarray, color, alpha: float = ALPHA) -> np.ndarray:
    out = image.astype(np.float64)
    out[mask] = (1 - alpha) * out[mask] + alpha * np.asarray(color, dtype=np.float64)
    return np.rint(out).astype(np.uint8)


def render_overlay(image: np.ndarray, items, draw_boxes: bool = True, caption: str | None = None):
    """``items`` is a sequence of ``(mask, box_or_None, color)``."""
    out = image.copy()
    for mask, _, color in items:
        out = tint(out, mask, color)
    img = Image.fromarray(out)
    draw = ImageDraw.Draw(img)
    if draw_boxes:
        for _, box, color in items:
            if box is not None and box.w > 0 and box.h > 0:
                draw.rectangle([box.x, box.y, box.x + box.w - 1, box.y + box.h - 1], outline=color)
    if caption:
        draw.text((3, 3), caption, fill=(255, 255, 255))
    return img


def _save(img: Image.Image, path: Path, caption: str | None) -> None:
    info = PngInfo()
    if caption:
        info.add_text("caption", caption)
    path.parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG", pnginfo=info)


def scored_caption(row: dict) -> str:
    def fmt(v):
        return "n/a" if v is None else f"{v:.3f}"
    verdict = "kept" if row.get("kept") else f"rejected:{row.get('reject_reason')}"
    return f"score {fmt(row.get('freeseg_score'))} drop {fmt(row.get('drop_rate'))} {verdict}"


def viz_scored(manifest, out_dir, limit: int) -> tuple[list[Path], list[str]]:
    rows, errors = read_jsonl(manifest)
    written, problems = [], [str(e) for e in errors]
    for row in rows:
        if len(written) >= limit:
            break
        try:
            image = decode_image(row["image_path"])
        except (ImageDecodeError, OSError, KeyError) as exc:
            problems.append(f"{row.get('record_id')}: {exc}")
            continue
        items = []
        h, w = image.shape[:2]
        if row.get("mask_path"):
            try:
                mask = decode_mask(row["mask_path"])
            except (ImageDecodeError, OSError) as exc:
                problems.append(f"{row.get('record_id')}: {exc}")
                continue
            if mask.shape == (h, w):
                items.append((mask, None, PASTED_COLORS[0]))
        box = BoundingBox.from_xywh(row["box"], w, h)
        items.append((np.zeros((h, w), dtype=bool), box,
                      BOX_COLOR_KEPT if row.get("kept") else BOX_COLOR))
        caption = scored_caption(row)
        path = Path(out_dir) / f"{len(written):06d}.png"
        _save(render_overlay(image, items, caption=caption), path, caption)
        written.append(path)
    return written, problems


def viz_coco(coco_path, out_dir, limit: int, image_dir=None, draw_boxes: bool = True):
    catalog = read_coco(coco_path)
    if image_dir is None:
        base = Path(coco_path).parent
        image_dir = base / "images" if (base / "images").is_dir() else base
    by_image = catalog.annotations_by_image()
    written, problems = [], list(catalog.problems)
    for img in catalog.images:
        if len(written) >= limit:
            break
        try:
            image = decode_image(Path(image_dir) / img["file_name"])
        except (ImageDecodeError, OSError) as exc:
            problems.append(f"image {img.get('id')}: {exc}")
            continue
        items, n_pasted, n_native = [], 0, 0
        for ann in by_image.get(img["id"], []):
            seg = ann.get("segmentation")
            if not isinstance(seg, dict):
                problems.append(f"annotation {ann.get('id')}: only RLE segmentations are drawn")
                continue
            mask = rle_decode(RleMask.from_coco(seg))
            if ann.get("source") == "pasted":
                color = PASTED_COLORS[n_pasted % len(PASTED_COLORS)]
                n_pasted += 1
            else:
                color = NATIVE_COLORS[n_native % len(NATIVE_COLORS)]
                n_native += 1
            box = BoundingBox.from_xywh(ann["bbox"]) if "bbox" in ann else None
            items.append((mask, box, color))
        path = Path(out_dir) / f"{Path(img['file_name']).stem}_overlay.png"
        _save(render_overlay(image, items, draw_boxes=draw_boxes), path, None)
        written.append(path)
    return written, problems


def cmd_viz(source, out_dir, limit: int = 20, image_dir=None, draw_boxes: bool = True):
    """Render overlays for a COCO JSON file or a scored JSON-lines manifest."""
    if limit <= 0:
        return [], []
    source = Path(source)
    is_coco = False
    if source.suffix == ".json":
        with open(source, encoding="utf-8") as fh:
            head = fh.read(1)
            fh.seek(0)
            is_coco = head == "{" and isinstance(json.load(fh), dict)
    if is_coco:
        return viz_coco(source, out_dir, limit, image_dir, draw_boxes)
    return viz_scored(source, out_dir, limit)
