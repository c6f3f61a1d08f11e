"""Batch stages: refine -> rank -> synth, connected by files on disk."""

from __future__ import annotations

import concurrent.futures
import hashlib
import logging
import math
import re
import time
from pathlib import Path

from .ingest import (CandidateRecord, CocoCatalog, ImageDecodeError, backgrounds_from_coco,
                     decode_graymap, decode_mask, encode_png, read_candidate_manifest,
                     read_class_map, read_coco, read_jsonl, write_coco, write_jsonl, dumps)
from .masks import bbox_of
from .rank import score_segment
from .refine import NoThresholdError, RefineConfig, refine_segment
from .report import RunReport, count_table, format_table
from .synth import PastePolicy, Segment, synthesize

log = logging.getLogger("freeseg")

PROGRESS_EVERY = 1000


class PipelineError(RuntimeError):
    """Fatal error: the command cannot produce output."""


def _progress(stage: str, done: int) -> None:
    if done % PROGRESS_EVERY == 0:
        log.info("%s: %d records", stage, done)


def mask_filename(record_id: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", record_id)
    if safe != record_id or safe.startswith("."):
        safe = f"{safe}-{hashlib.sha1(record_id.encode()).hexdigest()[:8]}"
    return safe + ".png"


def _refine_one(args):
    raw_map_path, mask_path, cfg = args
    try:
        gray = decode_graymap(raw_map_path)
    except (ImageDecodeError, OSError) as exc:
        return None, "io_error", str(exc)
    try:
        mask = refine_segment(gray, cfg)
    except NoThresholdError:
        return None, "constant_map", None
    if not mask.any():
        return None, "empty_mask", None
    encode_png(mask, mask_path)
    return str(mask_path), None, None


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return map(fn, items)
    pool = concurrent.futures.ProcessPoolExecutor(max_workers=workers)
    chunk = max(1, min(64, len(items) // (4 * workers)))
    results = pool.map(fn, items, chunksize=chunk)

    def drain():
        try:
            yield from results
        finally:
            pool.shutdown()
    return drain()


def cmd_refine(manifest, out_dir, cfg: RefineConfig | None = None, workers: int = 1) -> RunReport:
    """Refine every candidate's raw map into ``out_dir/masks`` and write
    ``out_dir/refined.jsonl`` (all records, with ``mask_path`` and ``reject_reason``)."""
    start = time.perf_counter()
    cfg = cfg or RefineConfig()
    out_dir = Path(out_dir)
    try:
        records, errors = read_candidate_manifest(manifest)
    except OSError as exc:
        raise PipelineError(f"cannot read manifest {manifest}: {exc}") from exc
    report = RunReport("refine")
    for err in errors:
        report.diagnostics.append(f"{manifest}: {err}")
        report.reject("malformed_line")
    report.records_in = len(records) + len(errors)

    jobs = [(r.raw_map_path, out_dir / "masks" / mask_filename(r.record_id), cfg) for r in records]
    rows = []
    per_class: dict[str, dict[str, int]] = {}
    for i, (rec, (mask_path, reason, detail)) in enumerate(zip(records, _map(_refine_one, jobs, workers)), 1):
        row = rec.to_json()
        row["mask_path"] = mask_path
        row["reject_reason"] = reason
        rows.append(row)
        counts = per_class.setdefault(str(rec.class_id), {"in": 0, "out": 0})
        counts["in"] += 1
        if reason:
            report.reject(reason)
            if detail:
                report.diagnostics.append(f"{rec.record_id}: {detail}")
        else:
            report.records_out += 1
            counts["out"] += 1
        _progress("refine", i)
    write_jsonl(rows, out_dir / "refined.jsonl")
    report.per_class_counts = dict(sorted(per_class.items()))
    report.wall_time = time.perf_counter() - start
    report.write(out_dir / "refine_report.json")
    return report


def _rank_one(args):
    row, score_threshold, drop_threshold = args
    rec = CandidateRecord.from_json(row)
    out = rec.to_json()
    reason = row.get("reject_reason")
    mask_path = row.get("mask_path")
    seg = None
    if not reason and not mask_path:
        reason = "missing_mask"
    if not reason:
        try:
            mask = decode_mask(mask_path)
        except (ImageDecodeError, OSError) as exc:
            reason = "io_error"
            out["diagnostic"] = str(exc)
        else:
            seg = score_segment(mask, rec.box, rec.confidence, rec.record_id, rec.class_id,
                                score_threshold, drop_threshold)
    if seg is None:
        out.update(iou=None, iob=None, iom=None, freeseg_score=None, kept=False,
                   reject_reason=reason)
        try:
            out["drop_rate"] = (rec.confidence.before - rec.confidence.after) / rec.confidence.before
        except ZeroDivisionError:
            out["drop_rate"] = None
        return out
    out.update(iou=seg.iou, iob=seg.iob, iom=seg.iom, freeseg_score=seg.freeseg_score,
               drop_rate=None if math.isnan(seg.drop_rate) else seg.drop_rate,
               kept=seg.kept, reject_reason=seg.reject_reason)
    return out


def cmd_rank(manifest, out_dir, score_threshold: float = 0.5, drop_threshold: float = 0.5,
             workers: int = 1) -> RunReport:
    """Score a refined manifest into ``out_dir/scored.jsonl`` plus a per-class summary."""
    start = time.perf_counter()
    for name, thr in (("score", score_threshold), ("drop", drop_threshold)):
        if not 0.0 <= thr <= 1.0:
            raise PipelineError(f"{name} threshold must lie in [0, 1], got {thr}")
    out_dir = Path(out_dir)
    try:
        rows, errors = read_jsonl(manifest)
    except OSError as exc:
        raise PipelineError(f"cannot read manifest {manifest}: {exc}") from exc
    report = RunReport("rank")
    for err in errors:
        report.diagnostics.append(f"{manifest}: {err}")
        report.reject("malformed_line")
    valid = []
    for row in rows:
        try:
            CandidateRecord.from_json(row)
        except ValueError as exc:
            report.diagnostics.append(f"{manifest}: record {row.get('record_id')}: {exc}")
            report.reject("malformed_line")
            continue
        valid.append(row)
    report.records_in = len(valid) + len(errors) + (len(rows) - len(valid))

    scored = []
    jobs = [(row, score_threshold, drop_threshold) for row in valid]
    for i, out in enumerate(_map(_rank_one, jobs, workers), 1):
        scored.append(out)
        if out["kept"]:
            report.records_out += 1
        else:
            report.reject(out["reject_reason"])
        _progress("rank", i)
    write_jsonl(scored, out_dir / "scored.jsonl")
    table = count_table(scored)
    (out_dir / "rank_summary.txt").write_text(format_table(table), encoding="utf-8")
    report.per_class_counts = table["by_class"]
    report.wall_time = time.perf_counter() - start
    report.write(out_dir / "rank_report.json")
    return report


def load_segments(scored_manifest, class_map: dict[int, int] | None = None) -> list[Segment]:
    rows, _ = read_jsonl(scored_manifest)
    segments = []
    for row in rows:
        if row.get("kept") is True and row.get("mask_path"):
            cid = int(row["class_id"])
            segments.append(Segment(str(row["record_id"]), (class_map or {}).get(cid, cid),
                                    image_path=row["image_path"], mask_path=row["mask_path"]))
    return segments


def scene_annotations(scene, first_id: int, image_id: int) -> list[dict]:
    anns = []
    for k, a in enumerate(scene.annotations):
        box = bbox_of(a.mask)
        ann = {key: v for key, v in a.extra.items()}
        ann.update({
            "id": first_id + k,
            "image_id": image_id,
            "category_id": a.class_id,
            "segmentation": a.rle.to_coco(),
            "bbox": box.to_list(),
            "area": a.visible_area,
            "iscrowd": int(a.extra.get("iscrowd", 0)),
            "source": a.source,
        })
        if a.source == "pasted":
            ann["segment_id"] = scene.pastes[a.paste_index].segment_id
        anns.append(ann)
    return anns


def cmd_synth(backgrounds, scored_manifest, out_dir, policy: PastePolicy | None = None,
              count: int = 1, image_dir=None, workers: int = 1, class_map_path=None) -> RunReport:
    """Write ``count`` composited PNGs, ``annotations.json`` and ``stats.json`` to ``out_dir``."""
    start = time.perf_counter()
    policy = policy or PastePolicy()
    out_dir = Path(out_dir)
    try:
        bg_catalog = read_coco(backgrounds)
    except OSError as exc:
        raise PipelineError(f"cannot read backgrounds {backgrounds}: {exc}") from exc
    image_dir = Path(image_dir) if image_dir is not None else Path(backgrounds).parent
    class_map = read_class_map(class_map_path) if class_map_path else None
    bgs, problems = backgrounds_from_coco(bg_catalog, image_dir, class_map)
    try:
        segments = load_segments(scored_manifest, class_map)
    except OSError as exc:
        raise PipelineError(f"cannot read scored manifest {scored_manifest}: {exc}") from exc
    if not segments:
        raise PipelineError(f"no kept segments in {scored_manifest}")
    if not bgs:
        raise PipelineError(f"no background images in {backgrounds}")

    report = RunReport("synth", records_in=count)
    report.diagnostics.extend(bg_catalog.problems + problems)
    categories = {c["id"]: c for c in bg_catalog.categories}
    images, annotations, scene_stats = [], [], []
    totals = {"pastes_drawn": 0, "pastes_made": 0, "slots_skipped": 0, "degenerate_redraws": 0,
              "dropped_native": 0, "dropped_pasted": 0}
    per_class: dict[str, int] = {}
    for scene in synthesize(bgs, segments, policy, count, workers=workers):
        image_id = scene.index + 1
        file_name = f"synth_{scene.index:06d}.png"
        encode_png(scene.image, out_dir / "images" / file_name)
        images.append({"id": image_id, "file_name": file_name, "width": scene.width,
                       "height": scene.height, "background_id": scene.background_id})
        anns = scene_annotations(scene, len(annotations) + 1, image_id)
        annotations.extend(anns)
        for a in anns:
            if a["source"] == "pasted":
                key = str(a["category_id"])
                per_class[key] = per_class.get(key, 0) + 1
            if a["category_id"] not in categories:
                categories[a["category_id"]] = {"id": a["category_id"], "name": f"class_{a['category_id']}"}
        dropped_native = sum(d["source"] == "native" for d in scene.dropped)
        totals["pastes_drawn"] += scene.n_drawn
        totals["pastes_made"] += len(scene.pastes)
        totals["slots_skipped"] += scene.skipped_slots
        totals["degenerate_redraws"] += scene.degenerate_redraws
        totals["dropped_native"] += dropped_native
        totals["dropped_pasted"] += len(scene.dropped) - dropped_native
        scene_stats.append({
            "index": scene.index, "background_id": scene.background_id, "n_drawn": scene.n_drawn,
            "pastes": [{"segment_id": p.segment_id, "class_id": p.class_id, "flip": p.flip,
                        "scale": p.scale, "offset": list(p.offset), "attempts": p.attempts}
                       for p in scene.pastes],
            "skipped": scene.skipped_slots, "dropped": scene.dropped,
        })
        report.records_out += 1
        _progress("synth", report.records_out)

    out = CocoCatalog(images=images, annotations=annotations,
                      categories=[categories[k] for k in sorted(categories)],
                      extra={"info": {"description": "copy-paste synthesized scenes",
                                      "seed": policy.seed}})
    write_coco(out, out_dir / "annotations.json")
    stats = dict(totals, per_class_pasted=dict(sorted(per_class.items())), scenes=scene_stats)
    (out_dir / "stats.json").write_text(dumps(stats, indent=1) + "\n", encoding="utf-8")
    report.per_class_counts = dict(sorted(per_class.items()))
    report.wall_time = time.perf_counter() - start
    report.write(out_dir / "synth_report.json")
    return report


def cmd_stats(manifests, out_dir=None) -> tuple[RunReport, dict, str]:
    """Collected/selected counts across scored manifests."""
    rows = []
    report = RunReport("stats")
    for path in manifests:
        try:
            got, errors = read_jsonl(path)
        except OSError as exc:
            raise PipelineError(f"cannot read {path}: {exc}") from exc
        rows.extend(got)
        report.diagnostics.extend(f"{path}: {e}" for e in errors)
    table = count_table(rows)
    text = format_table(table)
    report.records_in = table["total"]["collected"]
    report.records_out = table["total"]["selected"]
    report.rejects_by_reason = table["rejects_by_reason"]
    report.per_class_counts = table["by_class"]
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "stats.txt").write_text(text, encoding="utf-8")
        (out_dir / "stats.json").write_text(dumps(table, indent=2) + "\n", encoding="utf-8")
    return report, table, text

