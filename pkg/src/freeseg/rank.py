"""Segment quality scoring against a localization box and classifier confidences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .masks import BoundingBox, area, as_mask, intersection_area

DEFAULT_SCORE_THRESHOLD = 0.5
DEFAULT_DROP_THRESHOLD = 0.5


class UnusableRecordError(ValueError):
    pass


@dataclass(frozen=True)
class ConfidencePair:
    """Target-class probability before and after the localized box is removed."""

    before: float
    after: float

    def __post_init__(self):
        for name in ("before", "after"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"confidence {name}={v} outside [0, 1]")


@dataclass
class ScoredSegment:
    record_id: str
    class_id: int
    mask: np.ndarray | None
    box: BoundingBox | None
    iou: float
    iob: float
    iom: float
    freeseg_score: float
    drop_rate: float
    kept: bool
    reject_reason: str | None = None


def _overlap_counts(mask, box: BoundingBox) -> tuple[int, int, int]:
    mask = as_mask(mask)
    height, width = mask.shape
    inter = intersection_area(mask, box)
    return inter, area(mask), box.clamp(width, height).area


def iou(mask, box: BoundingBox) -> float:
    inter, a_m, a_b = _overlap_counts(mask, box)
    union = a_m + a_b - inter
    return inter / union if union > 0 else 0.0


def iob(mask, box: BoundingBox) -> float:
    inter, _, a_b = _overlap_counts(mask, box)
    return inter / a_b if a_b > 0 else 0.0


def iom(mask, box: BoundingBox) -> float:
    inter, a_m, _ = _overlap_counts(mask, box)
    return inter / a_m if a_m > 0 else 0.0


def overlap_metrics(mask, box: BoundingBox) -> tuple[float, float, float]:
    """``(iou, iob, iom)`` from a single pixel count."""
    inter, a_m, a_b = _overlap_counts(mask, box)
    union = a_m + a_b - inter
    return (inter / union if union > 0 else 0.0,
            inter / a_b if a_b > 0 else 0.0,
            inter / a_m if a_m > 0 else 0.0)


def freeseg_score(mask, box: BoundingBox) -> float:
    """Mean of intersection-over-box and intersection-over-mask."""
    _, b, m = overlap_metrics(mask, box)
    return (b + m) / 2


def drop_rate(conf: ConfidencePair) -> float:
    if conf.before == 0:
        raise UnusableRecordError("confidence before removal is 0")
    return (conf.before - conf.after) / conf.before


def is_kept(score: float, drop: float, score_threshold: float = DEFAULT_SCORE_THRESHOLD,
            drop_threshold: float = DEFAULT_DROP_THRESHOLD) -> bool:
    # strict: boundary values are rejected
    return bool(score > score_threshold and drop > drop_threshold)


def score_segment(mask, box: BoundingBox, conf: ConfidencePair, record_id: str = "",
                  class_id: int = 0, score_threshold: float = DEFAULT_SCORE_THRESHOLD,
                  drop_threshold: float = DEFAULT_DROP_THRESHOLD) -> ScoredSegment:
    """Score one record. Problems become a rejected segment, never an exception."""
    mask = as_mask(mask)
    i_u, i_b, i_m = overlap_metrics(mask, box)
    score = (i_b + i_m) / 2
    try:
        drop = drop_rate(conf)
    except UnusableRecordError:
        drop = math.nan
    reason = None
    if area(mask) == 0:
        reason = "empty_mask"
    elif math.isnan(drop):
        reason = "zero_confidence"
    elif not score > score_threshold:
        reason = "low_score"
    elif not drop > drop_threshold:
        reason = "low_drop_rate"
    kept = reason is None and is_kept(score, drop, score_threshold, drop_threshold)
    return ScoredSegment(record_id, class_id, mask, box.clamp(mask.shape[1], mask.shape[0]),
                         i_u, i_b, i_m, score, drop, kept, reason)


def rank_segments(records: Iterable[tuple], score_threshold: float = DEFAULT_SCORE_THRESHOLD,
                  drop_threshold: float = DEFAULT_DROP_THRESHOLD) -> list[ScoredSegment]:
    """Score a batch, preserving input order.

    Each record is ``(mask, box, conf)`` optionally followed by
    ``record_id`` and ``class_id``.
    """
    for name, thr in (("score_threshold", score_threshold), ("drop_threshold", drop_threshold)):
        if not 0.0 <= thr <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {thr}")
    out = []
    for idx, rec in enumerate(records):
        mask, box, conf, *rest = rec
        record_id = rest[0] if rest else str(idx)
        class_id = rest[1] if len(rest) > 1 else 0
        out.append(score_segment(mask, box, conf, record_id, class_id,
                                 score_threshold, drop_threshold))
    return out
