"""Copy-paste synthesis: composite kept segments onto scene-centric backgrounds.

Every scene is generated from its own random stream, seeded by mixing the
root seed with the scene index through :class:`numpy.random.SeedSequence`.
Inside a scene the draws always happen in the same order::

    background index, short-edge choice, background flip, N,
    N segment indices, then per paste attempt: flip, scale, offset x, offset y

so a scene depends only on ``(seed, index, catalogs, policy)`` and can be
produced by any worker.
"""

from __future__ import annotations

import concurrent.futures
import math
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from .masks import BoundingBox, RleMask, area, bbox_of, rle_decode, rle_encode

MAX_PASTE_ATTEMPTS = 10


class DegeneratePaste(Exception):
    """The transformed segment has no pixel left on the canvas."""


@dataclass(frozen=True)
class PastePolicy:
    n_range: tuple[int, int] = (1, 6)
    paste_flip_prob: float = 0.5
    paste_scale_range: tuple[float, float] = (0.1, 2.0)
    bg_shortest_edges: tuple[int, ...] = (640, 672, 704, 736, 768, 800)
    bg_max_size: int = 1333
    bg_flip_prob: float = 0.5
    min_visible_fraction: float = 0.05
    min_visible_pixels: int = 1
    class_balanced: bool = False
    max_paste_attempts: int = MAX_PASTE_ATTEMPTS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "n_range", tuple(int(v) for v in self.n_range))
        object.__setattr__(self, "paste_scale_range", tuple(float(v) for v in self.paste_scale_range))
        object.__setattr__(self, "bg_shortest_edges", tuple(int(v) for v in self.bg_shortest_edges))
        lo, hi = self.n_range
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid n_range {self.n_range}")
        s_lo, s_hi = self.paste_scale_range
        if not 0 < s_lo <= s_hi:
            raise ValueError(f"invalid paste_scale_range {self.paste_scale_range}")
        for name in ("paste_flip_prob", "bg_flip_prob", "min_visible_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.bg_shortest_edges or min(self.bg_shortest_edges) < 1:
            raise ValueError("bg_shortest_edges must be a nonempty list of positive sizes")
        if self.bg_max_size < 1 or self.max_paste_attempts < 1 or self.min_visible_pixels < 0:
            raise ValueError("bg_max_size and max_paste_attempts must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass
class SceneAnnotation:
    class_id: int
    mask: np.ndarray
    source: str  # "native" or "pasted"
    original_area: int
    paste_index: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def visible_area(self) -> int:
        return area(self.mask)

    @property
    def box(self) -> BoundingBox:
        return bbox_of(self.mask)

    @property
    def rle(self) -> RleMask:
        return rle_encode(self.mask)


@dataclass
class PasteRecord:
    segment_id: str
    class_id: int
    flip: bool
    scale: float
    offset: tuple[int, int]
    attempts: int
    mask: np.ndarray  # full placed mask before any later occlusion


@dataclass
class SynthScene:
    index: int
    background_id: object
    image: np.ndarray
    annotations: list[SceneAnnotation]
    owner: np.ndarray  # per pixel: index of the paste on top, -1 if none
    pastes: list[PasteRecord] = field(default_factory=list)
    n_drawn: int = 0
    skipped_slots: int = 0
    degenerate_redraws: int = 0
    dropped: list[dict] = field(default_factory=list)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]


@dataclass
class Background:
    """A scene-centric image plus its native annotations ``(class_id, mask_or_rle, extra)``."""

    image_id: object
    image: np.ndarray | None = None
    image_path: str | Path | None = None
    annotations: list[tuple] = field(default_factory=list)

    def load_image(self) -> np.ndarray:
        if self.image is not None:
            return self.image
        from .ingest import decode_image
        return decode_image(self.image_path)

    def native_masks(self, height: int, width: int) -> list[tuple[int, np.ndarray, dict]]:
        out = []
        for class_id, m, *rest in self.annotations:
            mask = rle_decode(m) if isinstance(m, RleMask) else np.asarray(m, dtype=bool)
            if mask.shape != (height, width):
                raise ValueError(f"annotation mask {mask.shape} does not match image "
                                 f"{(height, width)} for background {self.image_id}")
            out.append((int(class_id), mask, dict(rest[0]) if rest else {}))
        return out


@dataclass
class Segment:
    """A kept object segment: its source image and binary mask."""

    record_id: str
    class_id: int
    image: np.ndarray | None = None
    mask: np.ndarray | None = None
    image_path: str | Path | None = None
    mask_path: str | Path | None = None

    def load(self) -> tuple[np.ndarray, np.ndarray]:
        from .ingest import decode_image, decode_mask
        image = self.image if self.image is not None else decode_image(self.image_path)
        mask = self.mask if self.mask is not None else decode_mask(self.mask_path)
        if image.shape[:2] != mask.shape:
            raise ValueError(f"segment {self.record_id}: image {image.shape[:2]} and "
                             f"mask {mask.shape} differ in size")
        return image, np.asarray(mask, dtype=bool)


def scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(index)])))


def _round(v: float) -> int:
    return int(math.floor(v + 0.5))


def resized_shape(width: int, height: int, short_edge: int, max_size: int) -> tuple[int, int]:
    """Output ``(width, height)`` after short-edge resize with a long-edge cap."""
    scale = short_edge / min(width, height)
    new_w, new_h = width * scale, height * scale
    if max(new_w, new_h) > max_size:
        cap = max_size / max(new_w, new_h)
        new_w, new_h = new_w * cap, new_h * cap
    return _round(new_w), _round(new_h)


def resize_image(image: np.ndarray, width: int, height: int) -> np.ndarray:
    if image.shape[1] == width and image.shape[0] == height:
        return image.copy()
    return np.asarray(Image.fromarray(image).resize((width, height), Image.BILINEAR))


def resize_mask(mask: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor resampling sampling source pixel centers."""
    h, w = mask.shape
    if w == width and h == height:
        return mask.copy()
    rows = np.minimum(((np.arange(height) + 0.5) * h / height).astype(np.int64), h - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * w / width).astype(np.int64), w - 1)
    return mask.take(rows, axis=0).take(cols, axis=1)


def hflip(arr: np.ndarray) -> np.ndarray:
    return arr[:, ::-1].copy()


def transform_background(image: np.ndarray, annotations: Sequence[SceneAnnotation],
                         policy: PastePolicy, rng: np.random.Generator):
    """Random short-edge resize (long edge capped) then random horizontal flip.

    Annotations that vanish under resizing are dropped.
    """
    h, w = image.shape[:2]
    edge = policy.bg_shortest_edges[int(rng.integers(len(policy.bg_shortest_edges)))]
    flip = bool(rng.random() < policy.bg_flip_prob)
    new_w, new_h = resized_shape(w, h, edge, policy.bg_max_size)
    image = resize_image(image, new_w, new_h)
    if flip:
        image = hflip(image)
    out = []
    for ann in annotations:
        m = resize_mask(ann.mask, new_w, new_h)
        if flip:
            m = hflip(m)
        a = area(m)
        if a == 0:
            continue
        out.append(replace(ann, mask=m, original_area=a))
    return image, out


@dataclass(frozen=True)
class PasteParams:
    flip: bool
    scale: float
    dx: int  # canvas x of the scaled content's left edge (negative = cropped)
    dy: int


def draw_paste_params(src_w: int, src_h: int, target_w: int, target_h: int,
                      policy: PastePolicy, rng: np.random.Generator) -> PasteParams:
    flip = bool(rng.random() < policy.paste_flip_prob)
    scale = float(rng.uniform(*policy.paste_scale_range))
    new_w, new_h = _round(src_w * scale), _round(src_h * scale)
    # crop when the content is larger than the canvas, pad when smaller
    span_x, span_y = target_w - new_w, target_h - new_h
    dx = int(rng.integers(min(0, span_x), max(0, span_x) + 1))
    dy = int(rng.integers(min(0, span_y), max(0, span_y) + 1))
    return PasteParams(flip, scale, dx, dy)


def apply_paste_params(image: np.ndarray, mask: np.ndarray, target_w: int, target_h: int,
                       params: PasteParams) -> tuple[np.ndarray, np.ndarray]:
    src_h, src_w = mask.shape
    new_w, new_h = _round(src_w * params.scale), _round(src_h * params.scale)
    if new_w < 1 or new_h < 1:
        raise DegeneratePaste(f"scale {params.scale:.3f} collapses the segment")
    if params.flip:
        image, mask = hflip(image), hflip(mask)
    image = resize_image(image, new_w, new_h)
    mask = resize_mask(mask, new_w, new_h)

    patch = np.zeros((target_h, target_w) + image.shape[2:], dtype=image.dtype)
    canvas = np.zeros((target_h, target_w), dtype=bool)
    x0, y0 = max(params.dx, 0), max(params.dy, 0)
    sx, sy = max(-params.dx, 0), max(-params.dy, 0)
    cw, ch = min(new_w - sx, target_w - x0), min(new_h - sy, target_h - y0)
    if cw > 0 and ch > 0:
        patch[y0:y0 + ch, x0:x0 + cw] = image[sy:sy + ch, sx:sx + cw]
        canvas[y0:y0 + ch, x0:x0 + cw] = mask[sy:sy + ch, sx:sx + cw]
    if not canvas.any():
        raise DegeneratePaste("no segment pixel lands on the canvas")
    return patch, canvas


def transform_paste(image: np.ndarray, mask: np.ndarray, target_w: int, target_h: int,
                    policy: PastePolicy, rng: np.random.Generator):
    """Flip, rescale and crop/pad a segment onto a ``target_w x target_h`` canvas.

    Returns ``(patch, mask, params)``; raises :class:`DegeneratePaste` when the
    visible mask is empty.
    """
    src_h, src_w = mask.shape
    params = draw_paste_params(src_w, src_h, target_w, target_h, policy, rng)
    patch, canvas = apply_paste_params(image, mask, target_w, target_h, params)
    return patch, canvas, params


def _below_minimum(visible: int, original: int, policy: PastePolicy) -> bool:
    if visible == 0 or visible < policy.min_visible_pixels:
        return True
    return original > 0 and visible / original < policy.min_visible_fraction


def paste(scene: SynthScene, patch: np.ndarray, mask: np.ndarray, class_id: int,
          policy: PastePolicy, record: PasteRecord | None = None) -> SynthScene:
    """Hard-edged composite; earlier annotations lose the covered pixels."""
    if mask.shape != scene.owner.shape or patch.shape[:2] != mask.shape:
        raise ValueError("patch/mask must match the scene size")
    if not mask.any():
        raise DegeneratePaste("empty paste mask")
    # all edits happen inside the pasted mask's bounding window
    box = bbox_of(mask)
    win = (slice(box.y, box.y + box.h), slice(box.x, box.x + box.w))
    mwin = mask[win]
    image = scene.image.copy()
    np.copyto(image[win], patch[win], where=mwin.reshape(mwin.shape + (1,) * (patch.ndim - 2)))
    annotations = []
    dropped = list(scene.dropped)
    for ann in scene.annotations:
        hit = ann.mask[win] & mwin
        if not hit.any():
            annotations.append(ann)
            continue
        visible = ann.visible_area - int(np.count_nonzero(hit))
        if _below_minimum(visible, ann.original_area, policy):
            dropped.append({"source": ann.source, "class_id": ann.class_id,
                            "paste_index": ann.paste_index, "visible": visible,
                            "original_area": ann.original_area})
            continue
        m = ann.mask.copy()
        m[win] &= ~mwin
        annotations.append(replace(ann, mask=m))
    k = len(scene.pastes)
    owner = scene.owner.copy()
    np.copyto(owner[win], k, where=mwin)
    annotations.append(SceneAnnotation(int(class_id), mask.copy(), "pasted", area(mask), k))
    pastes = scene.pastes + [record or PasteRecord("", int(class_id), False, 1.0, (0, 0), 1, mask.copy())]
    return replace(scene, image=image, annotations=annotations, owner=owner,
                   pastes=pastes, dropped=dropped)


def _pick_segments(segments: Sequence[Segment], n: int, policy: PastePolicy,
                   rng: np.random.Generator) -> list[int]:
    if not policy.class_balanced:
        return [int(i) for i in rng.integers(len(segments), size=n)]
    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(segments):
        by_class.setdefault(s.class_id, []).append(i)
    classes = sorted(by_class)
    picks = []
    for _ in range(n):
        members = by_class[classes[int(rng.integers(len(classes)))]]
        picks.append(members[int(rng.integers(len(members)))])
    return picks


def generate_scene(index: int, backgrounds: Sequence[Background], segments: Sequence[Segment],
                   policy: PastePolicy) -> SynthScene:
    rng = scene_rng(policy.seed, index)
    bg = backgrounds[int(rng.integers(len(backgrounds)))]
    image = bg.load_image()
    h, w = image.shape[:2]
    natives = [SceneAnnotation(c, m, "native", area(m), None, extra)
               for c, m, extra in bg.native_masks(h, w)]
    natives = [a for a in natives if a.original_area > 0]
    image, natives = transform_background(image, natives, policy, rng)
    h, w = image.shape[:2]
    scene = SynthScene(index, bg.image_id, image, natives, np.full((h, w), -1, dtype=np.int16))

    lo, hi = policy.n_range
    n = int(rng.integers(lo, hi + 1))
    scene.n_drawn = n
    skipped = redraws = 0
    for seg_idx in _pick_segments(segments, n, policy, rng):
        seg = segments[seg_idx]
        src_image, src_mask = seg.load()
        for attempt in range(1, policy.max_paste_attempts + 1):
            try:
                patch, canvas, params = transform_paste(src_image, src_mask, w, h, policy, rng)
            except DegeneratePaste:
                redraws += 1
                continue
            record = PasteRecord(seg.record_id, seg.class_id, params.flip, params.scale,
                                 (params.dx, params.dy), attempt, canvas)
            scene = paste(scene, patch, canvas, seg.class_id, policy, record)
            break
        else:
            skipped += 1
    scene.skipped_slots = skipped
    scene.degenerate_redraws = redraws
    return scene


_WORKER_STATE: dict = {}


def _init_worker(backgrounds, segments, policy):
    _WORKER_STATE["args"] = (backgrounds, segments, policy)


def _worker_scene(index: int) -> SynthScene:
    return generate_scene(index, *_WORKER_STATE["args"])


def synthesize(backgrounds: Sequence[Background], segments: Sequence[Segment],
               policy: PastePolicy, count: int, start: int = 0,
               workers: int = 1) -> Iterator[SynthScene]:
    """Yield ``count`` scenes for indices ``start .. start+count-1`` in index order.

    Output does not depend on ``workers``.
    """
    if not backgrounds:
        raise ValueError("background catalog is empty")
    if not segments:
        raise ValueError("segment catalog is empty")
    if count < 0:
        raise ValueError("count must be >= 0")
    return _synthesize(list(backgrounds), list(segments), policy, count, start, workers)


def _synthesize(backgrounds, segments, policy, count, start, workers):
    indices = range(start, start + count)
    if workers <= 1 or count <= 1:
        for i in indices:
            yield generate_scene(i, backgrounds, segments, policy)
        return
    with concurrent.futures.ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker,
            initargs=(backgrounds, segments, policy)) as pool:
        yield from pool.map(_worker_scene, indices, chunksize=max(1, min(32, count // (4 * workers))))


def check_scene(scene: SynthScene, policy: PastePolicy) -> list[str]:
    """Return violated scene invariants (empty when consistent)."""
    problems = []
    pasted = [a for a in scene.annotations if a.source == "pasted"]
    covered = np.zeros(scene.owner.shape, dtype=np.int32)
    for a in pasted:
        covered += a.mask
        if not np.array_equal(a.mask, scene.owner == a.paste_index):
            problems.append(f"paste {a.paste_index}: mask differs from its owned pixels")
    if (covered > 1).any():
        problems.append("pixel claimed by two pasted annotations")
    for a in scene.annotations:
        if a.visible_area == 0 or _below_minimum(a.visible_area, a.original_area, policy):
            problems.append(f"{a.source} annotation below visibility minimum")
        if a.source == "native" and (a.mask & (scene.owner >= 0)).any():
            problems.append("native annotation keeps occluded pixels")
    return problems
