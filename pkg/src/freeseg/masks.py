"""Raster primitives shared by every stage: masks, boxes and the COCO RLE codec.

Masks are plain ``(H, W)`` boolean numpy arrays and gray maps are ``(H, W)``
float arrays with values in ``[0, 255]``. Boxes use integer pixel coordinates
with an inclusive origin and exclusive extent, so a box ``(x, y, w, h)``
covers columns ``x .. x+w-1`` and rows ``y .. y+h-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class EmptyMaskError(ValueError):
    """Raised when an operation needs at least one foreground pixel."""


class RleError(ValueError):
    pass


def as_mask(data, width: int | None = None, height: int | None = None) -> np.ndarray:
    """Coerce ``data`` to an ``(H, W)`` bool array.

    A flat row-major sequence is accepted when ``width`` and ``height`` are given.
    """
    arr = np.asarray(data)
    if width is not None and height is not None:
        if arr.size != width * height:
            raise ValueError(f"expected {width * height} values for {width}x{height}, got {arr.size}")
        arr = arr.reshape(height, width)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


def as_graymap(data, width: int | None = None, height: int | None = None) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if width is not None and height is not None:
        if arr.size != width * height:
            raise ValueError(f"expected {width * height} values for {width}x{height}, got {arr.size}")
        arr = arr.reshape(height, width)
    if arr.ndim != 2:
        raise ValueError(f"gray map must be 2-D, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 255 or not np.isfinite(arr).all()):
        raise ValueError("gray map values must lie in [0, 255]")
    return arr


@dataclass(frozen=True)
class BoundingBox:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box extent: {self}")

    @classmethod
    def from_xywh(cls, xywh: Sequence[float], width: int | None = None,
                  height: int | None = None) -> "BoundingBox":
        """Build a box from ``[x, y, w, h]``, clamping to the image when its size is known.

        Fractional coordinates are snapped outward to whole pixels.
        """
        x, y, w, h = (float(v) for v in xywh)
        x0, y0 = int(np.floor(x)), int(np.floor(y))
        x1, y1 = int(np.ceil(x + w)), int(np.ceil(y + h))
        box = cls(x0, y0, max(x1 - x0, 0), max(y1 - y0, 0))
        if width is not None and height is not None:
            box = box.clamp(width, height)
        return box

    def clamp(self, width: int, height: int) -> "BoundingBox":
        x0 = min(max(self.x, 0), width)
        y0 = min(max(self.y, 0), height)
        x1 = min(max(self.x + self.w, 0), width)
        y1 = min(max(self.y + self.h, 0), height)
        return BoundingBox(x0, y0, x1 - x0, y1 - y0)

    @property
    def area(self) -> int:
        return self.w * self.h

    def to_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]

    def to_mask(self, width: int, height: int) -> np.ndarray:
        box = self.clamp(width, height)
        out = np.zeros((height, width), dtype=bool)
        out[box.y:box.y + box.h, box.x:box.x + box.w] = True
        return out


@dataclass(frozen=True)
class RleMask:
    """Uncompressed COCO run-length encoding.

    ``counts`` alternates zero-runs and one-runs over the column-major pixel
    order, starting with a (possibly empty) zero-run.
    """

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if any(c < 0 for c in self.counts):
            raise RleError("negative run length")

    def to_coco(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_coco(cls, obj: dict) -> "RleMask":
        counts = obj.get("counts")
        if isinstance(counts, (str, bytes)):
            raise RleError("compressed RLE strings are not supported")
        height, width = obj["size"]
        return cls(int(height), int(width), tuple(counts))


def area(mask: np.ndarray) -> int:
    return int(np.count_nonzero(mask))


def intersection_area(mask: np.ndarray, box: BoundingBox) -> int:
    """Number of foreground pixels of ``mask`` inside ``box`` (clamped to the mask)."""
    mask = as_mask(mask)
    height, width = mask.shape
    b = box.clamp(width, height)
    return int(np.count_nonzero(mask[b.y:b.y + b.h, b.x:b.x + b.w]))


def check_same_grid(mask: np.ndarray, shape: tuple[int, int]) -> None:
    if tuple(mask.shape) != tuple(shape):
        raise ValueError(f"dimension mismatch: mask {mask.shape} vs image {shape}")


def rle_encode(mask: np.ndarray) -> RleMask:
    mask = as_mask(mask)
    height, width = mask.shape
    flat = mask.ravel(order="F")
    if flat.size == 0:
        return RleMask(height, width, ())
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return RleMask(height, width, tuple(runs.tolist()))


def rle_decode(rle: RleMask) -> np.ndarray:
    total = rle.height * rle.width
    counts = np.asarray(rle.counts, dtype=np.int64)
    if int(counts.sum()) != total:
        raise RleError(f"RLE counts sum to {int(counts.sum())}, expected {total} "
                       f"for {rle.width}x{rle.height}")
    values = np.arange(counts.size) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape((rle.height, rle.width), order="F")


def bbox_of(mask: np.ndarray) -> BoundingBox:
    mask = as_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    cols = np.flatnonzero(mask.any(axis=0))
    return BoundingBox(int(cols[0]), int(rows[0]),
                       int(cols[-1] - cols[0] + 1), int(rows[-1] - rows[0] + 1))
