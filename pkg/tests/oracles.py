"""Slow, obviously-correct reference implementations used only by the tests."""

from __future__ import annotations

import math
from collections import deque

import numpy as np


def scanline_rle(mask) -> list[int]:
    """Column-major runs, first run counting zeros, by explicit pixel walk."""
    h, w = len(mask), len(mask[0]) if len(mask) else 0
    counts, current, run = [], False, 0
    for x in range(w):
        for y in range(h):
            v = bool(mask[y][x])
            if v == current:
                run += 1
            else:
                counts.append(run)
                current, run = v, 1
    counts.append(run)
    return counts


def count_pixels(mask) -> int:
    return sum(1 for row in mask for v in row if v)


def box_mask_overlap(mask, x, y, w, h) -> tuple[int, int, int]:
    """(intersection, mask area, box area) by scanning every pixel."""
    H, W = len(mask), len(mask[0])
    inter = m = b = 0
    for r in range(H):
        for c in range(W):
            in_box = x <= c < x + w and y <= r < y + h
            b += in_box
            m += bool(mask[r][c])
            inter += bool(mask[r][c]) and in_box
    return inter, m, b


def morph(mask, halfwidth: int, kind: str) -> np.ndarray:
    """Per-pixel square-window morphology; outside pixels count as background."""
    H, W = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    for r in range(H):
        for c in range(W):
            vals = []
            for dr in range(-halfwidth, halfwidth + 1):
                for dc in range(-halfwidth, halfwidth + 1):
                    rr, cc = r + dr, c + dc
                    vals.append(bool(mask[rr, cc]) if 0 <= rr < H and 0 <= cc < W else False)
            out[r, c] = any(vals) if kind == "dilate" else all(vals)
    return out


def components(mask, connectivity: str) -> list[list[tuple[int, int]]]:
    """Connected components by BFS, in order of their first row-major pixel."""
    H, W = mask.shape
    if connectivity == "four":
        nbrs = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        nbrs = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]
    seen = np.zeros_like(mask, dtype=bool)
    comps = []
    for r in range(H):
        for c in range(W):
            if mask[r, c] and not seen[r, c]:
                comp, q = [], deque([(r, c)])
                seen[r, c] = True
                while q:
                    pr, pc = q.popleft()
                    comp.append((pr, pc))
                    for dr, dc in nbrs:
                        nr, nc = pr + dr, pc + dc
                        if 0 <= nr < H and 0 <= nc < W and mask[nr, nc] and not seen[nr, nc]:
                            seen[nr, nc] = True
                            q.append((nr, nc))
                comps.append(comp)
    return comps


def largest_component(mask, connectivity: str) -> np.ndarray:
    out = np.zeros_like(mask, dtype=bool)
    comps = components(mask, connectivity)
    if not comps:
        return out
    best = comps[0]
    for comp in comps[1:]:
        if len(comp) > len(best):  # earlier component wins ties
            best = comp
    for r, c in best:
        out[r, c] = True
    return out


def cross_entropy_curve(values) -> dict[int, float]:
    """Li's cross-entropy objective for every integer threshold t (background: <= t).

    Only thresholds leaving both classes populated are returned.
    """
    hist = np.bincount(np.asarray(values, dtype=np.int64).ravel(), minlength=256)
    levels = np.arange(256, dtype=np.float64)
    out = {}
    for t in range(256):
        nb, nf = hist[:t + 1].sum(), hist[t + 1:].sum()
        if nb == 0 or nf == 0:
            continue
        sb = (levels[:t + 1] * hist[:t + 1]).sum()
        sf = (levels[t + 1:] * hist[t + 1:]).sum()
        mb = max(sb / nb, 1e-6)
        mf = max(sf / nf, 1e-6)
        out[t] = -sb * math.log(mb) - sf * math.log(mf)
    return out


def cross_entropy_minimizers(values) -> list[int]:
    curve = cross_entropy_curve(values)
    best = min(curve.values())
    tol = 1e-9 * max(1.0, abs(best))
    return [t for t, v in curve.items() if v <= best + tol]


def li_iterate(values, tolerance=0.5, max_iters=100) -> float:
    """Plain-Python Li iteration over the pixel list."""
    vals = [float(v) for v in np.asarray(values).ravel()]
    t = sum(vals) / len(vals)
    for _ in range(max_iters):
        back = [v for v in vals if v <= t]
        fore = [v for v in vals if v > t]
        mb = max(sum(back) / len(back), 1e-6)
        mf = max(sum(fore) / len(fore), 1e-6)
        nt = (mb - mf) / (math.log(mb) - math.log(mf))
        done = abs(nt - t) < tolerance
        t = nt
        if done:
            break
    return t


def convolve_edge(gray: np.ndarray, kernel1d: np.ndarray) -> np.ndarray:
    """Direct 2-D convolution with the outer-product kernel and clamped indices."""
    H, W = gray.shape
    r = len(kernel1d) // 2
    k2 = np.outer(kernel1d, kernel1d)
    out = np.zeros((H, W))
    for y in range(H):
        for x in range(W):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    yy = min(max(y + dy, 0), H - 1)
                    xx = min(max(x + dx, 0), W - 1)
                    acc += k2[dy + r, dx + r] * gray[yy, xx]
            out[y, x] = acc
    return np.clip(out, 0, 255)


def rasterize_disk(height, width, cy, cx, radius) -> np.ndarray:
    yy, xx = np.mgrid[:height, :width]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2


def noisy_disk_map(rng, size=224, value=220, background=30, noise=10):
    radius = rng.uniform(50, 90)
    cy = rng.uniform(radius + 4, size - radius - 4)
    cx = rng.uniform(radius + 4, size - radius - 4)
    disk = rasterize_disk(size, size, cy, cx, radius)
    gray = np.where(disk, value, background) + rng.uniform(-noise, noise, (size, size))
    return np.clip(gray, 0, 255), disk


def mask_iou(a, b) -> float:
    union = np.count_nonzero(a | b)
    return np.count_nonzero(a & b) / union if union else 1.0
