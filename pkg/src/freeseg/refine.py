"""Gray co-segmentation map -> single clean binary mask.

The procedure is: Gaussian blur, Li minimum cross-entropy threshold,
binarize, opening/closing, then keep only the largest connected component.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import ndimage

from .masks import as_graymap, as_mask

MorphOrder = Literal["open_then_close", "close_then_open"]
Connectivity = Literal["four", "eight"]

# Replaces an empty class mean of 0 before taking its log.
LI_EPS = 1e-6


class NoThresholdError(ValueError):
    """The map is constant, so no foreground/background split exists."""


@dataclass(frozen=True)
class RefineConfig:
    gaussian_sigma: float = 2.0
    gaussian_radius: int | None = None
    morph_kernel: int = 1
    morph_order: MorphOrder = "open_then_close"
    li_tolerance: float = 0.5
    li_max_iters: int = 100
    connectivity: Connectivity = "eight"

    def __post_init__(self):
        if self.gaussian_radius is None:
            object.__setattr__(self, "gaussian_radius", 2 * math.ceil(self.gaussian_sigma))
        if not self.gaussian_sigma > 0:
            raise ValueError("gaussian_sigma must be > 0")
        if self.gaussian_radius < 1:
            raise ValueError("gaussian_radius must be >= 1")
        if self.morph_kernel < 0:
            raise ValueError("morph_kernel must be >= 0")
        if not self.li_tolerance > 0:
            raise ValueError("li_tolerance must be > 0")
        if self.li_max_iters < 1:
            raise ValueError("li_max_iters must be >= 1")
        if self.morph_order not in ("open_then_close", "close_then_open"):
            raise ValueError(f"unknown morph_order {self.morph_order!r}")
        if self.connectivity not in ("four", "eight"):
            raise ValueError(f"unknown connectivity {self.connectivity!r}")


def gaussian_kernel(sigma: float, radius: int) -> np.ndarray:
    """Normalized 1-D Gaussian weights for offsets ``-radius .. radius``."""
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(data: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = kernel.size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(data, pad, mode="edge")
    n = data.shape[axis]
    out = np.zeros_like(data, dtype=np.float64)
    for i, w in enumerate(kernel):
        out += w * (padded[i:i + n, :] if axis == 0 else padded[:, i:i + n])
    return out


def gaussian_filter(gray: np.ndarray, sigma: float = 2.0, radius: int | None = None) -> np.ndarray:
    """Separable Gaussian blur with edge replication; output clamped to [0, 255]."""
    gray = as_graymap(gray)
    if radius is None:
        radius = 2 * math.ceil(sigma)
    if gray.size == 0:
        return gray.copy()
    k = gaussian_kernel(sigma, radius)
    out = _convolve_axis(_convolve_axis(gray, k, axis=1), k, axis=0)
    return np.clip(out, 0.0, 255.0)


def li_threshold(gray: np.ndarray, tolerance: float = 0.5, max_iters: int = 100) -> float:
    """Li's iterative minimum cross-entropy threshold.

    Starts from the mean intensity and iterates
    ``t <- (m_b - m_f) / (ln m_b - ln m_f)`` where ``m_b`` and ``m_f`` are the
    means of pixels ``<= t`` and ``> t``. Only the histogram matters.
    """
    values = np.sort(np.asarray(gray, dtype=np.float64).ravel())
    if values.size == 0 or values[0] == values[-1]:
        raise NoThresholdError("constant map has no threshold")
    csum = np.cumsum(values)
    total = csum[-1]
    n = values.size

    t = total / n
    for _ in range(max_iters):
        k = int(np.searchsorted(values, t, side="right"))
        # t always lies strictly inside (min, max), so both classes are populated
        k = min(max(k, 1), n - 1)
        mean_b = csum[k - 1] / k
        mean_f = (total - csum[k - 1]) / (n - k)
        mean_b = mean_b if mean_b > 0 else LI_EPS
        mean_f = mean_f if mean_f > 0 else LI_EPS
        t_next = (mean_b - mean_f) / (math.log(mean_b) - math.log(mean_f))
        converged = abs(t_next - t) < tolerance
        t = t_next
        if converged:
            break
    return float(t)


def binarize(gray: np.ndarray, threshold: float) -> np.ndarray:
    return np.asarray(gray) > threshold


def _shift_reduce(mask: np.ndarray, halfwidth: int, axis: int, op, fill: bool) -> np.ndarray:
    pad = [(0, 0), (0, 0)]
    pad[axis] = (halfwidth, halfwidth)
    padded = np.pad(mask, pad, mode="constant", constant_values=fill)
    n = mask.shape[axis]
    out = padded[:n, :].copy() if axis == 0 else padded[:, :n].copy()
    for i in range(1, 2 * halfwidth + 1):
        op(out, padded[i:i + n, :] if axis == 0 else padded[:, i:i + n], out=out)
    return out


def dilate(mask: np.ndarray, halfwidth: int = 1) -> np.ndarray:
    """Square-element dilation; pixels beyond the border count as background."""
    mask = as_mask(mask)
    if halfwidth == 0 or mask.size == 0:
        return mask.copy()
    rows = _shift_reduce(mask, halfwidth, 1, np.logical_or, False)
    return _shift_reduce(rows, halfwidth, 0, np.logical_or, False)


def erode(mask: np.ndarray, halfwidth: int = 1) -> np.ndarray:
    """Square-element erosion; pixels beyond the border count as background,
    so foreground within ``halfwidth`` of the edge is always eroded."""
    mask = as_mask(mask)
    if halfwidth == 0 or mask.size == 0:
        return mask.copy()
    rows = _shift_reduce(mask, halfwidth, 1, np.logical_and, False)
    return _shift_reduce(rows, halfwidth, 0, np.logical_and, False)


def opening(mask: np.ndarray, halfwidth: int = 1) -> np.ndarray:
    return dilate(erode(mask, halfwidth), halfwidth)


def closing(mask: np.ndarray, halfwidth: int = 1) -> np.ndarray:
    return erode(dilate(mask, halfwidth), halfwidth)


_STRUCTURES = {
    "four": ndimage.generate_binary_structure(2, 1),
    "eight": ndimage.generate_binary_structure(2, 2),
}


def largest_connected_component(mask: np.ndarray, connectivity: Connectivity = "eight") -> np.ndarray:
    """Keep only the biggest component; ties go to the one seen first in row-major order."""
    mask = as_mask(mask)
    labels, n = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    if n == 0:
        return np.zeros_like(mask)
    flat = labels.ravel()
    sizes = np.bincount(flat, minlength=n + 1)
    sizes[0] = 0
    ids, first = np.unique(flat, return_index=True)
    first_seen = np.full(n + 1, flat.size, dtype=np.int64)
    first_seen[ids] = first
    best = max(range(1, n + 1), key=lambda lab: (sizes[lab], -first_seen[lab]))
    return labels == best


def refine_segment(gray: np.ndarray, cfg: RefineConfig | None = None) -> np.ndarray:
    """Full refinement. Returns an all-false mask when nothing survives;
    raises :class:`NoThresholdError` for a constant map."""
    cfg = cfg or RefineConfig()
    blurred = gaussian_filter(gray, cfg.gaussian_sigma, cfg.gaussian_radius)
    t = li_threshold(blurred, cfg.li_tolerance, cfg.li_max_iters)
    mask = binarize(blurred, t)
    if cfg.morph_order == "open_then_close":
        mask = closing(opening(mask, cfg.morph_kernel), cfg.morph_kernel)
    else:
        mask = opening(closing(mask, cfg.morph_kernel), cfg.morph_kernel)
    return largest_connected_component(mask, cfg.connectivity)
