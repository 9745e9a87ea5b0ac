"""Annular-mask features from a combined detail map.

Pipeline per image: combined detail -> strict threshold -> drop 8-connected
regions smaller than ``min_size`` -> count surviving pixels in each of
``ring_count`` equal-width concentric rings. Pixels beyond the outer radius
(the square's corners) are folded into the outermost ring.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import kernels
from .wavelet import DetailMap, KernelSpec, combined_detail

__all__ = [
    "BinaryMap",
    "annular_features",
    "binarize",
    "extract_features",
    "feature_stack",
    "remove_small_components",
    "ring_areas",
    "ring_index_map",
    "write_feature_csv",
]

DEFAULT_RINGS = 20
DEFAULT_MIN_SIZE = 10


@dataclass(frozen=True)
class BinaryMap:
    bits: np.ndarray

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


def binarize(detail: DetailMap, threshold: float) -> BinaryMap:
    """Keep coefficients strictly greater than ``threshold``."""
    if detail.direction != "combined":
        raise ValueError(f"binarize needs a combined detail map, got {detail.direction!r}")
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    return BinaryMap(detail.values > threshold)


def remove_small_components(bin: BinaryMap, min_size: int = DEFAULT_MIN_SIZE, eight: bool = True) -> BinaryMap:
    """Clear connected regions with fewer than ``min_size`` pixels."""
    labels, sizes = kernels.label_components(np.ascontiguousarray(bin.bits), eight)
    keep = sizes >= min_size
    keep[0] = False
    return BinaryMap(keep[labels])


@lru_cache(maxsize=32)
def _ring_index_cached(height: int, width: int, rings: int) -> np.ndarray:
    side = min(width, height)
    radius = side / 2.0
    ring_width = radius / rings
    yy, xx = np.mgrid[0:height, 0:width]
    d = np.hypot(xx - (width - 1) / 2.0, yy - (height - 1) / 2.0)
    idx = np.minimum(np.floor(d / ring_width).astype(np.int64), rings - 1)
    idx.setflags(write=False)
    return idx


def ring_index_map(height: int, width: int, rings: int = DEFAULT_RINGS) -> np.ndarray:
    """0-based ring id of every pixel of a ``height`` x ``width`` grid."""
    if rings < 1:
        raise ValueError(f"ring_count must be >= 1, got {rings}")
    return _ring_index_cached(int(height), int(width), int(rings))


def ring_areas(height: int, width: int, rings: int = DEFAULT_RINGS) -> np.ndarray:
    """Pixel count of every ring, i.e. the features of an all-true map."""
    return np.bincount(ring_index_map(height, width, rings).ravel(), minlength=rings)


def annular_features(bin: BinaryMap, ring_count: int = DEFAULT_RINGS) -> np.ndarray:
    """Per-ring counts of true pixels; index 0 is the innermost ring."""
    if ring_count < 1:
        raise ValueError(f"ring_count must be >= 1, got {ring_count}")
    if abs(bin.width - bin.height) > 1:
        raise ValueError(f"annular masks need a square map, got {bin.width}x{bin.height}")
    idx = ring_index_map(bin.height, bin.width, ring_count)
    bits = np.ascontiguousarray(bin.bits)
    return kernels.ring_histogram(bits, idx, ring_count)


def extract_features(
    img,
    kernel: KernelSpec,
    threshold: float,
    ring_count: int = DEFAULT_RINGS,
    min_size: int = DEFAULT_MIN_SIZE,
    eight: bool = True,
) -> np.ndarray:
    """Raw ring counts of a square-normalized image at one threshold."""
    detail = combined_detail(img, kernel)
    cleaned = remove_small_components(binarize(detail, threshold), min_size, eight)
    return annular_features(cleaned, ring_count)


def feature_stack(
    detail: DetailMap,
    thresholds,
    ring_count: int = DEFAULT_RINGS,
    min_size: int = DEFAULT_MIN_SIZE,
    eight: bool = True,
) -> np.ndarray:
    """Ring counts for every threshold at once, shape ``(len(thresholds), ring_count)``.

    Equivalent to looping binarize / remove_small_components /
    annular_features, but runs as one kernel.
    """
    if detail.direction != "combined":
        raise ValueError(f"feature_stack needs a combined detail map, got {detail.direction!r}")
    thr = np.asarray(thresholds, dtype=np.float64)
    if thr.ndim != 1 or np.any(thr < 0):
        raise ValueError("thresholds must be a 1-D sequence of non-negative values")
    h, w = detail.values.shape
    if abs(w - h) > 1:
        raise ValueError(f"annular masks need a square map, got {w}x{h}")
    idx = ring_index_map(h, w, ring_count)
    values = np.ascontiguousarray(detail.values)
    return kernels.threshold_stack(values, thr, idx, ring_count, min_size, eight)


def write_feature_csv(path, counts) -> None:
    lines = ["mask_index,count"]
    lines += [f"{k + 1},{int(c)}" for k, c in enumerate(counts)]
    Path(path).write_text("\n".join(lines) + "\n")
