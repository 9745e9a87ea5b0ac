"""Haar decomposition with a widened step kernel.

The half-width ``n`` kernel has ``2n`` taps: the highpass is ``n`` copies of
``+1/sqrt(2n)`` followed by ``n`` copies of ``-1/sqrt(2n)`` and the lowpass is
``2n`` copies of ``+1/sqrt(2n)``. ``n = 1`` is the classic Haar pair.

Down-sampling keeps a stride of 2 for every ``n``, so windows overlap when
``n > 1`` and every sub-band is exactly half the input side. The signal is
extended by ``n - 1`` samples of half-sample symmetric padding on each side.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels

__all__ = [
    "DIRECTIONS",
    "DetailMap",
    "KernelSpec",
    "combined_detail",
    "decompose_1d",
    "decompose_2d",
    "make_kernel",
    "layer_combined_detail",
    "multilayer_haar",
    "write_detail_csv",
]

DIRECTIONS = ("horizontal", "vertical", "diagonal", "combined", "approximate")


@dataclass(frozen=True)
class KernelSpec:
    half_width: int
    coefficient: float
    lowpass: np.ndarray
    highpass: np.ndarray

    @property
    def width(self) -> int:
        return 2 * self.half_width


@dataclass(frozen=True)
class DetailMap:
    """A grid of wavelet coefficients tagged with its sub-band direction."""

    values: np.ndarray
    direction: str

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def make_kernel(n: int) -> KernelSpec:
    """Build the half-width ``n`` analysis pair."""
    if int(n) != n or n < 1:
        raise ValueError(f"kernel half-width must be an integer >= 1, got {n}")
    n = int(n)
    c = np.sqrt(2.0 * n)
    high = np.concatenate([np.full(n, 1.0 / c), np.full(n, -1.0 / c)])
    low = np.full(2 * n, 1.0 / c)
    high.setflags(write=False)
    low.setflags(write=False)
    return KernelSpec(n, float(c), low, high)


def _pad(arr: np.ndarray, n: int, axis: int) -> np.ndarray:
    if n == 1:
        return arr
    widths = [(0, 0)] * arr.ndim
    widths[axis] = (n - 1, n - 1)
    return np.pad(arr, widths, mode="symmetric")


def _analyse_last_axis(arr: np.ndarray, kernel: KernelSpec):
    padded = np.ascontiguousarray(_pad(arr, kernel.half_width, axis=1))
    return kernels.analysis_rows(padded, kernel.lowpass, kernel.highpass)


def decompose_1d(signal, kernel: KernelSpec):
    """Return ``(approx, detail)`` of an even-length 1-D signal, each of length L/2."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 2 or x.size % 2:
        raise ValueError(f"signal length must be even and >= 2, got shape {x.shape}")
    low, high = _analyse_last_axis(x[None, :], kernel)
    return low[0], high[0]


def decompose_2d(img, kernel: KernelSpec):
    """One separable decomposition level.

    Rows are filtered first (along x), then columns (along y). Returns
    ``(AC, DC_h, DC_v, DC_d)`` where DC_h is lowpass along x and highpass
    along y, DC_v is highpass along x and lowpass along y, DC_d is highpass
    on both. Each output is ``(H/2, W/2)``.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    h, w = arr.shape
    if h < 2 or w < 2 or h % 2 or w % 2:
        raise ValueError(f"image sides must be even and >= 2, got {w}x{h}")
    low_x, high_x = _analyse_last_axis(arr, kernel)
    ll, lh = _analyse_last_axis(np.ascontiguousarray(low_x.T), kernel)
    hl, hh = _analyse_last_axis(np.ascontiguousarray(high_x.T), kernel)
    return (
        DetailMap(ll.T.copy(), "approximate"),
        DetailMap(lh.T.copy(), "horizontal"),
        DetailMap(hl.T.copy(), "vertical"),
        DetailMap(hh.T.copy(), "diagonal"),
    )


def combined_detail(img, kernel: KernelSpec) -> DetailMap:
    """|DC_h| + |DC_v| + |DC_d| of one decomposition level."""
    _, dh, dv, dd = decompose_2d(img, kernel)
    return DetailMap(np.abs(dh.values) + np.abs(dv.values) + np.abs(dd.values), "combined")


def multilayer_haar(img, layers: int):
    """Classic Haar pyramid; returns ``[(DC_h, DC_v, DC_d), ...]`` for layers 1..L."""
    arr = np.asarray(img, dtype=np.float64)
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    step = 2**layers
    if arr.ndim != 2 or arr.shape[0] % step or arr.shape[1] % step:
        raise ValueError(f"image sides must be divisible by {step}, got shape {arr.shape}")
    haar = make_kernel(1)
    out = []
    ac = arr
    for _ in range(layers):
        ac_map, dh, dv, dd = decompose_2d(ac, haar)
        out.append((dh, dv, dd))
        ac = ac_map.values
    return out


def layer_combined_detail(img, layers: int) -> DetailMap:
    """Combined |DC| map of the deepest layer of the classic Haar pyramid."""
    dh, dv, dd = multilayer_haar(img, layers)[-1]
    return DetailMap(np.abs(dh.values) + np.abs(dv.values) + np.abs(dd.values), "combined")


def write_detail_csv(path, detail: DetailMap) -> None:
    """Row-major CSV dump, one grid row per line, six significant digits."""
    rows = (",".join(f"{v:.6g}" for v in row) for row in detail.values)
    Path(path).write_text("\n".join(rows) + "\n")
