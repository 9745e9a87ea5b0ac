"""Gray image container helpers, filtering, resizing, noise and image I/O.

A gray image is a 2-D ``float64`` ndarray on the 0-255 scale, indexed
``[row, column]``. Functions here never modify their input.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

__all__ = [
    "ImageFormatError",
    "NoiseSpec",
    "add_noise",
    "as_gray",
    "extract_green",
    "median_filter",
    "read_image",
    "resize",
    "write_image",
]


class ImageFormatError(ValueError):
    """Raised for images with the wrong shape, channel count or file format."""


def as_gray(img) -> np.ndarray:
    """Validate ``img`` as a gray image and return it as a float64 array."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ImageFormatError(f"expected a 2-D gray image, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ImageFormatError("image must be at least 1x1")
    if not np.all(np.isfinite(arr)):
        raise ImageFormatError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 255.0:
        raise ImageFormatError("intensities must lie in [0, 255]")
    return arr


def extract_green(rgb) -> np.ndarray:
    """Return the green channel of an ``(H, W, 3)`` image unchanged."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageFormatError(f"expected an (H, W, 3) RGB image, got shape {arr.shape}")
    return as_gray(arr[:, :, 1])


def median_filter(img, window: int = 3) -> np.ndarray:
    """Median over a ``window`` x ``window`` neighbourhood with edge replication."""
    arr = as_gray(img)
    if window < 1 or window % 2 == 0:
        raise ValueError(f"median window must be odd and >= 1, got {window}")
    if window > min(arr.shape):
        raise ValueError(f"median window {window} exceeds image size {arr.shape}")
    return ndimage.median_filter(arr, size=window, mode="nearest")


def _bilinear_axis(n_in: int, n_out: int):
    # corner-aligned sample positions; a single output sample sits at the centre
    if n_out == 1:
        pos = np.array([(n_in - 1) / 2.0])
    else:
        pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    lo = np.clip(np.floor(pos).astype(np.intp), 0, n_in - 1)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize(img, new_width: int, new_height: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling (same size is the identity)."""
    arr = as_gray(img)
    if new_width < 1 or new_height < 1:
        raise ValueError(f"target size must be >= 1, got {new_width}x{new_height}")
    h, w = arr.shape
    if (new_height, new_width) == (h, w):
        return arr.copy()
    r0, r1, fr = _bilinear_axis(h, new_height)
    c0, c1, fc = _bilinear_axis(w, new_width)
    top = arr[r0][:, c0] * (1.0 - fc) + arr[r0][:, c1] * fc
    bot = arr[r1][:, c0] * (1.0 - fc) + arr[r1][:, c1] * fc
    out = top * (1.0 - fr)[:, None] + bot * fr[:, None]
    return np.clip(out, 0.0, 255.0)


@dataclass(frozen=True)
class NoiseSpec:
    """Noise model for the robustness protocol.

    ``mean`` and ``sigma`` act on intensities rescaled to [0, 1]; ``density``
    is the fraction of pixels hit by salt-and-pepper noise.
    """

    kind: str
    mean: float = 0.0
    sigma: float = 1e-3
    density: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "salt_pepper", "speckle"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density must be in [0, 1], got {self.density}")
        if self.sigma < 0.0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")

    def with_seed(self, seed: int) -> "NoiseSpec":
        return NoiseSpec(self.kind, self.mean, self.sigma, self.density, seed)


def add_noise(img, spec: NoiseSpec) -> np.ndarray:
    """Corrupt ``img`` according to ``spec``; deterministic in ``spec.seed``."""
    arr = as_gray(img)
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "gaussian":
        # img/255 + N(mean, sigma) rescaled back, written so zero noise is exact
        noise = rng.normal(spec.mean, spec.sigma, size=arr.shape) if spec.sigma > 0 else spec.mean
        out = arr + 255.0 * noise
    elif spec.kind == "speckle":
        noise = rng.normal(0.0, spec.sigma, size=arr.shape) if spec.sigma > 0 else 0.0
        out = arr * (1.0 + noise)
    else:
        out = arr.copy()
        count = int(np.floor(spec.density * arr.size))
        if count:
            idx = rng.choice(arr.size, size=count, replace=False)
            out.flat[idx] = rng.integers(0, 2, size=count) * 255.0
    return np.clip(out, 0.0, 255.0)


# --------------------------------------------------------------------------
# I/O: binary PGM (P5) and PNG


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ImageFormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte before the raster
    if tokens[0] != b"P5":
        raise ImageFormatError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ImageFormatError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    raster = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raster.reshape(height, width).astype(np.float64)


def _write_pgm(path: Path, arr: np.ndarray) -> None:
    h, w = arr.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    path.write_bytes(header + _to_uint8(arr).tobytes())


def _to_uint8(arr: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(arr), 0, 255).astype(np.uint8)


def read_image(path) -> np.ndarray:
    """Read an 8-bit PGM or PNG as a gray image; RGB inputs keep the green channel."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return _read_pgm(path)
    if suffix == ".png":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode in ("RGB", "RGBA"):
                return extract_green(np.asarray(im.convert("RGB")))
            if im.mode == "L":
                return np.asarray(im, dtype=np.float64)
            raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode}")
    raise ImageFormatError(f"{path}: unsupported image extension {suffix!r}")


def write_image(path, img) -> None:
    """Write a gray image (rounded to 8 bits) as PGM or PNG by extension."""
    path = Path(path)
    arr = as_gray(img)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        _write_pgm(path, arr)
    elif suffix == ".png":
        from PIL import Image

        Image.fromarray(_to_uint8(arr)).save(path)
    else:
        raise ImageFormatError(f"{path}: unsupported image extension {suffix!r}")
