"""Personal-information scrubbing, retina ROI segmentation and square normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import kernels
from .imaging import as_gray, median_filter, resize

__all__ = [
    "PreprocessError",
    "RetinaROI",
    "SegmentationError",
    "fit_ellipse",
    "prepare",
    "remove_personal_info",
    "segment_roi",
    "square_normalize",
]


class PreprocessError(ValueError):
    pass


class SegmentationError(PreprocessError):
    pass


@dataclass(frozen=True)
class RetinaROI:
    center: tuple  # (x, y) in pixels, x along columns
    semi_major: float
    semi_minor: float
    angle: float  # radians, direction of the major axis from the +x axis
    mask: np.ndarray

    def extents(self):
        """Full bounding-box width and height ``(W, H)`` of the ellipse."""
        a, b, t = self.semi_major, self.semi_minor, self.angle
        w = 2.0 * np.sqrt((a * np.cos(t)) ** 2 + (b * np.sin(t)) ** 2)
        h = 2.0 * np.sqrt((a * np.sin(t)) ** 2 + (b * np.cos(t)) ** 2)
        return float(w), float(h)

    def contains(self, x, y):
        """Boolean test of points ``(x, y)`` against the ellipse interior."""
        cx, cy = self.center
        c, s = np.cos(self.angle), np.sin(self.angle)
        dx = np.asarray(x, dtype=np.float64) - cx
        dy = np.asarray(y, dtype=np.float64) - cy
        u = dx * c + dy * s
        v = -dx * s + dy * c
        return (u / self.semi_major) ** 2 + (v / self.semi_minor) ** 2 <= 1.0


def remove_personal_info(img, intensity_threshold: float = 200, seed: int = 0, neighbours: int = 100) -> np.ndarray:
    """Replace burned-in text in the top-left ``m/4 x n/2`` corner by local background.

    Pixels above ``intensity_threshold`` inside the corner are labelled. M is
    the mean of the ``neighbours`` unlabelled corner pixels closest to the
    labelled set's centroid, and labelled pixels become uniform draws from
    ``[M - 8, M + 8]``.
    """
    arr = as_gray(img)
    m, n = arr.shape
    if m < 8 or n < 8:
        raise PreprocessError(f"image must be at least 8x8, got {n}x{m}")
    rows, cols = max(1, m // 4), max(1, n // 2)
    corner = arr[:rows, :cols]
    labelled = corner > intensity_threshold
    if not labelled.any():
        return arr.copy()
    free = ~labelled
    if not free.any():
        raise PreprocessError("personal-info label covers the whole corner; no background to sample")
    ly, lx = np.nonzero(labelled)
    fy, fx = np.nonzero(free)
    d2 = (fy - ly.mean()) ** 2 + (fx - lx.mean()) ** 2
    k = min(neighbours, d2.size)
    nearest = np.argpartition(d2, k - 1)[:k]
    level = corner[fy[nearest], fx[nearest]].mean()
    rng = np.random.default_rng(seed)
    out = arr.copy()
    out[ly, lx] = np.clip(rng.uniform(level - 8.0, level + 8.0, size=ly.size), 0.0, 255.0)
    return out


def fit_ellipse(x, y):
    """Direct least-squares ellipse fit (numerically stable form).

    Returns ``(cx, cy, semi_major, semi_minor, angle)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 5:
        raise SegmentationError(f"ellipse fit needs at least 5 points, got {x.size}")
    mx, my = x.mean(), y.mean()
    pts = np.column_stack([x - mx, y - my])
    sv = np.linalg.svd(pts, compute_uv=False)
    if sv[0] == 0 or sv[-1] / sv[0] < 1e-9:
        raise SegmentationError("boundary points are collinear")
    scale = np.sqrt(np.mean(np.sum(pts**2, axis=1)))
    u, v = pts[:, 0] / scale, pts[:, 1] / scale

    D1 = np.column_stack([u * u, u * v, v * v])
    D2 = np.column_stack([u, v, np.ones_like(u)])
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError as exc:
        raise SegmentationError("degenerate boundary for ellipse fit") from exc
    M = S1 + S2 @ T
    M = np.vstack([M[2] / 2.0, -M[1], M[0] / 2.0])
    _, vecs = np.linalg.eig(M)
    vecs = np.real(vecs)
    cond = 4.0 * vecs[0] * vecs[2] - vecs[1] ** 2
    ok = np.nonzero(cond > 0)[0]
    if ok.size == 0:
        raise SegmentationError("no elliptical solution for the boundary points")
    a1 = vecs[:, ok[0]]
    a, b, c = a1
    d, e, f = T @ a1

    A = np.array([[2 * a, b], [b, 2 * c]])
    try:
        cu, cv = np.linalg.solve(A, [-d, -e])
    except np.linalg.LinAlgError as exc:
        raise SegmentationError("degenerate conic") from exc
    f0 = f + (d * cu + e * cv) / 2.0
    lam, evec = np.linalg.eigh(np.array([[a, b / 2.0], [b / 2.0, c]]))
    ax2 = -f0 / lam
    if np.any(ax2 <= 0) or not np.all(np.isfinite(ax2)):
        raise SegmentationError("fitted conic is not a real ellipse")
    axes = np.sqrt(ax2) * scale
    major = int(np.argmax(axes))
    vx, vy = evec[:, major]
    angle = float(np.arctan2(vy, vx))
    # fold into (-pi/2, pi/2]
    if angle <= -np.pi / 2:
        angle += np.pi
    elif angle > np.pi / 2:
        angle -= np.pi
    return (
        float(cu * scale + mx),
        float(cv * scale + my),
        float(axes[major]),
        float(axes[1 - major]),
        angle,
    )


def _boundary_points(component: np.ndarray):
    # midpoints of the pixel edges separating the component from the outside
    padded = np.pad(component, 1)
    xs, ys = [], []
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        neighbour = padded[1 + dy : padded.shape[0] - 1 + dy, 1 + dx : padded.shape[1] - 1 + dx]
        py, px = np.nonzero(component & ~neighbour)
        xs.append(px + 0.5 * dx)
        ys.append(py + 0.5 * dy)
    return np.concatenate(xs), np.concatenate(ys)


def segment_roi(img, background_threshold: float = 15) -> RetinaROI:
    """Threshold, keep the largest 8-connected region and fit an ellipse to its rim."""
    arr = as_gray(img)
    fg = np.ascontiguousarray(arr > background_threshold)
    labels, sizes = kernels.label_components(fg, True)
    if sizes.size < 2 or sizes[1:].max() == 0:
        raise SegmentationError("no foreground above the background threshold")
    largest = int(np.argmax(sizes[1:])) + 1
    component = ndimage.binary_fill_holes(labels == largest)
    bx, by = _boundary_points(component)
    if bx.size < 5:
        raise SegmentationError(f"only {bx.size} boundary points; ellipse fit needs 5")
    cx, cy, major, minor, angle = fit_ellipse(bx, by)
    h, w = arr.shape
    yy, xx = np.mgrid[0:h, 0:w]
    roi = RetinaROI((cx, cy), major, minor, angle, np.zeros((h, w), bool))
    mask = roi.contains(xx, yy)
    if not mask.any():
        raise SegmentationError("fitted ellipse covers no pixel")
    return RetinaROI((cx, cy), major, minor, angle, mask)


def square_normalize(img, roi: RetinaROI) -> np.ndarray:
    """Crop to the ROI bounding box and stretch the short side to the long one.

    The result is ``N x N`` with ``N = round(max(W, H))``; pixels outside the
    ellipse are set to 0.
    """
    arr = as_gray(img)
    w_box, h_box = roi.extents()
    wi, hi = int(round(w_box)), int(round(h_box))
    if wi < 1 or hi < 1:
        raise PreprocessError("ROI bounding box is empty")
    n = max(wi, hi)
    cx, cy = roi.center
    left = int(round(cx - w_box / 2.0))
    top = int(round(cy - h_box / 2.0))

    h, w = arr.shape
    crop = np.zeros((hi, wi))
    r0, r1 = max(top, 0), min(top + hi, h)
    c0, c1 = max(left, 0), min(left + wi, w)
    if r1 > r0 and c1 > c0:
        crop[r0 - top : r1 - top, c0 - left : c1 - left] = arr[r0:r1, c0:c1]
    out = resize(crop, n, n)

    # source coordinates of the output pixels, matching resize's sampling
    sx = left + (np.arange(n) * ((wi - 1) / (n - 1)) if n > 1 else np.array([(wi - 1) / 2.0]))
    sy = top + (np.arange(n) * ((hi - 1) / (n - 1)) if n > 1 else np.array([(hi - 1) / 2.0]))
    inside = roi.contains(sx[None, :], sy[:, None])
    out[~inside] = 0.0
    return out


def prepare(
    img,
    side: int = 256,
    info_threshold: float = 200,
    background_threshold: float = 15,
    median_window: int = 3,
    seed: int = 0,
) -> np.ndarray:
    """Full preprocessing chain ending in a ``side`` x ``side`` square retina."""
    clean = remove_personal_info(img, info_threshold, seed)
    smooth = median_filter(clean, median_window)
    roi = segment_roi(smooth, background_threshold)
    square = square_normalize(smooth, roi)
    return resize(square, side, side)
