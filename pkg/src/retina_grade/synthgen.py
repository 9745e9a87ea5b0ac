"""Seeded retina-like test images with four controlled blur grades.

Each image is a bright disc-shaped retina on a black frame with an optic
disc, a branching tree of dark vessels and fine background texture. The
grade controls a Gaussian blur and a mild contrast loss applied to the
retina content before the circular aperture is cut, so the rim stays sharp
for every grade. All random structure depends only on the seed, never on
the grade, so one seed rendered at grades 1..4 gives the same retina
progressively degraded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from ._seeding import derive_seed
from .imaging import write_image

__all__ = ["SynthSpec", "generate", "generate_dataset", "laplacian_energy", "write_dataset"]

DEFAULT_SIGMAS = (0.5, 1.6, 3.0, 5.5)


@dataclass(frozen=True)
class SynthSpec:
    grade: int
    side: int = 256
    seed: int = 0
    blur_sigma_by_grade: tuple = DEFAULT_SIGMAS
    vessel_count: int = 4
    disc_radius: float | None = None
    background_level: float = 95.0

    def __post_init__(self):
        if self.grade not in (1, 2, 3, 4):
            raise ValueError(f"grade must be 1..4, got {self.grade}")
        if self.side < 16 or self.side % 8:
            raise ValueError(f"side must be a multiple of 8 and >= 16, got {self.side}")
        s = tuple(self.blur_sigma_by_grade)
        if len(s) != 4 or any(b <= a for a, b in zip(s, s[1:])) or s[0] < 0:
            raise ValueError(f"blur sigmas must be 4 strictly increasing values >= 0, got {s}")
        if self.vessel_count < 0:
            raise ValueError("vessel_count must be >= 0")
        if not 20.0 <= self.background_level <= 200.0:
            raise ValueError("background_level must lie in [20, 200]")


def _stamp_segment(depth_map, x0, y0, x1, y1, width, depth):
    # keep the darkest contribution of a Gaussian-profile stroke
    sigma = max(width / 2.0, 0.35)
    reach = 3.0 * sigma
    h, w = depth_map.shape
    c0 = max(int(np.floor(min(x0, x1) - reach)), 0)
    c1 = min(int(np.ceil(max(x0, x1) + reach)) + 1, w)
    r0 = max(int(np.floor(min(y0, y1) - reach)), 0)
    r1 = min(int(np.ceil(max(y0, y1) + reach)) + 1, h)
    if c1 <= c0 or r1 <= r0:
        return
    yy, xx = np.mgrid[r0:r1, c0:c1]
    dx, dy = x1 - x0, y1 - y0
    seg2 = dx * dx + dy * dy
    t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / seg2, 0.0, 1.0) if seg2 > 0 else 0.0
    px, py = x0 + t * dx, y0 + t * dy
    d2 = (xx - px) ** 2 + (yy - py) ** 2
    prof = depth * np.exp(-d2 / (2.0 * sigma * sigma))
    np.maximum(depth_map[r0:r1, c0:c1], prof, out=depth_map[r0:r1, c0:c1])


def _grow_vessels(rng, depth_map, start, heading, width, depth, cx, cy, radius, budget):
    stack = [(start[0], start[1], heading, width, depth)]
    while stack and budget[0] > 0:
        x, y, th, wd, dp = stack.pop()
        step = 2.5
        while wd >= 0.7 and budget[0] > 0:
            th += rng.normal(0.0, 0.18)
            nx, ny = x + step * np.cos(th), y + step * np.sin(th)
            if (nx - cx) ** 2 + (ny - cy) ** 2 > (radius * 1.02) ** 2:
                break
            _stamp_segment(depth_map, x, y, nx, ny, wd, dp)
            budget[0] -= 1
            x, y = nx, ny
            wd *= 0.993
            if rng.random() < 0.035:
                side = 1.0 if rng.random() < 0.5 else -1.0
                stack.append((x, y, th + side * rng.uniform(0.4, 1.0), wd * 0.72, dp * 0.85))
                th -= side * rng.uniform(0.1, 0.35)
                wd *= 0.9


def _render_sharp(spec: SynthSpec, rng):
    side = spec.side
    cx = cy = (side - 1) / 2.0
    radius = 0.45 * side
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    rr = np.hypot(xx - cx, yy - cy) / radius

    level = spec.background_level * rng.uniform(0.9, 1.1)
    base = level * (1.0 - 0.18 * rr**2)
    low = ndimage.gaussian_filter(rng.normal(size=(side, side)), side / 10.0, mode="reflect")
    base += 8.0 * low / (np.abs(low).max() + 1e-12)
    texture = ndimage.gaussian_filter(rng.normal(size=(side, side)), 1.0)
    base += 3.5 * texture / (texture.std() + 1e-12)

    disc_r = spec.disc_radius if spec.disc_radius is not None else 0.075 * side
    side_sign = 1.0 if rng.random() < 0.5 else -1.0
    dx = cx + side_sign * radius * rng.uniform(0.35, 0.5)
    dy = cy + radius * rng.uniform(-0.1, 0.1)
    disc = np.hypot((xx - dx) / 1.0, (yy - dy) / 1.15) / disc_r
    base += 55.0 * np.clip(1.2 - disc, 0.0, 1.0) / 1.2

    depth_map = np.zeros((side, side))
    contrast = rng.uniform(26.0, 34.0)
    budget = [int(6 * side)]
    for k in range(spec.vessel_count):
        heading = 2.0 * np.pi * k / max(spec.vessel_count, 1) + rng.uniform(-0.5, 0.5)
        _grow_vessels(
            rng, depth_map, (dx, dy), heading, side / 64.0 * rng.uniform(0.9, 1.1),
            contrast, cx, cy, radius, budget,
        )
    inside = rr <= 1.0
    return base - depth_map, inside


def generate(spec: SynthSpec):
    """Render one image; returns ``(image, grade)``."""
    rng = np.random.default_rng(spec.seed)
    sharp, inside = _render_sharp(spec, rng)
    jitter = rng.uniform(0.85, 1.15)
    sigma = spec.blur_sigma_by_grade[spec.grade - 1] * jitter
    blurred = ndimage.gaussian_filter(sharp, sigma, mode="reflect") if sigma > 0 else sharp
    mean = blurred[inside].mean()
    img = mean + (blurred - mean) * (1.0 - 0.06 * (spec.grade - 1))
    img = np.clip(np.rint(img), 0.0, 255.0)
    img[~inside] = 0.0
    return img, spec.grade


def generate_dataset(per_class: int, side: int = 256, master_seed: int = 0, **spec_kw):
    """``per_class`` images per grade; returns a list of ``(image, grade, seed)``."""
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    out = []
    for grade in (1, 2, 3, 4):
        for i in range(per_class):
            seed = derive_seed(master_seed, "synth", grade, i)
            img, g = generate(SynthSpec(grade=grade, side=side, seed=seed, **spec_kw))
            out.append((img, g, seed))
    return out


def write_dataset(records, out_dir, fmt: str = "pgm") -> Path:
    """Write images plus ``manifest.csv`` (``path,grade,seed``); returns the manifest path."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir():
        raise FileNotFoundError(f"output directory does not exist: {out_dir}")
    manifest = out_dir / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "grade", "seed"])
        for k, (img, grade, seed) in enumerate(records):
            name = f"img_{k:05d}_g{grade}.{fmt}"
            write_image(out_dir / name, img)
            writer.writerow([name, grade, seed])
    return manifest


def laplacian_energy(img) -> float:
    """Mean squared 4-neighbour discrete Laplacian (a sharpness proxy)."""
    a = np.asarray(img, dtype=np.float64)
    lap = a[1:-1, :-2] + a[1:-1, 2:] + a[:-2, 1:-1] + a[2:, 1:-1] - 4.0 * a[1:-1, 1:-1]
    return float(np.mean(lap * lap))
