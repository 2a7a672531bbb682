"""Synthetic test images: smooth head-like phantom, circular lesion, Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from bifs.errors import ConfigError
from bifs.grid import check_image

KINDS = ("smooth_blobs", "flat")

# Bump layout in units of the support radius: (row offset, col offset,
# radius, amplitude). Fixed so every run sees the same structure.
_BLOB_SEED = 20211


def _bump(dist):
    """Compactly supported C2 bump, 1 at 0 and exactly 0 beyond 1."""
    t = np.clip(1.0 - dist * dist, 0.0, None)
    return t**3


def _plateau(dist, inner=0.75):
    """1 inside `inner`, smooth C1 taper to 0 at 1, 0 beyond."""
    t = np.clip((1.0 - dist) / (1.0 - inner), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def make_phantom(rows: int, cols: int, kind: str = "smooth_blobs") -> np.ndarray:
    """Deterministic synthetic base image.

    ``smooth_blobs`` is an elliptical head-like plateau with a few smooth
    internal bumps, scaled to a maximum of 1 and exactly zero outside an
    ellipse that keeps clear of a border ring 15% of each dimension wide.
    ``flat`` is all zeros.
    """
    if rows < 32 or cols < 32:
        raise ConfigError(f"phantom dims must be >= 32, got {rows}x{cols}")
    if kind not in KINDS:
        raise ConfigError(f"unknown phantom kind {kind!r}; choose from {KINDS}")
    if kind == "flat":
        return np.zeros((rows, cols))

    y = (np.arange(rows) - (rows - 1) / 2.0) / (0.35 * rows)
    x = (np.arange(cols) - (cols - 1) / 2.0) / (0.35 * cols)
    yy, xx = np.meshgrid(y, x, indexing="ij")
    head_y, head_x = 1.0, 0.82
    img = 0.6 * _plateau(np.hypot(yy / head_y, xx / head_x))

    rng = np.random.default_rng(_BLOB_SEED)
    for _ in range(6):
        ang = rng.uniform(-np.pi, np.pi)
        rad = rng.uniform(0.0, 0.45)
        cy, cx = rad * np.sin(ang) * head_y, rad * np.cos(ang) * head_x
        width = rng.uniform(0.15, 0.3)
        amp = rng.uniform(-0.3, 0.4)
        img += amp * _bump(np.hypot(yy - cy, xx - cx) / width)
    img = np.clip(img, 0.0, None)
    return img / img.max()


@dataclass(frozen=True)
class DiskSpec:
    """Circular intensity change centered at pixel ``(row, col)``."""

    row: float
    col: float
    radius: float
    delta: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"disk radius must be positive, got {self.radius}")

    def mask(self, rows: int, cols: int) -> np.ndarray:
        ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
        return (ii - self.row) ** 2 + (jj - self.col) ** 2 <= self.radius**2


def add_disk(img, d: DiskSpec) -> np.ndarray:
    """Add `d.delta` to every pixel within `d.radius` of the disk center."""
    img = check_image(img)
    rows, cols = img.shape
    if (d.row - d.radius < 0 or d.col - d.radius < 0
            or d.row + d.radius > rows - 1 or d.col + d.radius > cols - 1):
        raise ConfigError(f"disk {d} does not fit inside a {rows}x{cols} image")
    out = img.copy()
    out[d.mask(rows, cols)] += d.delta
    return out


def default_disk(img) -> DiskSpec:
    """Radius-10 lesion in the upper-left quadrant, +30% of the image maximum.

    For small images the radius shrinks to keep the disk inside the
    quadrant.
    """
    rows, cols = np.shape(img)
    radius = min(10.0, 0.15 * min(rows, cols))
    return DiskSpec(row=round(0.36 * rows), col=round(0.36 * cols), radius=radius,
                    delta=0.3 * float(np.max(img)))


def default_noise(img) -> float:
    """Image-space noise SD used when none is given: 20% of the maximum."""
    return 0.2 * float(np.max(img))


def add_noise(img, sigma_noise: float, seed: int) -> np.ndarray:
    """Add i.i.d. ``N(0, sigma_noise**2)`` noise from a seeded generator."""
    img = check_image(img)
    if not sigma_noise > 0:
        raise ConfigError(f"noise SD must be positive, got {sigma_noise}")
    rng = np.random.default_rng(seed)
    return img + rng.normal(0.0, sigma_noise, size=img.shape)
