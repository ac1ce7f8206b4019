"""Synthetic brain-like phantom slices for offline evaluation runs.

Each phantom is a head-shaped ellipse filled with 3-5 nested intensity bands,
two dark ventricle-like shapes, a handful of smooth blob-like anatomical
features at random interior positions, and a smooth low-frequency
multiplicative noise field.  Background is exactly 0; the returned mask marks
object pixels.

Band levels are tuned so the object-pixel mean, averaged over seeds, sits
near 0.45.  The population is deliberately low-rank in its global structure
(tight geometry jitter) while the blob features supply localized variability,
so linear-subspace reconstructors of growing capacity first capture the
anatomy and then progressively absorb localized content.  A small per-pixel
texture field keeps the tissue histogram continuous, which matters once
images are histogram-equalized (flat bands would collapse to single values).
"""

from __future__ import annotations

import numpy as np

from .grid import BinaryMask, Grid

MIN_DIM = 64

# Outer-to-inner band levels per band count; jittered per seed, clipped to [0.15, 0.8].
_LEVEL_TABLES = {
    3: (0.50, 0.38, 0.48),
    4: (0.52, 0.36, 0.50, 0.46),
    5: (0.52, 0.36, 0.50, 0.56, 0.44),
}
_LEVEL_JITTER = 0.04
_VENTRICLE_BASE = 0.18
_BLOB_COUNT = (8, 12)  # inclusive range per image
_BLOB_RADIUS = (5.0, 14.0)  # Gaussian sigma range, px (at the 128 reference scale)
_BLOB_AMPLITUDE = 0.14
_NOISE_AMPLITUDE = 0.05
_NOISE_CELL_PX = 8  # coarse-grid cell size before bilinear upsampling
_FINE_AMPLITUDE = 0.05  # per-pixel texture, multiplicative
_VALUE_CEILING = 0.95  # object pixels stay strictly below 1.0
_VALUE_FLOOR = 0.02  # object pixels stay strictly above 0.0


def _bilinear_upsample(coarse: np.ndarray, height: int, width: int) -> np.ndarray:
    """Upsample a coarse field to (height, width) with bilinear interpolation."""
    gh, gw = coarse.shape
    ys = np.clip((np.arange(height) + 0.5) * gh / height - 0.5, 0.0, gh - 1.0)
    xs = np.clip((np.arange(width) + 0.5) * gw / width - 0.5, 0.0, gw - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = coarse[np.ix_(y0, x0)] * (1 - fx) + coarse[np.ix_(y0, x1)] * fx
    bot = coarse[np.ix_(y1, x0)] * (1 - fx) + coarse[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def _elliptic_radius(
    height: int,
    width: int,
    cy: float,
    cx: float,
    ry: float,
    rx: float,
    theta: float,
) -> np.ndarray:
    """Normalized elliptical radius (1.0 on the ellipse boundary)."""
    yy, xx = np.mgrid[0:height, 0:width]
    dy = yy - cy
    dx = xx - cx
    c, s = np.cos(theta), np.sin(theta)
    u = c * dy + s * dx
    v = -s * dy + c * dx
    return np.sqrt((u / ry) ** 2 + (v / rx) ** 2)


def make_phantom(seed: int, height: int, width: int) -> tuple[Grid, BinaryMask]:
    """Deterministic phantom slice and its object mask for a given seed."""
    if height < MIN_DIM or width < MIN_DIM:
        raise ValueError(f"phantom dimensions must be >= {MIN_DIM}, got {height}x{width}")
    rng = np.random.default_rng(seed)
    px_scale = min(height, width) / 128.0

    cy = height * (0.5 + rng.uniform(-0.005, 0.005))
    cx = width * (0.5 + rng.uniform(-0.005, 0.005))
    ry = height * 0.44 * rng.uniform(0.99, 1.0)
    rx = width * 0.37 * rng.uniform(0.99, 1.0)
    theta = rng.uniform(-0.02, 0.02)
    rho = _elliptic_radius(height, width, cy, cx, ry, rx, theta)
    object_mask = rho <= 1.0

    n_bands = int(rng.integers(3, 6))
    # Band b occupies rho in (bounds[b+1], bounds[b]]; the innermost reaches 0.
    scales = np.linspace(1.0, 0.0, n_bands + 1)
    inner = scales[1:-1] * rng.uniform(0.99, 1.01, size=n_bands - 1)
    levels = np.clip(
        np.array(_LEVEL_TABLES[n_bands])
        + rng.uniform(-_LEVEL_JITTER, _LEVEL_JITTER, size=n_bands),
        0.15,
        0.8,
    )
    img = np.zeros((height, width), dtype=np.float64)
    bounds = np.concatenate(([1.0], inner, [0.0]))
    for b in range(n_bands):
        band = object_mask & (rho <= bounds[b]) & (rho > bounds[b + 1])
        img[band] = levels[b]
    img[object_mask & (rho == 0.0)] = levels[-1]

    # Two mirrored dark ventricle shapes near the center.
    vent_level = _VENTRICLE_BASE + rng.uniform(-0.02, 0.02)
    for side in (-1.0, 1.0):
        vent = _elliptic_radius(
            height,
            width,
            cy + 0.01 * height,
            cx + side * 0.07 * width,
            height * 0.12,
            width * 0.045,
            side * 0.25,
        )
        img[object_mask & (vent <= 1.0)] = vent_level

    # Smooth blob-like anatomical features at random interior positions.
    n_blobs = int(rng.integers(_BLOB_COUNT[0], _BLOB_COUNT[1] + 1))
    yy, xx = np.mgrid[0:height, 0:width]
    for _ in range(n_blobs):
        while True:
            by = rng.uniform(0.2 * height, 0.8 * height)
            bx = rng.uniform(0.2 * width, 0.8 * width)
            if object_mask[int(by), int(bx)]:
                break
        br = rng.uniform(_BLOB_RADIUS[0], _BLOB_RADIUS[1]) * px_scale
        amp = rng.uniform(-_BLOB_AMPLITUDE, _BLOB_AMPLITUDE)
        bump = amp * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2.0 * br * br))
        img += np.where(object_mask, bump, 0.0)

    # Smooth multiplicative field from a coarse per-seed noise grid, plus a
    # fine per-pixel texture so the tissue histogram stays continuous.
    gh = max(4, height // _NOISE_CELL_PX)
    gw = max(4, width // _NOISE_CELL_PX)
    coarse = rng.normal(0.0, 1.0, size=(gh, gw))
    field = 1.0 + _NOISE_AMPLITUDE * _bilinear_upsample(coarse, height, width)
    field = np.clip(field, 0.8, 1.2)
    fine = np.clip(1.0 + _FINE_AMPLITUDE * rng.normal(0.0, 1.0, size=(height, width)), 0.85, 1.15)
    img *= field * fine

    img = np.clip(img, 0.0, _VALUE_CEILING)
    img[~object_mask] = 0.0
    img[object_mask] = np.maximum(img[object_mask], _VALUE_FLOOR)
    return Grid(img.astype(np.float32)), BinaryMask(object_mask)
