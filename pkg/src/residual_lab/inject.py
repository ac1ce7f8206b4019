"""Circular-region sampling and the four synthetic anomaly families.

Anomalies are confined to a closed Euclidean disk: constant intensity,
sink/source radial deformations (values resampled bilinearly from warped
coordinates), and pixel shuffle.  Every injector leaves pixels outside the
disk untouched and is a pure function of (source, region, intensity/seed).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .grid import BinaryMask, Grid, read_grid, read_mask, write_grid, write_mask

KINDS = ("intensity", "sink", "source", "shuffle")


class RegionSamplingError(ValueError):
    """No admissible disk center exists for the requested radius."""


@dataclass(frozen=True)
class RegionSpec:
    """A circular anomaly region: integer center (row, col) and radius in px."""

    center: tuple[int, int]
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"radius must be positive, got {self.radius}")


@dataclass(eq=False)
class InjectionRecord:
    """An anomalous image, its ground-truth disk mask, and the recipe."""

    image: Grid
    truth: BinaryMask
    kind: str
    region: RegionSpec
    intensity: float | None = None  # intensity kind only
    seed: int | None = None  # shuffle kind only


def sample_region(object_mask: BinaryMask, radius: float, seed: int) -> RegionSpec:
    """Draw a disk center uniformly from pixels whose whole disk fits the mask.

    Admissibility is a Chebyshev erosion of the object mask by the radius
    (square structuring element), which guarantees the full Euclidean disk
    lies inside the object and the image bounds.
    """
    if radius <= 0:
        raise ValueError(f"radius must be positive, got {radius}")
    half = int(math.floor(radius))
    size = 2 * half + 1
    eroded = ndimage.binary_erosion(
        object_mask.values, structure=np.ones((size, size), dtype=bool), border_value=0
    )
    rows, cols = np.nonzero(eroded)
    if rows.size == 0:
        raise RegionSamplingError(
            f"object mask admits no center for radius {radius} (object too small)"
        )
    pick = int(np.random.default_rng(seed).integers(rows.size))
    return RegionSpec(center=(int(rows[pick]), int(cols[pick])), radius=float(radius))


def rasterize_disk(region: RegionSpec, height: int, width: int) -> BinaryMask:
    """Pixel (i, j) is set iff its Euclidean distance to the center is <= radius."""
    cr, cc = region.center
    r = region.radius
    if cr - r < -0.5 or cr + r > height - 0.5 or cc - r < -0.5 or cc + r > width - 0.5:
        raise ValueError(
            f"disk at {region.center} with radius {r} exceeds {height}x{width} bounds"
        )
    yy, xx = np.mgrid[0:height, 0:width]
    dist2 = (yy - cr) ** 2 + (xx - cc) ** 2
    return BinaryMask(dist2 <= r * r)


def bilinear_sample(grid: Grid, point: tuple[float, float]) -> float:
    """Bilinear interpolation at a fractional (row, col); coordinates clamped."""
    vals = _bilinear_many(
        grid.pixels, np.array([point[0]], dtype=np.float64), np.array([point[1]], dtype=np.float64)
    )
    return float(vals[0])


def _bilinear_many(pixels: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    h, w = pixels.shape
    r = np.clip(rows, 0.0, h - 1.0)
    c = np.clip(cols, 0.0, w - 1.0)
    r0 = np.floor(r).astype(np.int64)
    c0 = np.floor(c).astype(np.int64)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = r - r0
    fc = c - c0
    p = pixels.astype(np.float64)
    top = p[r0, c0] * (1 - fc) + p[r0, c1] * fc
    bot = p[r1, c0] * (1 - fc) + p[r1, c1] * fc
    return top * (1 - fr) + bot * fr


def inject_intensity(source: Grid, region: RegionSpec, intensity: float) -> InjectionRecord:
    """Replace every disk pixel with a constant intensity in [0, 1]."""
    if not 0.0 <= intensity <= 1.0:
        raise ValueError(f"intensity must be in [0, 1], got {intensity}")
    disk = rasterize_disk(region, source.height, source.width)
    out = np.array(source.pixels)
    out[disk.values] = np.float32(intensity)
    return InjectionRecord(
        image=Grid(out), truth=disk, kind="intensity", region=region, intensity=float(intensity)
    )


def _inject_deformation(source: Grid, region: RegionSpec, towards_center: bool) -> InjectionRecord:
    disk = rasterize_disk(region, source.height, source.width)
    rows, cols = np.nonzero(disk.values)
    cr, cc = region.center
    dr = rows.astype(np.float64) - cr
    dc = cols.astype(np.float64) - cc
    s = np.sqrt(dr * dr + dc * dc) / region.radius
    if towards_center:
        vr = cr + s * dr  # source deformation: pull content inward
        vc = cc + s * dc
    else:
        vr = rows + (1.0 - s) * dr  # sink deformation: push content outward
        vc = cols + (1.0 - s) * dc
    out = np.array(source.pixels)
    out[rows, cols] = _bilinear_many(source.pixels, vr, vc).astype(np.float32)
    kind = "source" if towards_center else "sink"
    return InjectionRecord(image=Grid(out), truth=disk, kind=kind, region=region)


def inject_sink(source: Grid, region: RegionSpec) -> InjectionRecord:
    """Shift disk content away from the center: V = J + (1 - s)(J - center)."""
    return _inject_deformation(source, region, towards_center=False)


def inject_source(source: Grid, region: RegionSpec) -> InjectionRecord:
    """Shift disk content toward the center: V = center + s(J - center)."""
    return _inject_deformation(source, region, towards_center=True)


def inject_shuffle(source: Grid, region: RegionSpec, seed: int) -> InjectionRecord:
    """Permute the disk's pixel values (seeded), preserving their multiset."""
    disk = rasterize_disk(region, source.height, source.width)
    rows, cols = np.nonzero(disk.values)
    perm = np.random.default_rng(seed).permutation(rows.size)
    out = np.array(source.pixels)
    out[rows, cols] = source.pixels[rows[perm], cols[perm]]
    return InjectionRecord(
        image=Grid(out), truth=disk, kind="shuffle", region=region, seed=int(seed)
    )


def inject(
    source: Grid,
    region: RegionSpec,
    kind: str,
    intensity: float | None = None,
    seed: int | None = None,
) -> InjectionRecord:
    """Dispatch to the injector for `kind`."""
    if kind == "intensity":
        if intensity is None:
            raise ValueError("intensity kind requires an intensity value")
        return inject_intensity(source, region, intensity)
    if kind == "sink":
        return inject_sink(source, region)
    if kind == "source":
        return inject_source(source, region)
    if kind == "shuffle":
        if seed is None:
            raise ValueError("shuffle kind requires a seed")
        return inject_shuffle(source, region, seed)
    raise ValueError(f"unknown anomaly kind {kind!r}; expected one of {KINDS}")


def save_record(record: InjectionRecord, out_dir: str | Path, stem: str) -> None:
    """Write the record as `<stem>.f32g` + `<stem>.maskg` + `<stem>.json`."""
    out_dir = Path(out_dir)
    write_grid(record.image, out_dir / f"{stem}.f32g")
    write_mask(record.truth, out_dir / f"{stem}.maskg")
    sidecar = {
        "kind": record.kind,
        "intensity": record.intensity,
        "center": list(record.region.center),
        "radius": record.region.radius,
        "seed": record.seed,
    }
    (out_dir / f"{stem}.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")


def load_record(out_dir: str | Path, stem: str) -> InjectionRecord:
    out_dir = Path(out_dir)
    sidecar = json.loads((out_dir / f"{stem}.json").read_text(encoding="utf-8"))
    region = RegionSpec(center=tuple(sidecar["center"]), radius=sidecar["radius"])
    return InjectionRecord(
        image=read_grid(out_dir / f"{stem}.f32g"),
        truth=read_mask(out_dir / f"{stem}.maskg"),
        kind=sidecar["kind"],
        region=region,
        intensity=sidecar["intensity"],
        seed=sidecar["seed"],
    )
