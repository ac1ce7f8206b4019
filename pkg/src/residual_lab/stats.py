"""Masked intensity statistics, histograms, and masked histogram equalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import BinaryMask, Grid


class EmptyMaskError(ValueError):
    """Raised when an operation needs at least one masked pixel."""


@dataclass
class ObjectStats:
    mean: float
    std: float  # population convention
    min: float
    max: float


@dataclass
class HistogramReport:
    """Per-bin counts of masked pixels over uniform bins on [0, 1].

    ``split_inside``/``split_outside`` are present only when a split mask was
    given; they partition ``counts`` bin by bin (inside + outside == counts).
    """

    bin_edges: np.ndarray  # length bins + 1
    counts: np.ndarray  # length bins
    split_inside: np.ndarray | None = None
    split_outside: np.ndarray | None = None

    @property
    def bins(self) -> int:
        return len(self.counts)


def _masked_values(grid: Grid, mask: BinaryMask) -> np.ndarray:
    if grid.shape != mask.shape:
        raise ValueError(f"shape mismatch: grid {grid.shape} vs mask {mask.shape}")
    if mask.count == 0:
        raise EmptyMaskError("mask selects no pixels")
    return grid.pixels[mask.values]


def object_stats(grid: Grid, mask: BinaryMask) -> ObjectStats:
    """Mean / population std / min / max over masked pixels only."""
    vals = _masked_values(grid, mask).astype(np.float64)
    return ObjectStats(
        mean=float(vals.mean()),
        std=float(vals.std()),
        min=float(vals.min()),
        max=float(vals.max()),
    )


def _bin_index(values: np.ndarray, bins: int) -> np.ndarray:
    # Uniform bins over [0,1]; the last bin is right-inclusive.  Values are
    # clipped into [0,1] first so counts always sum to the masked popcount.
    v = np.clip(values.astype(np.float64), 0.0, 1.0)
    idx = np.floor(v * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def masked_histogram(
    grid: Grid,
    mask: BinaryMask,
    bins: int,
    split_mask: BinaryMask | None = None,
) -> HistogramReport:
    """Histogram of masked pixels; optionally split into inside/outside series."""
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    vals = _masked_values(grid, mask)
    idx = _bin_index(vals, bins)
    counts = np.bincount(idx, minlength=bins)
    edges = np.linspace(0.0, 1.0, bins + 1)
    if split_mask is None:
        return HistogramReport(bin_edges=edges, counts=counts)
    if split_mask.shape != grid.shape:
        raise ValueError(f"shape mismatch: grid {grid.shape} vs split mask {split_mask.shape}")
    inside_sel = split_mask.values[mask.values]
    inside = np.bincount(idx[inside_sel], minlength=bins)
    return HistogramReport(
        bin_edges=edges,
        counts=counts,
        split_inside=inside,
        split_outside=counts - inside,
    )


def equalize_masked(grid: Grid, mask: BinaryMask, bins: int = 256) -> Grid:
    """Map masked pixels through their empirical CDF; leave the rest untouched.

    The CDF is built from a `bins`-bin histogram of the masked pixels and is
    inclusive of a value's own bin, so the maximum always maps to 1.0.
    """
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins}")
    vals = _masked_values(grid, mask)
    idx = _bin_index(vals, bins)
    counts = np.bincount(idx, minlength=bins)
    cdf = np.cumsum(counts, dtype=np.float64) / vals.size
    out = np.array(grid.pixels, dtype=np.float32)
    out[mask.values] = cdf[idx].astype(np.float32)
    return Grid(out)
