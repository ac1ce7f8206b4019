"""Figure and sample-panel emission.

Plots are derived views over the CSV rows and never recompute statistics.
SVG output is byte-deterministic: a fixed `svg.hashsalt`, no date metadata,
and data-ordered drawing.  Panels quantize [0,1] grids to 8-bit previews
(0 -> 0, 1 -> 255 exactly) next to the raw `.f32g` triplets.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np
from PIL import Image

matplotlib.use("svg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .grid import Grid, write_grid  # noqa: E402
from .inject import inject  # noqa: E402
from .models import gaussian_blur  # noqa: E402
from .scoring import residual_map  # noqa: E402
from .sweep import ScoreRow, injection_stem  # noqa: E402

_SVG_SALT = "residual-lab"


def _new_figure(width: float = 6.0, height: float = 4.2):
    plt.rcParams["svg.hashsalt"] = _SVG_SALT
    return plt.subplots(figsize=(width, height), dpi=100)


def _save(fig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Date": None})
    plt.close(fig)


def _fmt(value: float) -> str:
    return format(value, "g")


def plot_lines(
    rows: list[ScoreRow],
    x_field: str,
    series_field: str,
    path: str | Path,
    title: str = "",
    ylabel: str = "mean AP",
) -> None:
    """One line per distinct series value; x ascending; y = mean AP."""
    if not rows:
        raise ValueError("no rows to plot")
    series_keys = []
    for row in rows:
        key = getattr(row, series_field)
        if key not in series_keys:
            series_keys.append(key)
    fig, ax = _new_figure()
    for key in series_keys:
        pts = sorted(
            (getattr(r, x_field), r.mean_ap)
            for r in rows
            if getattr(r, series_field) == key and getattr(r, x_field) is not None
        )
        label = f"{series_field}={_fmt(key)}" if isinstance(key, float) else str(key)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", markersize=3, label=label)
    ax.set_xlabel(x_field)
    ax.set_ylabel(ylabel)
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _save(fig, Path(path))


def plot_heatmap(
    rows: list[ScoreRow],
    path: str | Path,
    x_field: str = "intensity",
    y_field: str = "sigma",
    title: str = "",
) -> None:
    """Mean AP over the x_field x y_field grid (exp1-style)."""
    if not rows:
        raise ValueError("no rows to plot")
    xs = sorted({getattr(r, x_field) for r in rows})
    ys = sorted({getattr(r, y_field) for r in rows})
    mat = np.full((len(ys), len(xs)), np.nan)
    for row in rows:
        mat[ys.index(getattr(row, y_field)), xs.index(getattr(row, x_field))] = row.mean_ap
    fig, ax = _new_figure(6.4, 4.4)
    im = ax.imshow(mat, origin="lower", aspect="auto", vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(xs)), [_fmt(v) for v in xs], rotation=90, fontsize=7)
    ax.set_yticks(range(len(ys)), [_fmt(v) for v in ys], fontsize=8)
    ax.set_xlabel(x_field)
    ax.set_ylabel(y_field)
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="mean AP")
    _save(fig, Path(path))


def plot_scatter(
    points: list[tuple[float, float, str]],
    path: str | Path,
    xlabel: str = "mean reconstruction error",
    ylabel: str = "mean AP",
    title: str = "",
) -> None:
    """Labelled scatter, e.g. reconstruction error vs mean AP per model."""
    if not points:
        raise ValueError("no points to plot")
    fig, ax = _new_figure()
    for x, y, label in points:
        ax.scatter([x], [y], s=28)
        ax.annotate(label, (x, y), textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    _save(fig, Path(path))


def emit_plots(rows: list[ScoreRow], out_dir: str | Path) -> list[Path]:
    """Standard figure set for the experiment the rows belong to."""
    if not rows:
        raise ValueError("no rows to plot")
    experiments = {r.experiment for r in rows}
    if len(experiments) != 1:
        raise ValueError(f"rows span multiple experiments: {sorted(experiments)}")
    experiment = rows[0].experiment
    out_dir = Path(out_dir)
    written = []
    if experiment in ("exp1", "exp1-histeq"):
        p = out_dir / f"{experiment}_heatmap.svg"
        plot_heatmap(rows, p, title=f"{experiment}: AP over intensity x sigma")
        written.append(p)
        p = out_dir / f"{experiment}_lines.svg"
        plot_lines(rows, "intensity", "sigma", p, title=f"{experiment}: AP vs intensity")
        written.append(p)
    elif experiment == "exp2":
        p = out_dir / "exp2_lines.svg"
        plot_lines(rows, "sigma", "kind", p, title="exp2: AP vs blur strength")
        written.append(p)
    elif experiment.startswith("exp3"):
        p = out_dir / f"{experiment}_lines.svg"
        plot_lines(rows, "intensity", "model", p, title=f"{experiment}: AP vs intensity")
        written.append(p)
        by_model: dict[str, list[ScoreRow]] = {}
        for row in rows:
            by_model.setdefault(row.model, []).append(row)
        points = [
            (
                group[0].mean_recon_err,
                float(np.mean([r.mean_ap for r in group])),
                label,
            )
            for label, group in by_model.items()
        ]
        p = out_dir / f"{experiment}_error_vs_ap.svg"
        plot_scatter(points, p, title=f"{experiment}: reconstruction error vs AP")
        written.append(p)
    else:
        raise ValueError(f"unknown experiment {experiment!r}")
    return written


def quantize_preview(grid: Grid) -> np.ndarray:
    """Map [0,1] float pixels to uint8 with 0 -> 0 and 1 -> 255 exactly."""
    return np.rint(np.clip(grid.pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_montage(grids: list[Grid], path: str | Path) -> None:
    """Horizontal 8-bit montage (input | reconstruction | residual)."""
    if not grids:
        raise ValueError("no grids to montage")
    heights = {g.height for g in grids}
    if len(heights) != 1:
        raise ValueError("montage grids must share a height")
    strip = np.concatenate([quantize_preview(g) for g in grids], axis=1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(strip, mode="L").save(path, format="PNG")


def emit_panels(
    manifest,
    cells: list[tuple[int, str, float | None, float]],
    radius: float,
    master_seed: int,
    out_dir: str | Path,
) -> list[Path]:
    """Write (input, reconstruction, residual) grids + a PNG preview per cell.

    Each cell is (image index, anomaly kind, intensity or None, sigma); the
    region and shuffle seeds derive exactly as in the sweep runner, so panels
    depict the same anomalies the experiments scored.
    """
    from .sweep import ImageContext

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for index, kind, intensity, sigma in cells:
        if not 0 <= index < len(manifest):
            raise ValueError(f"image index {index} out of range (0..{len(manifest) - 1})")
        ctx = ImageContext(manifest, index, radius=radius, master_seed=master_seed)
        record = inject(
            ctx.healthy, ctx.region, kind, intensity=intensity, seed=ctx.shuffle_seed
        )
        recon = gaussian_blur(ctx.healthy, sigma)
        residual = residual_map(record.image, recon)
        stem = injection_stem(ctx.stem, kind, intensity) + f"__sigma{format(sigma, '.10g')}"
        for suffix, grid in (("input", record.image), ("recon", recon), ("residual", residual)):
            p = out_dir / f"{stem}.{suffix}.f32g"
            write_grid(grid, p)
            written.append(p)
        p = out_dir / f"{stem}.png"
        write_montage([record.image, recon, residual], p)
        written.append(p)
    return written
