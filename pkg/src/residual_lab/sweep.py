"""Seeded sweep runner for the intensity / texture / capacity experiments.

Work is data-parallel across test images with a deterministic indexed gather,
so results are byte-identical regardless of worker count.  Per-image region
seeds derive from the master seed and the image index only; every cell of a
given image therefore reuses one region, isolating the swept variable, and a
standalone injection run with the same master seed reproduces the exact same
anomalies (the file protocol used by externally trained reconstructions).
"""

from __future__ import annotations

import csv
import hashlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SweepConfig
from .grid import BinaryMask, DatasetManifest, Grid, read_manifest
from .inject import RegionSpec, inject, rasterize_disk, sample_region
from .models import (
    BlurOracle,
    ExternalReconSource,
    IdentityModel,
    Reconstructor,
    SubspaceModel,
    fit_subspace,
    gaussian_blur,
)
from .scoring import average_precision, residual_map
from .stats import equalize_masked

CSV_COLUMNS = (
    "experiment",
    "kind",
    "intensity",
    "sigma",
    "model",
    "mode",
    "k",
    "mean_ap",
    "ap_std",
    "mean_recon_err",
    "n_images",
    "seed",
)


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from hashed parts; independent of thread scheduling."""
    blob = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little")


def injection_stem(stem: str, kind: str, intensity: float | None = None) -> str:
    """Canonical file stem for an injected image cell (shared file protocol)."""
    if kind == "intensity":
        if intensity is None:
            raise ValueError("intensity kind requires an intensity value")
        return f"{stem}__I{format(intensity, '.10g')}"
    return f"{stem}__{kind}"


@dataclass
class ScoreRow:
    """One aggregated sweep cell."""

    experiment: str
    kind: str
    mode: str
    mean_ap: float
    ap_std: float
    mean_recon_err: float
    n_images: int
    seed: int
    intensity: float | None = None
    sigma: float | None = None
    model: str = ""
    k: int | None = None

    def to_csv_fields(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return format(v, ".10g")
            return str(v)

        return [
            self.experiment,
            self.kind,
            fmt(self.intensity),
            fmt(self.sigma),
            self.model,
            self.mode,
            fmt(self.k),
            fmt(self.mean_ap),
            fmt(self.ap_std),
            fmt(self.mean_recon_err),
            str(self.n_images),
            str(self.seed),
        ]


def write_rows(rows: list[ScoreRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.to_csv_fields())


def read_rows(path: str | Path) -> list[dict]:
    """Read a results CSV back into dicts with numeric fields parsed."""
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            parsed: dict = dict(rec)
            for key in ("intensity", "sigma", "mean_ap", "ap_std", "mean_recon_err"):
                parsed[key] = float(rec[key]) if rec[key] else None
            for key in ("k", "n_images", "seed"):
                parsed[key] = int(rec[key]) if rec[key] else None
            out.append(parsed)
    return out


@dataclass
class SweepResult:
    rows: list[ScoreRow]
    # (model label, k or None, best sigma, L1 distance) per model, exp3 only.
    best_sigma: list[tuple[str, int | None, float, float]] | None = None


class ImageContext:
    """Per-image working set: healthy grid, object mask, region, truth disk."""

    def __init__(
        self,
        manifest: DatasetManifest,
        index: int,
        radius: float,
        master_seed: int,
        eval_mask_policy: str = "full",
        equalize_bins: int | None = None,
    ):
        self.index = index
        self.stem = manifest.stem(index)
        grid = manifest.load_image(index)
        mask = manifest.load_mask(index)
        if equalize_bins is not None:
            if mask is None:
                raise ValueError(f"image {self.stem!r} has no object mask (required here)")
            grid = equalize_masked(grid, mask, equalize_bins)
        if mask is None:
            mask = BinaryMask(grid.pixels > 0)
        self.healthy = grid
        self.object_mask = mask
        self.region: RegionSpec = sample_region(
            mask, radius, derive_seed(master_seed, "region", index)
        )
        self.truth = rasterize_disk(self.region, grid.height, grid.width)
        self.eval_mask = mask if eval_mask_policy == "object" else None
        self.shuffle_seed = derive_seed(master_seed, "shuffle", index)

    @classmethod
    def from_config(
        cls, config: SweepConfig, manifest: DatasetManifest, index: int, equalize: bool = False
    ) -> "ImageContext":
        return cls(
            manifest,
            index,
            radius=config.radius,
            master_seed=config.master_seed,
            eval_mask_policy=config.eval_mask,
            equalize_bins=config.histeq_bins if equalize else None,
        )

    def recon_error(self, recon: Grid) -> float:
        err = np.abs(self.healthy.pixels.astype(np.float64) - recon.pixels.astype(np.float64))
        return float(err[self.object_mask.values].mean())


def _parallel_indexed(n: int, fn, threads: int) -> list:
    """Run fn(i) for i in range(n); gather results by index (order-stable)."""
    results = [None] * n
    if threads <= 1 or n <= 1:
        for i in range(n):
            results[i] = fn(i)
        return results
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for i, value in zip(range(n), pool.map(fn, range(n))):
            results[i] = value
    return results


def _wrap_image_errors(manifest: DatasetManifest, fn):
    def wrapped(i: int):
        try:
            return fn(i)
        except Exception as exc:
            raise type(exc)(f"image {manifest.stem(i)!r} (index {i}): {exc}") from exc

    return wrapped


def _aggregate(ap_stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and population std over the leading (image) axis."""
    return ap_stack.mean(axis=0), ap_stack.std(axis=0)


def run_exp1(config: SweepConfig, experiment_id: str = "exp1",
             equalize: bool = False) -> SweepResult:
    """Intensity x blur-strength sweep against the blur-oracle reconstructor."""
    config.validate()
    manifest = read_manifest(config.test_manifest, role="test")
    if len(manifest) == 0:
        raise ValueError(f"test manifest {config.test_manifest} is empty")
    intensities = config.intensity_grid
    sigmas = config.sigma_grid

    def work(i: int):
        ctx = ImageContext.from_config(config, manifest, i, equalize=equalize)
        aps = np.empty((len(intensities), len(sigmas)), dtype=np.float64)
        errs = np.empty(len(sigmas), dtype=np.float64)
        for si, sigma in enumerate(sigmas):
            recon = gaussian_blur(ctx.healthy, sigma)
            errs[si] = ctx.recon_error(recon)
            for ii, intensity in enumerate(intensities):
                record = inject(ctx.healthy, ctx.region, "intensity", intensity=intensity)
                scores = residual_map(record.image, recon)
                aps[ii, si] = average_precision(scores, ctx.truth, ctx.eval_mask)
        return aps, errs

    results = _parallel_indexed(
        len(manifest), _wrap_image_errors(manifest, work), config.resolved_threads()
    )
    ap_stack = np.stack([r[0] for r in results])  # (n, I, sigma)
    err_stack = np.stack([r[1] for r in results])  # (n, sigma)
    mean_ap, std_ap = _aggregate(ap_stack)
    mean_err = err_stack.mean(axis=0)

    rows = []
    for ii, intensity in enumerate(intensities):
        for si, sigma in enumerate(sigmas):
            rows.append(
                ScoreRow(
                    experiment=experiment_id,
                    kind="intensity",
                    intensity=intensity,
                    sigma=sigma,
                    model="blur",
                    mode="healthy",
                    mean_ap=float(mean_ap[ii, si]),
                    ap_std=float(std_ap[ii, si]),
                    mean_recon_err=float(mean_err[si]),
                    n_images=len(manifest),
                    seed=config.master_seed,
                )
            )
    assert len(rows) == len(intensities) * len(sigmas)
    return SweepResult(rows=rows)


def run_histeq_variant(config: SweepConfig) -> SweepResult:
    """Exp1 on masked-histogram-equalized test images (masks required)."""
    return run_exp1(config, experiment_id="exp1-histeq", equalize=True)


def run_exp2(config: SweepConfig) -> SweepResult:
    """Texture sweep: deformations and shuffle vs the constant-intensity reference."""
    config.validate()
    manifest = read_manifest(config.test_manifest, role="test")
    if len(manifest) == 0:
        raise ValueError(f"test manifest {config.test_manifest} is empty")
    kinds = config.kinds
    sigmas = config.sigma_grid

    def work(i: int):
        ctx = ImageContext.from_config(config, manifest, i)
        records = {
            kind: inject(
                ctx.healthy,
                ctx.region,
                kind,
                intensity=config.reference_intensity,
                seed=ctx.shuffle_seed,
            )
            for kind in kinds
        }
        aps = np.empty((len(kinds), len(sigmas)), dtype=np.float64)
        errs = np.empty(len(sigmas), dtype=np.float64)
        for si, sigma in enumerate(sigmas):
            recon = gaussian_blur(ctx.healthy, sigma)
            errs[si] = ctx.recon_error(recon)
            for ki, kind in enumerate(kinds):
                scores = residual_map(records[kind].image, recon)
                aps[ki, si] = average_precision(scores, ctx.truth, ctx.eval_mask)
        return aps, errs

    results = _parallel_indexed(
        len(manifest), _wrap_image_errors(manifest, work), config.resolved_threads()
    )
    ap_stack = np.stack([r[0] for r in results])
    err_stack = np.stack([r[1] for r in results])
    mean_ap, std_ap = _aggregate(ap_stack)
    mean_err = err_stack.mean(axis=0)

    rows = []
    for ki, kind in enumerate(kinds):
        for si, sigma in enumerate(sigmas):
            rows.append(
                ScoreRow(
                    experiment="exp2",
                    kind=kind,
                    intensity=config.reference_intensity if kind == "intensity" else None,
                    sigma=sigma,
                    model="blur",
                    mode="healthy",
                    mean_ap=float(mean_ap[ki, si]),
                    ap_std=float(std_ap[ki, si]),
                    mean_recon_err=float(mean_err[si]),
                    n_images=len(manifest),
                    seed=config.master_seed,
                )
            )
    assert len(rows) == len(kinds) * len(sigmas)
    return SweepResult(rows=rows)


def build_exp3_models(config: SweepConfig) -> list[tuple[str, int | None, Reconstructor]]:
    """Instantiate the configured model list as (label, k, reconstructor)."""
    models: list[tuple[str, int | None, Reconstructor]] = []
    if config.subspace_k:
        train = read_manifest(config.train_manifest, role="train")
        for k in config.subspace_k:
            models.append((f"subspace-k{k}", k, fit_subspace(train, k)))
    for sigma in config.models_sigma:
        models.append((f"blur-sigma{format(sigma, '.10g')}", None, BlurOracle(sigma)))
    for directory in config.external_dirs:
        models.append((f"external-{Path(directory).name}", None, ExternalReconSource(Path(directory))))
    if config.include_identity:
        models.append(("identity", None, IdentityModel()))
    return models


def run_exp3(config: SweepConfig, mode: str) -> SweepResult:
    """Capacity sweep: per model x intensity, reconstructing healthy or anomalous input."""
    if mode not in ("healthy", "anomalous"):
        raise ValueError(f"mode must be healthy or anomalous, got {mode!r}")
    config.validate()
    manifest = read_manifest(config.test_manifest, role="test")
    if len(manifest) == 0:
        raise ValueError(f"test manifest {config.test_manifest} is empty")
    intensities = config.intensity_grid
    models = build_exp3_models(config)

    # Enumerate every missing external reconstruction up front.
    for label, _, model in models:
        if isinstance(model, ExternalReconSource):
            keys = [manifest.stem(i) for i in range(len(manifest))]
            missing = model.missing_keys(keys, "healthy")
            if mode == "anomalous":
                anomalous_keys = [
                    injection_stem(manifest.stem(i), "intensity", intensity)
                    for i in range(len(manifest))
                    for intensity in intensities
                ]
                missing += model.missing_keys(anomalous_keys, "anomalous")
            if missing:
                raise FileNotFoundError(
                    f"model {label}: missing {len(missing)} reconstruction(s): "
                    + ", ".join(missing[:10])
                    + ("..." if len(missing) > 10 else "")
                )

    def work(i: int):
        ctx = ImageContext.from_config(config, manifest, i)
        aps = np.empty((len(models), len(intensities)), dtype=np.float64)
        errs = np.empty(len(models), dtype=np.float64)
        for mi, (label, _, model) in enumerate(models):
            healthy_recon = model.reconstruct(ctx.healthy, key=ctx.stem, mode="healthy")
            errs[mi] = ctx.recon_error(healthy_recon)
            for ii, intensity in enumerate(intensities):
                record = inject(ctx.healthy, ctx.region, "intensity", intensity=intensity)
                if mode == "healthy":
                    recon = healthy_recon
                else:
                    recon = model.reconstruct(
                        record.image,
                        key=injection_stem(ctx.stem, "intensity", intensity),
                        mode="anomalous",
                    )
                scores = residual_map(record.image, recon)
                aps[mi, ii] = average_precision(scores, ctx.truth, ctx.eval_mask)
        return aps, errs

    results = _parallel_indexed(
        len(manifest), _wrap_image_errors(manifest, work), config.resolved_threads()
    )
    ap_stack = np.stack([r[0] for r in results])  # (n, model, I)
    err_stack = np.stack([r[1] for r in results])  # (n, model)
    mean_ap, std_ap = _aggregate(ap_stack)
    mean_err = err_stack.mean(axis=0)

    rows = []
    for mi, (label, k, _) in enumerate(models):
        for ii, intensity in enumerate(intensities):
            rows.append(
                ScoreRow(
                    experiment=f"exp3-{mode}",
                    kind="intensity",
                    intensity=intensity,
                    model=label,
                    mode=mode,
                    k=k,
                    mean_ap=float(mean_ap[mi, ii]),
                    ap_std=float(std_ap[mi, ii]),
                    mean_recon_err=float(mean_err[mi]),
                    n_images=len(manifest),
                    seed=config.master_seed,
                )
            )
    assert len(rows) == len(models) * len(intensities)

    best = _best_sigma_matches(config, models, mean_ap, intensities)
    return SweepResult(rows=rows, best_sigma=best)


def _best_sigma_matches(config, models, mean_ap, intensities):
    """Match each model's AP curve to the exp1 blur curves, when configured."""
    from .scoring import best_matching_sigma

    if config.exp1_csv is None:
        return None
    blur_curves: dict[float, dict[float, float]] = {}
    for rec in read_rows(config.exp1_csv):
        blur_curves.setdefault(rec["sigma"], {})[rec["intensity"]] = rec["mean_ap"]
    matches = []
    for mi, (label, k, _) in enumerate(models):
        curve = {intensity: float(mean_ap[mi, ii]) for ii, intensity in enumerate(intensities)}
        match = best_matching_sigma(curve, blur_curves)
        matches.append((label, k, match.best_sigma, match.best_distance))
    return matches


def write_best_sigma(matches, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "k", "best_sigma", "l1_distance"])
        for label, k, sigma, distance in matches:
            writer.writerow(
                [label, "" if k is None else k, format(sigma, ".10g"), format(distance, ".10g")]
            )


def run_experiment(config: SweepConfig) -> SweepResult:
    """Dispatch on config.experiment."""
    if config.experiment == "exp1":
        return run_exp1(config)
    if config.experiment == "exp1-histeq":
        return run_histeq_variant(config)
    if config.experiment == "exp2":
        return run_exp2(config)
    if config.experiment == "exp3-healthy":
        return run_exp3(config, "healthy")
    if config.experiment == "exp3-anomalous":
        return run_exp3(config, "anomalous")
    raise ValueError(f"unknown experiment {config.experiment!r}")
