"""Residual-based anomaly localization evaluation toolkit."""

__version__ = "0.1.0"

from .grid import (
    BinaryMask,
    DatasetManifest,
    Grid,
    GridIOError,
    read_grid,
    read_manifest,
    read_mask,
    write_grid,
    write_manifest,
    write_mask,
)
from .inject import (
    InjectionRecord,
    RegionSpec,
    bilinear_sample,
    inject,
    inject_intensity,
    inject_shuffle,
    inject_sink,
    inject_source,
    rasterize_disk,
    sample_region,
)
from .models import (
    BlurOracle,
    ExternalReconSource,
    IdentityModel,
    SubspaceModel,
    fit_subspace,
    gaussian_blur,
    healthy_recon_error,
    load_subspace,
    reconstruct,
    save_subspace,
)
from .phantom import make_phantom
from .scoring import (
    ApResult,
    CurveMatch,
    average_precision,
    best_matching_sigma,
    dataset_ap,
    residual_map,
)
from .stats import HistogramReport, ObjectStats, equalize_masked, masked_histogram, object_stats
from .config import SweepConfig, load_config
from .sweep import (
    ScoreRow,
    SweepResult,
    derive_seed,
    run_exp1,
    run_exp2,
    run_exp3,
    run_experiment,
    run_histeq_variant,
)

__all__ = [name for name in dir() if not name.startswith("_")]
