"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
Diagnostics go to stderr; data goes to files or stdout only.  Subcommands
that populate an output directory drop a resolved-config snapshot next to
their outputs so any run can be reproduced from its artifacts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .config import (
    ConfigError,
    SweepConfig,
    THREADS_ENV_VAR,
    build_sweep_config,
    load_config,
    parse_float_list,
)
from .grid import (
    DatasetManifest,
    GridIOError,
    read_grid,
    read_manifest,
    read_mask,
    write_grid,
    write_manifest,
    write_mask,
)
from .inject import RegionSamplingError, inject, sample_region, save_record
from .models import (
    BlurOracle,
    ExternalReconSource,
    IdentityModel,
    MissingReconstructionError,
    fit_subspace,
    load_subspace,
    save_subspace,
)
from .phantom import make_phantom
from .scoring import NoPositivesError, average_precision, dataset_ap
from .stats import EmptyMaskError
from .sweep import derive_seed, injection_stem, run_experiment, write_best_sigma, write_rows

DATA_ERRORS = (
    GridIOError,
    FileNotFoundError,
    EmptyMaskError,
    RegionSamplingError,
    NoPositivesError,
    MissingReconstructionError,
    ValueError,
)


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _snapshot(out_dir: Path, name: str, pairs: dict) -> None:
    lines = [f"{k} = {v}" for k, v in pairs.items() if v is not None]
    (out_dir / name).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def cmd_phantom(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(args.n):
        grid, mask = make_phantom(args.seed + i, args.size, args.size)
        img_rel = Path(f"img_{i:04d}.f32g")
        mask_rel = Path(f"img_{i:04d}.maskg")
        write_grid(grid, out / img_rel)
        write_mask(mask, out / mask_rel)
        entries.append((img_rel, mask_rel))
    manifest = DatasetManifest(role=args.role, base_dir=out, entries=entries)
    write_manifest(manifest, out / "manifest.txt")
    _snapshot(out, "phantom.resolved.cfg",
              {"seed": args.seed, "n": args.n, "size": args.size, "role": args.role})
    _log(f"wrote {args.n} phantom image/mask pairs and manifest to {out}")
    return 0


def cmd_inject(args) -> int:
    manifest = read_manifest(args.manifest, role="test")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    intensities = parse_float_list(args.intensities) if args.intensities else []
    n_written = 0
    for i in range(len(manifest)):
        grid = manifest.load_image(i)
        mask = manifest.load_mask(i)
        if mask is None:
            from .grid import BinaryMask

            mask = BinaryMask(grid.pixels > 0)
        region = sample_region(mask, args.radius, derive_seed(args.seed, "region", i))
        shuffle_seed = derive_seed(args.seed, "shuffle", i)
        for kind in kinds:
            cell_intensities = intensities if kind == "intensity" else [None]
            for intensity in cell_intensities:
                record = inject(grid, region, kind, intensity=intensity, seed=shuffle_seed)
                save_record(record, out, injection_stem(manifest.stem(i), kind, intensity))
                n_written += 1
    _snapshot(out, "inject.resolved.cfg",
              {"manifest": Path(args.manifest).absolute(), "kinds": args.kinds,
               "intensities": args.intensities, "radius": args.radius, "seed": args.seed})
    _log(f"wrote {n_written} injection records to {out}")
    return 0


def cmd_fit_subspace(args) -> int:
    train = read_manifest(args.train, role="train")
    model = fit_subspace(train, args.k, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_subspace(model, out)
    _log(f"fitted subspace k={args.k} on {len(train)} images -> {out}")
    return 0


def _parse_model_spec(spec: str):
    if spec == "identity":
        return IdentityModel()
    if spec.startswith("blur:"):
        return BlurOracle(float(spec.split(":", 1)[1]))
    if spec.startswith("subspace:"):
        return load_subspace(spec.split(":", 1)[1])
    if spec.startswith("external:"):
        return ExternalReconSource(Path(spec.split(":", 1)[1]))
    raise ConfigError(
        f"bad model spec {spec!r}; expected identity, blur:S, subspace:PATH, or external:DIR"
    )


def cmd_reconstruct(args) -> int:
    model = _parse_model_spec(args.model)
    grid = read_grid(args.input)
    recon = model.reconstruct(grid, key=args.key, mode=args.mode)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_grid(recon, args.out)
    _log(f"reconstructed {args.input} -> {args.out}")
    return 0


def cmd_score(args) -> int:
    if args.pairs:
        pairs = []
        eval_masks = []
        for lineno, raw in enumerate(
            Path(args.pairs).read_text(encoding="utf-8").splitlines(), start=1
        ):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ConfigError(f"{args.pairs}:{lineno}: expected scores<TAB>truth[<TAB>mask]")
            pairs.append((Path(parts[0]).stem, read_grid(parts[0]), read_mask(parts[1])))
            eval_masks.append(read_mask(parts[2]) if len(parts) == 3 else None)
        result = dataset_ap(pairs, eval_masks)
        text = result.to_csv()
        if args.out:
            Path(args.out).write_text(text, encoding="utf-8")
            _log(f"wrote {result.count} per-image AP rows to {args.out}")
        else:
            sys.stdout.write(text)
        return 0
    if not args.scores or not args.truth:
        raise ConfigError("score needs either --pairs or both --scores and --truth")
    scores = read_grid(args.scores)
    truth = read_mask(args.truth)
    eval_mask = read_mask(args.eval_mask) if args.eval_mask else None
    ap = average_precision(scores, truth, eval_mask)
    print(format(ap, ".10g"))
    return 0


def _config_from_args(args, experiment: str) -> SweepConfig:
    overrides = {
        "experiment": experiment,
        "test_manifest": args.test_manifest,
        "train_manifest": getattr(args, "train_manifest", None),
        "out_dir": args.out,
        "intensity_grid": getattr(args, "intensity_grid", None),
        "sigma_grid": getattr(args, "sigma_grid", None),
        "kinds": getattr(args, "kinds", None),
        "radius": args.radius,
        "subspace_k": getattr(args, "subspace_k", None),
        "models_sigma": getattr(args, "models_sigma", None),
        "external_dirs": getattr(args, "external_dirs", None),
        "include_identity": "true" if getattr(args, "include_identity", False) else None,
        "reference_intensity": getattr(args, "reference_intensity", None),
        "master_seed": args.seed,
        "eval_mask": args.eval_mask,
        "exp1_csv": getattr(args, "exp1_csv", None),
        "threads": args.threads,
    }
    overrides = {k: str(v) for k, v in overrides.items() if v is not None}
    if args.config:
        return load_config(args.config, overrides)
    return build_sweep_config(overrides)


def _run_sweep(args, experiment: str) -> int:
    config = _config_from_args(args, experiment)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _log(f"running {config.experiment} on {config.test_manifest} "
         f"({config.resolved_threads()} thread(s))")
    result = run_experiment(config)
    csv_path = out / f"{config.experiment}.csv"
    write_rows(result.rows, csv_path)
    (out / "resolved_config.cfg").write_text(config.to_text(), encoding="utf-8")
    from .report import emit_plots

    figures = emit_plots(result.rows, out)
    if result.best_sigma is not None:
        write_best_sigma(result.best_sigma, out / "best_sigma.csv")
        for label, _, sigma, dist in result.best_sigma:
            _log(f"best matching sigma for {label}: {sigma:g} (L1 distance {dist:.4g})")
    _log(f"wrote {len(result.rows)} rows to {csv_path} and {len(figures)} figure(s)")
    return 0


def cmd_exp1(args) -> int:
    return _run_sweep(args, "exp1")


def cmd_exp2(args) -> int:
    return _run_sweep(args, "exp2")


def cmd_exp3(args) -> int:
    return _run_sweep(args, f"exp3-{args.mode}")


def cmd_histeq(args) -> int:
    return _run_sweep(args, "exp1-histeq")


def cmd_panels(args) -> int:
    from .report import emit_panels

    manifest = read_manifest(args.manifest, role="test")
    indices = [int(v) for v in args.images.split(",")]
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    intensities = parse_float_list(args.intensities) if args.intensities else [None]
    sigmas = parse_float_list(args.sigmas)
    cells = []
    for index in indices:
        for kind in kinds:
            for intensity in intensities if kind == "intensity" else [None]:
                for sigma in sigmas:
                    cells.append((index, kind, intensity, sigma))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = emit_panels(manifest, cells, args.radius, args.seed, out)
    _snapshot(out, "panels.resolved.cfg",
              {"manifest": Path(args.manifest).absolute(), "images": args.images,
               "kinds": args.kinds, "intensities": args.intensities, "sigmas": args.sigmas,
               "radius": args.radius, "seed": args.seed})
    _log(f"wrote {len(written)} panel files to {out}")
    return 0


def cmd_plot(args) -> int:
    from .report import emit_plots
    from .sweep import ScoreRow, read_rows

    records = read_rows(args.csv)
    if not records:
        raise ValueError(f"{args.csv} holds no rows")
    rows = [
        ScoreRow(
            experiment=r["experiment"],
            kind=r["kind"],
            mode=r["mode"],
            mean_ap=r["mean_ap"],
            ap_std=r["ap_std"],
            mean_recon_err=r["mean_recon_err"],
            n_images=r["n_images"],
            seed=r["seed"],
            intensity=r["intensity"],
            sigma=r["sigma"],
            model=r["model"],
            k=r["k"],
        )
        for r in records
    ]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    figures = emit_plots(rows, out)
    _log(f"wrote {len(figures)} figure(s) to {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly
# ---------------------------------------------------------------------------


def _add_sweep_flags(p: _Parser, exp3: bool = False) -> None:
    p.add_argument("--config", help="config file (key = value lines)")
    p.add_argument("--test-manifest", dest="test_manifest", help="test manifest path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", dest="seed", type=int, help="master seed")
    p.add_argument("--radius", type=float, help="anomaly disk radius in pixels")
    p.add_argument("--intensity-grid", dest="intensity_grid",
                   help="comma list or lo:hi:step")
    p.add_argument("--sigma-grid", dest="sigma_grid", help="comma list or lo:hi:step")
    p.add_argument("--eval-mask", dest="eval_mask", choices=["full", "object"],
                   help="AP evaluation region policy")
    p.add_argument("--threads", type=int,
                   help=f"worker threads (fallback: ${THREADS_ENV_VAR}, then cpu count)")
    if exp3:
        p.add_argument("--mode", choices=["healthy", "anomalous"], default="healthy",
                       help="reconstruct the healthy or the anomalous image")
        p.add_argument("--train-manifest", dest="train_manifest", help="training manifest")
        p.add_argument("--subspace-k", dest="subspace_k", help="comma list of latent dims")
        p.add_argument("--models-sigma", dest="models_sigma",
                       help="comma list of blur-oracle sigmas to include as models")
        p.add_argument("--external-dirs", dest="external_dirs",
                       help="comma list of external reconstruction directories")
        p.add_argument("--include-identity", dest="include_identity", action="store_true",
                       help="add the identity reconstructor to the model list")
        p.add_argument("--exp1-csv", dest="exp1_csv",
                       help="exp1 results CSV for best-matching-sigma curves")


def build_parser() -> _Parser:
    parser = _Parser(prog="residual-lab",
                     description="Residual-based anomaly localization evaluation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="generate a phantom slice dataset")
    p.add_argument("--seed", type=int, default=0, help="base seed; image i uses seed+i")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--size", type=int, default=128, help="square image side in pixels")
    p.add_argument("--role", choices=["train", "test"], default="test")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("inject", help="write anomaly injection records for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kinds", default="intensity")
    p.add_argument("--intensities", help="comma list or lo:hi:step (intensity kind)")
    p.add_argument("--radius", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0, help="master seed (region derivation)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("fit-subspace", help="fit and persist a linear-subspace model")
    p.add_argument("--train", required=True, help="training manifest")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=cmd_fit_subspace)

    p = sub.add_parser("reconstruct", help="run one reconstruction")
    p.add_argument("--model", required=True,
                   help="identity | blur:SIGMA | subspace:PATH | external:DIR")
    p.add_argument("--input", required=True)
    p.add_argument("--key", help="image stem for external sources")
    p.add_argument("--mode", choices=["healthy", "anomalous"], default="healthy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("score", help="pixel-wise average precision")
    p.add_argument("--scores", help="anomaly map .f32g")
    p.add_argument("--truth", help="ground-truth .maskg")
    p.add_argument("--eval-mask", dest="eval_mask", help="optional evaluation-region .maskg")
    p.add_argument("--pairs", help="file of scores<TAB>truth[<TAB>mask] lines")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.set_defaults(func=cmd_score)

    for name, func, exp3 in (
        ("exp1", cmd_exp1, False),
        ("exp2", cmd_exp2, False),
        ("exp3", cmd_exp3, True),
        ("histeq", cmd_histeq, False),
    ):
        p = sub.add_parser(name, help=f"run {name} sweep")
        _add_sweep_flags(p, exp3=exp3)
        if name == "exp2":
            p.add_argument("--kinds", help="comma list of anomaly kinds")
            p.add_argument("--reference-intensity", dest="reference_intensity", type=float,
                           help="constant-intensity reference value")
        p.set_defaults(func=func)

    p = sub.add_parser("panels", help="write qualitative sample panels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True, help="comma list of image indices")
    p.add_argument("--kinds", default="intensity")
    p.add_argument("--intensities", help="comma list or lo:hi:step (intensity kind)")
    p.add_argument("--sigmas", required=True, help="comma list of blur sigmas")
    p.add_argument("--radius", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_panels)

    p = sub.add_parser("plot", help="render figures from a results CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True, help="output directory for SVG files")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _log(f"residual-lab: usage error: {exc}")
        return 1
    except DATA_ERRORS as exc:
        _log(f"residual-lab: data error: {exc}")
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        _log(f"residual-lab: internal error: {type(exc).__name__}: {exc}")
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
