"""Acceptance criteria for the evaluation toolkit, one test per criterion.

Everything runs on the built-in phantom dataset (100 test images at 128x128,
disk radius 12), offline and CPU-only.  Each test prints a single pass/fail
line; run with `pytest -v -s tests/test_acceptance.py` to see them live.
"""

import dataclasses
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import spearmanr

from residual_lab.cli import main as cli_main
from residual_lab.config import SweepConfig
from residual_lab.grid import read_manifest, write_manifest
from residual_lab.models import gaussian_blur
from residual_lab.scoring import average_precision
from residual_lab.grid import BinaryMask, Grid
from residual_lab.sweep import run_exp1, run_exp2, run_exp3, run_histeq_variant

from conftest import build_phantom_manifest

RADIUS = 12.0
SEED = 7
SIGMA_GRID = [0.0, 0.25, 0.5, 1.0, 2.0, 3.0, 5.0]
I_GRID_FULL = [round(0.05 * i, 10) for i in range(21)]
I_TROUGH = [round(0.2 + 0.05 * i, 10) for i in range(9)]  # 0.2 .. 0.6
SUBSPACE_KS = [4, 16, 64, 256]


def _report(criterion: int, ok: bool, detail: str) -> None:
    print(f"[criterion {criterion:>2}] {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def suite_clock():
    return time.monotonic()


@pytest.fixture(scope="module")
def datasets(tmp_path_factory, suite_clock):
    root = tmp_path_factory.mktemp("acceptance")
    test_man = build_phantom_manifest(root / "test", 100, seed0=0, role="test")
    write_manifest(test_man, root / "test" / "manifest.txt")
    train_man = build_phantom_manifest(root / "train", 500, seed0=1000, role="train")
    write_manifest(train_man, root / "train" / "manifest.txt")
    means = [
        float(test_man.load_image(i).pixels[test_man.load_mask(i).values].mean())
        for i in range(len(test_man))
    ]
    return {
        "root": root,
        "test_manifest": root / "test" / "manifest.txt",
        "train_manifest": root / "train" / "manifest.txt",
        "object_mean": float(np.mean(means)),
    }


def _base_config(datasets, out_name, **kw) -> SweepConfig:
    defaults = dict(
        experiment="exp1",
        test_manifest=datasets["test_manifest"],
        out_dir=datasets["root"] / out_name,
        intensity_grid=list(I_GRID_FULL),
        sigma_grid=list(SIGMA_GRID),
        radius=RADIUS,
        master_seed=SEED,
    )
    defaults.update(kw)
    cfg = SweepConfig(**defaults)
    cfg.validate()
    return cfg


@pytest.fixture(scope="module")
def exp1_run(datasets):
    t0 = time.monotonic()
    result = run_exp1(_base_config(datasets, "exp1"))
    return {"rows": result.rows, "elapsed": time.monotonic() - t0}


@pytest.fixture(scope="module")
def exp2_run(datasets):
    reference = datasets["object_mean"]
    cfg = _base_config(datasets, "exp2", experiment="exp2",
                       kinds=["intensity", "sink", "source", "shuffle"],
                       reference_intensity=reference)
    t0 = time.monotonic()
    result = run_exp2(cfg)
    return {"rows": result.rows, "elapsed": time.monotonic() - t0, "reference": reference}


@pytest.fixture(scope="module")
def exp3_runs(datasets):
    t0 = time.monotonic()
    out = {}
    for mode in ("healthy", "anomalous"):
        cfg = _base_config(
            datasets,
            f"exp3-{mode}",
            experiment=f"exp3-{mode}",
            train_manifest=datasets["train_manifest"],
            subspace_k=list(SUBSPACE_KS),
            intensity_grid=list(I_TROUGH),
        )
        out[mode] = run_exp3(cfg, mode).rows
    out["elapsed"] = time.monotonic() - t0
    return out


@pytest.fixture(scope="module")
def histeq_run(datasets):
    cfg = _base_config(datasets, "histeq", experiment="exp1-histeq", sigma_grid=[2.0])
    t0 = time.monotonic()
    result = run_histeq_variant(cfg)
    return {"rows": result.rows, "elapsed": time.monotonic() - t0}


def _ap_threshold_oracle(scores: np.ndarray, labels: np.ndarray) -> float:
    """Brute force: enumerate every distinct score cutoff independently."""
    n_pos = int(labels.sum())
    ap = 0.0
    prev_recall = 0.0
    for t in np.unique(scores)[::-1]:
        predicted = scores >= t
        tp = int(np.logical_and(predicted, labels).sum())
        ap += (tp / n_pos - prev_recall) * (tp / int(predicted.sum()))
        prev_recall = tp / n_pos
    return ap


def test_criterion_01_ap_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.monotonic()
    worst = 0.0
    for trial in range(200):
        if trial < 4:
            h = w = 64  # include full-size instances of both kinds
            heavy_ties = trial % 2 == 0
        else:
            h = int(rng.integers(4, 49))
            w = int(rng.integers(4, 49))
            heavy_ties = bool(rng.integers(2))
        labels = rng.random((h, w)) < float(rng.uniform(0.02, 0.5))
        if not labels.any():
            labels[0, 0] = True
        if heavy_ties:
            levels = int(rng.integers(1, 8))
            scores = np.round(rng.random((h, w)) * levels) / max(levels, 1)
        else:
            scores = rng.random((h, w))
        scores32 = scores.astype(np.float32)
        ap = average_precision(Grid(scores32), BinaryMask(labels))
        oracle = _ap_threshold_oracle(scores32.ravel().astype(np.float64), labels.ravel())
        worst = max(worst, abs(ap - oracle))
    elapsed = time.monotonic() - t0
    _report(1, worst <= 1e-9 and elapsed < 10.0,
            f"max |ap - oracle| = {worst:.2e} over 200 instances in {elapsed:.1f}s")


def test_criterion_02_blind_spot(exp1_run):
    rows = [r for r in exp1_run["rows"] if r.sigma == 2.0]
    ap_by_i = {r.intensity: r.mean_ap for r in rows}
    ap_high = ap_by_i[1.0]
    trough_min = min(ap_by_i[i] for i in I_TROUGH)
    ok = (trough_min <= 0.5 * ap_high) and (ap_high >= 0.8) and exp1_run["elapsed"] < 120.0
    _report(2, ok,
            f"sigma=2: min AP over I in [0.2,0.6] = {trough_min:.3f}, "
            f"AP(I=1.0) = {ap_high:.3f}, exp1 elapsed {exp1_run['elapsed']:.0f}s")


def test_criterion_03_near_identity_blur(datasets, exp1_run):
    manifest = read_manifest(datasets["test_manifest"], role="test")
    worst = 0.0
    for i in range(len(manifest)):
        img = manifest.load_image(i)
        blurred = gaussian_blur(img, 0.25)
        worst = max(worst, float(np.max(np.abs(blurred.pixels - img.pixels))))
    row = next(r for r in exp1_run["rows"] if r.sigma == 0.0 and r.intensity == 1.0)
    ok = worst <= 5e-3 and row.mean_ap == 1.0
    _report(3, ok,
            f"sigma=0.25 max pixel change = {worst:.2e} (<= 5e-3); "
            f"sigma=0, I=1.0 mean AP = {row.mean_ap} (exactly 1.0)")


def test_criterion_04_degradation_monotonicity(datasets, exp1_run):
    mean = datasets["object_mean"]
    candidates = [i for i in I_GRID_FULL if abs(i - mean) <= 0.02]
    assert candidates, f"no grid intensity within 0.02 of object mean {mean:.3f}"
    intensity = min(candidates, key=lambda i: abs(i - mean))
    curve = {
        r.sigma: r.mean_ap
        for r in exp1_run["rows"]
        if r.intensity == intensity and r.sigma in (0.0, 0.5, 1.0, 2.0, 3.0, 5.0)
    }
    sigmas = sorted(curve)
    violations = [
        (sigmas[j], sigmas[j + 1])
        for j in range(len(sigmas) - 1)
        if curve[sigmas[j + 1]] > curve[sigmas[j]] + 0.02
    ]
    values = ", ".join(f"{curve[s]:.3f}" for s in sigmas)
    _report(4, not violations,
            f"I={intensity} (object mean {mean:.3f}): AP along sigma = [{values}], "
            f"violations: {violations or 'none'}")


def test_criterion_05_texture_irrelevance(exp2_run):
    curves = {}
    for row in exp2_run["rows"]:
        curves.setdefault(row.kind, {})[row.sigma] = row.mean_ap
    gap = max(abs(curves["shuffle"][s] - curves["intensity"][s]) for s in SIGMA_GRID)
    deform_ok = all(
        curves[kind][s] <= curves["shuffle"][s] + 0.05
        for kind in ("sink", "source")
        for s in SIGMA_GRID
        if s >= 1.0
    )
    ok = gap <= 0.15 and deform_ok
    _report(5, ok,
            f"max |AP_shuffle - AP_intensity@{exp2_run['reference']:.3f}| = {gap:.3f} "
            f"(<= 0.15); sink/source <= shuffle + 0.05 at sigma >= 1: {deform_ok}")


def _trough_ap_by_k(rows) -> dict[int, float]:
    by_k: dict[int, list[float]] = {}
    for row in rows:
        by_k.setdefault(row.k, []).append(row.mean_ap)
    return {k: float(np.mean(v)) for k, v in by_k.items()}


def test_criterion_06_capacity_reversal(exp3_runs):
    healthy = _trough_ap_by_k(exp3_runs["healthy"])
    anomalous = _trough_ap_by_k(exp3_runs["anomalous"])
    h = [healthy[k] for k in SUBSPACE_KS]
    a = [anomalous[k] for k in SUBSPACE_KS]
    h_ok = all(h[j + 1] >= h[j] - 0.02 for j in range(3))
    a_ok = all(a[j + 1] <= a[j] + 0.02 for j in range(3))
    ok = h_ok and a_ok and exp3_runs["elapsed"] < 300.0
    _report(6, ok,
            f"healthy AP by k {[f'{v:.3f}' for v in h]} non-decreasing: {h_ok}; "
            f"anomalous AP by k {[f'{v:.3f}' for v in a]} non-increasing: {a_ok}; "
            f"elapsed {exp3_runs['elapsed']:.0f}s")


def test_criterion_07_error_ap_anticorrelation(exp3_runs):
    errs = {}
    for row in exp3_runs["anomalous"]:
        errs[row.k] = row.mean_recon_err
    anomalous = _trough_ap_by_k(exp3_runs["anomalous"])
    err_list = [errs[k] for k in SUBSPACE_KS]
    ap_list = [anomalous[k] for k in SUBSPACE_KS]
    rho = float(spearmanr(err_list, ap_list).statistic)
    _report(7, rho >= 0.8,
            f"Spearman(healthy recon error, anomalous trough AP) = {rho:+.2f} (>= +0.8); "
            f"errors {[f'{v:.4f}' for v in err_list]}, APs {[f'{v:.3f}' for v in ap_list]}")


def test_criterion_08_histogram_equalization_symmetry(exp1_run, histeq_run):
    plain = {r.intensity: r.mean_ap for r in exp1_run["rows"] if r.sigma == 2.0}
    equalized = {r.intensity: r.mean_ap for r in histeq_run["rows"] if r.sigma == 2.0}
    drop = plain[0.9] - equalized[0.9]
    trough = min(equalized[i] for i in I_TROUGH)
    ok = drop >= 0.2 and trough <= 0.4
    _report(8, ok,
            f"AP(I=0.9) drop after equalization = {drop:.3f} (>= 0.2); "
            f"equalized trough min = {trough:.3f} (<= 0.4)")


def test_criterion_09_determinism_across_threads(datasets, tmp_path_factory):
    root = tmp_path_factory.mktemp("determinism")
    test_dir = Path(datasets["test_manifest"]).parent
    train_dir = Path(datasets["train_manifest"]).parent
    # sub-manifests keep this criterion fast: 8 test / 24 train images
    small_test = root / "test_manifest.txt"
    small_test.write_text(
        "".join(f"{test_dir}/img_{i:04d}.f32g\t{test_dir}/img_{i:04d}.maskg\n"
                for i in range(8))
    )
    small_train = root / "train_manifest.txt"
    small_train.write_text(
        "".join(f"{train_dir}/img_{i:04d}.f32g\t{train_dir}/img_{i:04d}.maskg\n"
                for i in range(24))
    )

    def run(name, threads, tag):
        out = root / f"{name}-t{threads}-{tag}"
        argv = {
            "exp1": ["exp1", "--intensity-grid", "0.2,0.6,1.0", "--sigma-grid", "0,2"],
            "exp2": ["exp2", "--sigma-grid", "0,2", "--kinds", "intensity,shuffle"],
            "exp3": ["exp3", "--mode", "anomalous", "--train-manifest", str(small_train),
                     "--subspace-k", "2,8", "--intensity-grid", "0.3,0.6"],
        }[name]
        argv += ["--test-manifest", str(small_test), "--radius", "12", "--seed", "5",
                 "--threads", str(threads), "--out", str(out)]
        assert cli_main(argv) == 0
        return {
            p.name: p.read_bytes()
            for p in sorted(out.iterdir())
            if p.suffix in (".csv", ".svg")
        }

    all_ok = True
    details = []
    for name in ("exp1", "exp2", "exp3"):
        outputs = [run(name, threads, tag) for threads in (1, 8) for tag in ("a", "b")]
        same = all(o == outputs[0] for o in outputs[1:])
        all_ok &= same
        details.append(f"{name}: {'identical' if same else 'DIVERGENT'} "
                       f"({len(outputs[0])} files x 4 runs)")
    _report(9, all_ok, "; ".join(details))


def test_criterion_10_wall_clock(suite_clock):
    elapsed = time.monotonic() - suite_clock
    _report(10, elapsed <= 600.0, f"acceptance suite wall clock = {elapsed:.0f}s (<= 600s)")


def test_criterion_11_secondary_parity_not_runnable_offline():
    print("[criterion 11] SKIP - needs the neural-training component plus conforming "
          "volume data; see the trainers package for the export pipeline")
    pytest.skip("secondary criterion: requires trained models and real volume data")
