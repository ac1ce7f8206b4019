import numpy as np
import pytest

from residual_lab.cli import build_parser, main
from residual_lab.grid import read_grid, read_manifest, write_grid, write_manifest
from residual_lab.grid import Grid
from conftest import build_phantom_manifest


def _run(argv):
    return main(argv)


def _dir_snapshot(root):
    """Map of relative path -> bytes for every file under root."""
    return {
        str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()
    }


# ---------------------------------------------------------------------------
# parser basics
# ---------------------------------------------------------------------------


def test_help_exits_zero_for_every_subcommand(capsys):
    subcommands = ["phantom", "inject", "fit-subspace", "reconstruct", "score",
                   "exp1", "exp2", "exp3", "histeq", "panels", "plot"]
    for name in subcommands:
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([name, "--help"])
        assert exc.value.code == 0
        out = capsys.readouterr().out
        assert "--help" in out


def test_unknown_flag_exits_one(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["phantom", "--bogus", "1"])
    assert exc.value.code == 1


def test_missing_subcommand_exits_one():
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([])
    assert exc.value.code == 1


# ---------------------------------------------------------------------------
# phantom / inject / fit-subspace / reconstruct / score
# ---------------------------------------------------------------------------


def test_phantom_writes_pairs_and_manifest(tmp_path):
    out = tmp_path / "data"
    assert _run(["phantom", "--seed", "3", "--n", "2", "--size", "64",
                 "--out", str(out)]) == 0
    manifest = read_manifest(out / "manifest.txt", role="test")
    assert len(manifest) == 2
    assert manifest.load_mask(0) is not None
    assert (out / "phantom.resolved.cfg").exists()


def test_inject_and_score_round_trip(tmp_path, capsys):
    data = tmp_path / "data"
    _run(["phantom", "--seed", "0", "--n", "1", "--size", "64", "--out", str(data)])
    records = tmp_path / "records"
    assert _run(["inject", "--manifest", str(data / "manifest.txt"),
                 "--kinds", "intensity", "--intensities", "1.0", "--radius", "6",
                 "--seed", "7", "--out", str(records)]) == 0
    assert (records / "img_0000__I1.f32g").exists()
    assert (records / "img_0000__I1.maskg").exists()
    assert (records / "img_0000__I1.json").exists()
    # score the |injected - healthy| map against the record truth: AP = 1.0
    injected = read_grid(records / "img_0000__I1.f32g")
    healthy = read_grid(data / "img_0000.f32g")
    scores = Grid(np.abs(injected.pixels - healthy.pixels))
    write_grid(scores, tmp_path / "scores.f32g")
    assert _run(["score", "--scores", str(tmp_path / "scores.f32g"),
                 "--truth", str(records / "img_0000__I1.maskg")]) == 0
    assert capsys.readouterr().out.strip() == "1"


def test_score_pairs_csv(tmp_path, capsys):
    data = tmp_path / "d"
    _run(["phantom", "--seed", "1", "--n", "1", "--size", "64", "--out", str(data)])
    records = tmp_path / "r"
    _run(["inject", "--manifest", str(data / "manifest.txt"), "--kinds", "intensity",
          "--intensities", "1.0", "--radius", "6", "--seed", "7", "--out", str(records)])
    injected = read_grid(records / "img_0000__I1.f32g")
    healthy = read_grid(data / "img_0000.f32g")
    write_grid(Grid(np.abs(injected.pixels - healthy.pixels)), tmp_path / "s.f32g")
    pairs = tmp_path / "pairs.txt"
    pairs.write_text(f"{tmp_path / 's.f32g'}\t{records / 'img_0000__I1.maskg'}\n")
    assert _run(["score", "--pairs", str(pairs)]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "image_id,ap"
    assert out.splitlines()[-1] == "__mean__,1"


def test_score_usage_error_exits_one():
    assert _run(["score"]) == 1


def test_fit_subspace_and_reconstruct(tmp_path):
    data = tmp_path / "train"
    _run(["phantom", "--seed", "10", "--n", "4", "--size", "64", "--role", "train",
          "--out", str(data)])
    model_path = tmp_path / "model.subspace"
    assert _run(["fit-subspace", "--train", str(data / "manifest.txt"), "--k", "2",
                 "--out", str(model_path)]) == 0
    out_grid = tmp_path / "recon.f32g"
    assert _run(["reconstruct", "--model", f"subspace:{model_path}",
                 "--input", str(data / "img_0000.f32g"), "--out", str(out_grid)]) == 0
    assert read_grid(out_grid).shape == (64, 64)
    # identity model reproduces the input bit-exactly
    ident = tmp_path / "ident.f32g"
    _run(["reconstruct", "--model", "identity", "--input", str(data / "img_0000.f32g"),
          "--out", str(ident)])
    assert read_grid(ident).pixels.tobytes() == read_grid(data / "img_0000.f32g").pixels.tobytes()


def test_data_error_exit_code_two(tmp_path):
    assert _run(["inject", "--manifest", str(tmp_path / "none.txt"),
                 "--out", str(tmp_path / "o")]) == 2
    assert _run(["reconstruct", "--model", "blur:-1", "--input", "x", "--out", "y"]) == 2


def test_bad_model_spec_exit_code_one(tmp_path):
    assert _run(["reconstruct", "--model", "wavelet:3", "--input", "x", "--out", "y"]) == 1


# ---------------------------------------------------------------------------
# experiment subcommands
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cli_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    manifest = build_phantom_manifest(root, 4, seed0=0, size=128)
    write_manifest(manifest, root / "manifest.txt")
    return root


def test_exp1_run_and_rerun_identical(cli_dataset, tmp_path):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    args = ["exp1", "--test-manifest", str(cli_dataset / "manifest.txt"),
            "--intensity-grid", "0.2,1.0", "--sigma-grid", "0,2",
            "--radius", "12", "--seed", "7", "--threads", "2"]
    assert _run(args + ["--out", str(out_a)]) == 0
    assert _run(args + ["--out", str(out_b)]) == 0
    assert (out_a / "exp1.csv").exists()
    assert (out_a / "exp1_heatmap.svg").exists()
    assert (out_a / "exp1_lines.svg").exists()
    assert (out_a / "resolved_config.cfg").exists()
    snap_a = {k: v for k, v in _dir_snapshot(out_a).items() if k != "resolved_config.cfg"}
    snap_b = {k: v for k, v in _dir_snapshot(out_b).items() if k != "resolved_config.cfg"}
    assert snap_a == snap_b
    # the snapshot differs only in out_dir
    cfg_a = (out_a / "resolved_config.cfg").read_text()
    assert "experiment = exp1" in cfg_a
    assert "master_seed = 7" in cfg_a


def test_exp1_config_file_with_flag_override(cli_dataset, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "\n".join([
            "experiment = exp1",
            f"test_manifest = {cli_dataset / 'manifest.txt'}",
            f"out_dir = {tmp_path / 'from_file'}",
            "intensity_grid = 0.5",
            "sigma_grid = 0",
            "radius = 12",
            "master_seed = 1",
            "threads = 1",
        ]) + "\n"
    )
    out = tmp_path / "flag_wins"
    assert _run(["exp1", "--config", str(cfg), "--out", str(out), "--seed", "9"]) == 0
    text = (out / "resolved_config.cfg").read_text()
    assert "master_seed = 9" in text  # flag overrode the file value
    assert (out / "exp1.csv").exists()


def test_exp2_and_histeq_and_plot(cli_dataset, tmp_path):
    out2 = tmp_path / "e2"
    assert _run(["exp2", "--test-manifest", str(cli_dataset / "manifest.txt"),
                 "--sigma-grid", "0,1", "--kinds", "intensity,shuffle",
                 "--reference-intensity", "0.45", "--radius", "12", "--seed", "3",
                 "--threads", "1", "--out", str(out2)]) == 0
    assert (out2 / "exp2.csv").exists()
    assert (out2 / "exp2_lines.svg").exists()
    outh = tmp_path / "eh"
    assert _run(["histeq", "--test-manifest", str(cli_dataset / "manifest.txt"),
                 "--intensity-grid", "0.9", "--sigma-grid", "2", "--radius", "12",
                 "--seed", "3", "--threads", "1", "--out", str(outh)]) == 0
    assert (outh / "exp1-histeq.csv").exists()
    replot = tmp_path / "replot"
    assert _run(["plot", "--csv", str(out2 / "exp2.csv"), "--out", str(replot)]) == 0
    assert (replot / "exp2_lines.svg").read_bytes() == (out2 / "exp2_lines.svg").read_bytes()


def test_exp3_cli(cli_dataset, tmp_path):
    train_root = tmp_path / "train"
    manifest = build_phantom_manifest(train_root, 6, seed0=900, size=128, role="train")
    write_manifest(manifest, train_root / "manifest.txt")
    out = tmp_path / "e3"
    assert _run(["exp3", "--test-manifest", str(cli_dataset / "manifest.txt"),
                 "--train-manifest", str(train_root / "manifest.txt"),
                 "--subspace-k", "0,2", "--mode", "anomalous",
                 "--intensity-grid", "0.3,0.6", "--radius", "12", "--seed", "3",
                 "--threads", "1", "--out", str(out)]) == 0
    assert (out / "exp3-anomalous.csv").exists()
    assert (out / "exp3-anomalous_lines.svg").exists()
    assert (out / "exp3-anomalous_error_vs_ap.svg").exists()


def test_exp3_requires_models(cli_dataset, tmp_path):
    assert _run(["exp3", "--test-manifest", str(cli_dataset / "manifest.txt"),
                 "--out", str(tmp_path / "x")]) == 1  # usage error, no models


def test_panels_cli(cli_dataset, tmp_path):
    out = tmp_path / "p"
    assert _run(["panels", "--manifest", str(cli_dataset / "manifest.txt"),
                 "--images", "0", "--kinds", "intensity", "--intensities", "0.44",
                 "--sigmas", "2", "--radius", "12", "--seed", "7",
                 "--out", str(out)]) == 0
    assert (out / "img_0000__I0.44__sigma2.png").exists()
