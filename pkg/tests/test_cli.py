"""
Tests for the command-line surface
"""

import json
import os

import numpy as np
import pandas as pd
import pytest

import config
from cli import build_parser, config_file_args, main
from utils.fixtures import FixtureGenerator


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("fixtures")
    FixtureGenerator(n_points=3000, seed=0).write_all(str(out_dir), ["plane", "sphere"])
    return out_dir


@pytest.fixture
def plane_path(fixture_dir):
    return str(fixture_dir / "plane.ply")


def run(capsys, *argv):
    """main() exit code plus captured stdout and stderr"""
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def first_line(path):
    with open(path, encoding="utf-8") as f:
        return f.readline().strip()


# ============================================================================
# voxelize
# ============================================================================

def test_voxelize_writes_pyramid(capsys, tmp_path, plane_path):
    out = str(tmp_path / "pyr.txt")
    code, stdout, _ = run(capsys, "voxelize", "--input", plane_path, "--resolution", "16",
                          "--percentile", "75", "--out", out)

    assert code == 0
    assert first_line(out) == "base_resolution 16"
    assert os.path.exists(str(tmp_path / "pyr.metrics.csv"))
    assert os.path.exists(str(tmp_path / "pyr.centers.ply"))
    assert "leaves" in stdout


def test_voxelize_json_summary(capsys, tmp_path, plane_path):
    code, stdout, _ = run(capsys, "voxelize", "-i", plane_path, "-o", str(tmp_path / "pyr.txt"),
                          "--resolution", "8", "--format", "json")
    summary = json.loads(stdout)

    assert code == 0
    assert summary["resolution"] == 8
    assert summary["points"] == 3000
    assert summary["leaves"] == sum(summary["leaves_per_level"].values())


def test_voxelize_fixed_resolution_mode(capsys, tmp_path, plane_path):
    out = str(tmp_path / "frv.txt")
    code, _, _ = run(capsys, "voxelize", "-i", plane_path, "-o", out, "--resolution", "8", "--mode", "frv")

    assert code == 0
    with open(out, encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 2 + 8 ** 3
    assert not os.path.exists(str(tmp_path / "frv.metrics.csv"))


def test_voxelize_explicit_outputs(capsys, tmp_path, plane_path):
    metrics = str(tmp_path / "m" / "cells.csv")
    grid = str(tmp_path / "grid.txt")
    code, _, _ = run(capsys, "voxelize", "-i", plane_path, "-o", str(tmp_path / "pyr.txt"), "--resolution", "8",
                     "--metrics-out", metrics, "--grid-out", grid)

    assert code == 0
    assert list(pd.read_csv(metrics).columns) == config.METRICS_CSV_COLUMNS
    assert first_line(grid) == "resolution 8"


def test_voxelize_fixed_threshold(capsys, tmp_path, plane_path):
    out = str(tmp_path / "pyr.txt")
    code, _, _ = run(capsys, "voxelize", "-i", plane_path, "-o", out, "--resolution", "8",
                     "--threshold", "d=inf", "--threshold", "sigma_s=inf", "--threshold", "normal_variation=inf",
                     "--threshold", "lambda_linear=inf", "--threshold", "lambda_planar=inf",
                     "--threshold", "H_s=inf", "--threshold", "kappa=inf")

    assert code == 0
    # nothing is complex, so everything collapses into one root
    with open(out, encoding="utf-8") as f:
        assert f.read().splitlines()[2:] == ["3 0 0 0 non_complex 3000"]


def test_voxelize_is_deterministic(capsys, tmp_path, plane_path):
    outputs = []
    for name in ("a", "b"):
        out = str(tmp_path / f"{name}.txt")
        assert run(capsys, "voxelize", "-i", plane_path, "-o", out, "--resolution", "16")[0] == 0
        with open(out, "rb") as f, open(str(tmp_path / f"{name}.metrics.csv"), "rb") as g:
            outputs.append((f.read(), g.read()))
    assert outputs[0] == outputs[1]


def test_voxelize_missing_input_flag(capsys, tmp_path):
    code, _, stderr = run(capsys, "voxelize", "--out", str(tmp_path / "pyr.txt"))
    assert code == 2
    assert "--input" in stderr


def test_voxelize_bad_resolution(capsys, tmp_path, plane_path):
    code, _, stderr = run(capsys, "voxelize", "-i", plane_path, "-o", str(tmp_path / "pyr.txt"),
                          "--resolution", "12")
    assert code == 2
    assert "power of two" in stderr


def test_voxelize_missing_file(capsys, tmp_path):
    code, _, stderr = run(capsys, "voxelize", "-i", str(tmp_path / "absent.ply"), "-o", str(tmp_path / "pyr.txt"))
    assert code == 2
    assert "absent.ply" in stderr


def test_voxelize_unknown_metric(capsys, tmp_path, plane_path):
    code, _, _ = run(capsys, "voxelize", "-i", plane_path, "-o", str(tmp_path / "pyr.txt"),
                     "--threshold", "volume=1")
    assert code == 2


def test_voxelize_malformed_cloud(capsys, tmp_path, write_text):
    bad = write_text("bad.ply", "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n"
                                "property float z\nend_header\n0 0 0\n")
    code, _, stderr = run(capsys, "voxelize", "-i", bad, "-o", str(tmp_path / "pyr.txt"))
    assert code == 2
    assert "line" in stderr


# ============================================================================
# eval
# ============================================================================

def test_eval_identical_clouds(capsys, plane_path):
    code, stdout, _ = run(capsys, "eval", "--pred", plane_path, "--gt", plane_path, "--format", "json")
    report = json.loads(stdout)

    assert code == 0
    assert list(report) == config.REPORT_SCORE_KEYS
    assert report["chamfer"] == 0.0
    assert all(report[key] == 1.0 for key in config.REPORT_SCORE_KEYS[1:])


def test_eval_text_report(capsys, fixture_dir):
    code, stdout, _ = run(capsys, "eval", "--pred", str(fixture_dir / "sphere.ply"),
                          "--gt", str(fixture_dir / "plane.ply"))
    assert code == 0
    assert stdout.splitlines()[0].startswith("Metric")


def test_eval_resolution_mismatch(capsys, plane_path):
    code, _, stderr = run(capsys, "eval", "--pred", plane_path, "--gt", plane_path,
                          "--resolution", "16", "--pred-resolution", "32")
    assert code == 2
    assert "resolution" in stderr


# ============================================================================
# bench
# ============================================================================

def test_bench_both_modes(capsys, fixture_dir):
    code, stdout, _ = run(capsys, "bench", "--fixtures", str(fixture_dir), "--resolution", "8")
    lines = stdout.splitlines()

    assert code == 0
    assert len(lines) == 4
    assert lines[2].startswith("FRV")
    assert lines[3].startswith("DR-MSV")


def test_bench_single_mode_json(capsys, fixture_dir):
    code, stdout, _ = run(capsys, "bench", "--fixtures", str(fixture_dir), "--resolution", "8",
                          "--mode", "frv-only", "--format", "json")
    rows = json.loads(stdout)

    assert code == 0
    assert len(rows) == 1
    assert rows[0]["mode"] == "FRV"
    assert rows[0]["shape_count"] == 2
    assert rows[0]["leaf_count"] == rows[0]["cell_count"] == 2 * 8 ** 3


def test_bench_downstream_stage_can_be_skipped(capsys, fixture_dir):
    code, stdout, _ = run(capsys, "bench", "--fixtures", str(fixture_dir), "--resolution", "8",
                          "--mode", "drmsv-only", "--downstream-epochs", "0", "--format", "json")
    timings = json.loads(stdout)[0]["timings"]

    assert code == 0
    assert set(timings) == set(config.TIMING_KEYS)
    assert timings["downstream"] < timings["fit"]


def test_bench_empty_directory(capsys, tmp_path):
    code, _, stderr = run(capsys, "bench", "--fixtures", str(tmp_path))
    assert code == 2
    assert "No point cloud files" in stderr


def test_bench_missing_directory(capsys, tmp_path):
    assert run(capsys, "bench", "--fixtures", str(tmp_path / "absent"))[0] == 2


# ============================================================================
# pool
# ============================================================================

@pytest.fixture
def tokens_path(write_text):
    return write_text("tokens.csv", "0.5,-1.0,2.0\n1.5,0.25,-3.0\n-0.5,4.0,1.0\n")


def pool_json(capsys, *argv):
    code, stdout, stderr = run(capsys, "pool", *argv, "--format", "json")
    return code, (json.loads(stdout) if code == 0 else None), stderr


def test_pool_baseline_is_column_max(capsys, tokens_path):
    code, results, _ = pool_json(capsys, "--tokens", tokens_path, "--variant", "baseline_max")

    assert code == 0
    assert results["baseline_max"]["g"] == [1.5, 4.0, 2.0]
    assert results["baseline_max"]["lambda"] == 0.0


def test_pool_fixed_fusion(capsys, tokens_path):
    code, results, _ = pool_json(capsys, "--tokens", tokens_path, "--variant", "tap_res_fixed")

    assert code == 0
    assert results["tap_res_fixed"]["lambda"] == 0.5
    assert sum(results["tap_res_fixed"]["alpha"]) == pytest.approx(1.0)


def test_pool_all_variants(capsys, tokens_path):
    code, results, _ = pool_json(capsys, "--tokens", tokens_path, "--variant", "all")
    assert code == 0
    assert list(results) == list(config.POOLING_VARIANTS)


def test_pool_grad_check(capsys):
    code, results, _ = pool_json(capsys, "--synthetic", "--grad-check")

    assert code == 0
    assert results["gradient_check"]["passed"] is True
    assert results["gradient_check"]["configs"] == config.GRAD_CHECK_CONFIGS


def test_pool_training_writes_curves(capsys, tmp_path):
    loss_out = str(tmp_path / "loss.csv")
    params_out = str(tmp_path / "params.txt")
    code, results, _ = pool_json(capsys, "--synthetic", "--train", "--epochs", "5", "--variant", "all",
                                 "--loss-out", loss_out, "--params-out", params_out)

    assert code == 0
    for variant in config.POOLING_VARIANTS:
        curve = pd.read_csv(str(tmp_path / f"loss.{variant}.csv"))
        assert len(curve) == 5
        assert os.path.exists(str(tmp_path / f"params.{variant}.txt"))
        assert results[variant]["final_loss"] == pytest.approx(curve["loss"].iloc[-1])


def test_pool_resumes_from_params(capsys, tmp_path):
    params_out = str(tmp_path / "params.txt")
    assert pool_json(capsys, "--synthetic", "--train", "--epochs", "3", "--params-out", params_out)[0] == 0

    code, results, _ = pool_json(capsys, "--synthetic", "--params", params_out)
    assert code == 0
    assert 0.0 < results["tap_res_learnt"]["lambda"] < 1.0


def test_pool_malformed_tokens(capsys, write_text):
    bad = write_text("bad.csv", "1,2\n3,oops\n")
    code, _, stderr = run(capsys, "pool", "--tokens", bad)

    assert code == 2
    assert "row 2" in stderr


def test_pool_param_width_mismatch(capsys, tmp_path, tokens_path):
    params_out = str(tmp_path / "params.txt")
    assert pool_json(capsys, "--synthetic", "--params-out", params_out)[0] == 0

    code, _, _ = run(capsys, "pool", "--tokens", tokens_path, "--params", params_out)
    assert code == 2


def test_pool_train_needs_synthetic(capsys, tokens_path):
    assert run(capsys, "pool", "--tokens", tokens_path, "--train")[0] == 2


def test_pool_needs_a_source(capsys):
    assert run(capsys, "pool")[0] == 2


# ============================================================================
# gen-fixtures and --config
# ============================================================================

def test_gen_fixtures(capsys, tmp_path):
    out_dir = tmp_path / "fx"
    code, _, _ = run(capsys, "gen-fixtures", "--out", str(out_dir), "--points", "500")

    assert code == 0
    assert sorted(os.listdir(out_dir)) == sorted(f"{name}.ply" for name in config.FIXTURE_NAMES)
    with open(out_dir / "sphere.ply", encoding="utf-8") as f:
        assert "element vertex 500" in f.read()


def test_gen_fixtures_subset(capsys, tmp_path):
    out_dir = tmp_path / "fx"
    code, _, _ = run(capsys, "gen-fixtures", "-o", str(out_dir), "--names", "line", "plane", "--points", "100")
    assert code == 0
    assert sorted(os.listdir(out_dir)) == ["line.ply", "plane.ply"]


def test_gen_fixtures_rejects_zero_points(capsys, tmp_path):
    assert run(capsys, "gen-fixtures", "-o", str(tmp_path), "--points", "0")[0] == 2


def test_config_file_sets_defaults(capsys, tmp_path, plane_path, write_text):
    settings = write_text("voxel.env", "resolution=8\nmax_level=1\nverbose=true\n")
    out = str(tmp_path / "pyr.txt")
    code, _, stderr = run(capsys, "voxelize", "--config", settings, "-i", plane_path, "-o", out)

    assert code == 0
    assert first_line(out) == "base_resolution 8"
    assert "✓" in stderr


def test_explicit_flags_beat_config_file(capsys, tmp_path, plane_path, write_text):
    settings = write_text("voxel.env", "resolution=8\n")
    out = str(tmp_path / "pyr.txt")
    code, _, _ = run(capsys, "voxelize", "--config", settings, "-i", plane_path, "-o", out, "--resolution", "4")

    assert code == 0
    assert first_line(out) == "base_resolution 4"


def test_config_file_tokens(write_text):
    settings = write_text("pool.env", "VARIANT=tap_only\nstep_size=0.1\ntrain=no\nsynthetic=1\n")
    assert config_file_args(settings) == ["--variant", "tap_only", "--step-size", "0.1", "--synthetic"]


def test_config_file_errors(capsys, tmp_path, plane_path, write_text):
    empty_value = write_text("bad.env", "resolution=\n")
    assert run(capsys, "voxelize", "--config", empty_value, "-i", plane_path, "-o", str(tmp_path / "p.txt"))[0] == 2
    assert run(capsys, "voxelize", "--config", str(tmp_path / "absent.env"), "-i", plane_path,
               "-o", str(tmp_path / "p.txt"))[0] == 2


def test_parser_requires_a_command(capsys):
    assert run(capsys)[0] == 2
    assert build_parser().parse_args(["gen-fixtures", "-o", "x"]).points == config.DEFAULT_FIXTURE_POINTS
