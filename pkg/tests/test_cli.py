"""End-to-end CLI contract: exit codes, artifacts, determinism."""

import shutil

import numpy as np
import pytest
import yaml

from payloadcal.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main

TINY = {
    "width": 8,
    "base_minutes": 0.5,
    "excitation_minutes": 0.2,
    "n_payloads": 2,
    "test_payload_index": 1,
    "test_duration_s": 4.0,
    "base_epochs": 2,
    "pspm_epochs": 2,
    "papm_epochs": 2,
    "olm_epochs": 3,
}


@pytest.fixture(scope="module")
def tiny_cfg(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, tiny_cfg):
    """One fully trained tiny workspace shared by the read-only tests."""
    ws = tmp_path_factory.mktemp("ws")
    for cmd in ("gen-data", "train-base", "train-pspm", "train-papm"):
        code = main(["--workdir", str(ws), "--config", str(tiny_cfg), cmd])
        assert code == EXIT_OK, cmd
    return ws


def run(ws, tiny_cfg, *argv):
    return main(["--workdir", str(ws), "--config", str(tiny_cfg), *argv])


class TestUsageErrors:
    def test_unknown_command(self, tmp_path):
        assert main(["--workdir", str(tmp_path), "frobnicate"]) == EXIT_USAGE

    def test_missing_required_flag(self, tmp_path):
        assert main(["--workdir", str(tmp_path), "calibrate"]) == EXIT_USAGE

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "bad.yaml"
        cfg.write_text("no_such_knob: 3\n")
        code = main(["--workdir", str(tmp_path), "--config", str(cfg), "gen-data"])
        assert code == EXIT_USAGE


class TestDataErrors:
    def test_train_without_data(self, tmp_path, capsys):
        code = main(["--workdir", str(tmp_path), "train-base"])
        assert code == EXIT_DATA
        assert "gen-data" in capsys.readouterr().err

    def test_calibrate_without_models(self, tmp_path, tiny_cfg):
        code = run(tmp_path, tiny_cfg, "calibrate", "--scheme", "mb")
        assert code == EXIT_DATA

    def test_corrupt_model_is_numeric_error(self, workspace, tiny_cfg, tmp_path):
        ws = tmp_path / "ws"
        shutil.copytree(workspace, ws)
        target = ws / "models" / "base.mlp"
        blob = bytearray(target.read_bytes())
        blob[-5] ^= 0xFF
        target.write_bytes(bytes(blob))
        code = run(ws, tiny_cfg, "train-pspm")
        assert code == EXIT_NUMERIC


class TestPipeline:
    def test_gen_data_layout(self, workspace):
        data = workspace / "data"
        manifest = yaml.safe_load((data / "manifest.yaml").read_text())
        assert manifest["schema_version"] == 1
        assert len(manifest["payload_ids"]) == TINY["n_payloads"]
        for pid in manifest["payload_ids"]:
            assert (data / f"raw_{pid}.npz").exists()
            assert (data / f"calibration_{pid}.csv").exists()
        assert (data / "base.npz").exists()

    def test_models_written(self, workspace):
        models = workspace / "models"
        assert (models / "base.mlp").exists()
        assert (models / "papm.mlp").exists()
        assert (models / "bank" / "bank.yaml").exists()

    @pytest.mark.parametrize("scheme", ["mb", "olm", "pspm", "papm"])
    def test_calibrate_outcome_file(self, workspace, tiny_cfg, scheme):
        assert run(workspace, tiny_cfg, "calibrate", "--scheme", scheme) == EXIT_OK
        text = (workspace / "reports" / f"calibration_{scheme}.txt").read_text()
        assert "trajectory_duration_s: 4.000" in text
        assert "trajectory_frames: 400" in text
        assert "wall_time_s:" in text

    def test_evaluate_writes_rmse_table(self, workspace, tiny_cfg, capsys):
        assert run(workspace, tiny_cfg, "evaluate", "--n-seeds", "1") == EXIT_OK
        csv = (workspace / "reports" / "rmse.csv").read_text()
        lines = csv.strip().splitlines()
        assert lines[0].startswith("scheme,J1,")
        labels = [ln.split(",")[0] for ln in lines[1:]]
        assert labels == ["Base", "Model-based", "OLM", "PsPM+Base", "PaPM+Base"]
        out = capsys.readouterr().out
        assert "RMSE on test trajectory" in out

    def test_report_includes_checksums(self, workspace, tiny_cfg):
        assert run(workspace, tiny_cfg, "report", "--n-seeds", "1") == EXIT_OK
        reports = workspace / "reports"
        text = (reports / "report.txt").read_text()
        assert "artifact checksums:" in text
        sums = (reports / "checksums.txt").read_text().strip().splitlines()
        assert any("base.mlp" in ln for ln in sums)
        for ln in sums:
            digest = ln.split()[0]
            assert len(digest) == 64
            int(digest, 16)

    def test_simulate_compliance_joint(self, workspace, tiny_cfg):
        code = run(workspace, tiny_cfg, "simulate-compliance", "--mode", "joint",
                   "--duration", "0.5")
        assert code == EXIT_OK
        out = workspace / "reports" / "compliance_joint.csv"
        lines = out.read_text().splitlines()
        assert lines[0] == "# schema_version: 1"
        assert len(lines) == 2 + int(0.5 * 200)

    def test_task_mode_requires_we_model(self, workspace, tiny_cfg):
        code = run(workspace, tiny_cfg, "simulate-compliance", "--mode", "task")
        assert code == EXIT_DATA

    def test_ablate_datasize(self, workspace, tiny_cfg):
        code = run(workspace, tiny_cfg, "ablate-datasize",
                   "--minutes", "1", "2", "--n-seeds", "1")
        assert code == EXIT_OK
        csv = (workspace / "reports" / "datasize.csv").read_text()
        lines = csv.strip().splitlines()
        assert lines[0] == "minutes,J1,J2,J3,J4,J5,J6"
        assert [ln.split(",")[0] for ln in lines[1:]] == ["1", "2"]


class TestDeterminism:
    def test_repeated_reports_identical(self, tmp_path, tiny_cfg):
        texts = []
        for name in ("a", "b"):
            ws = tmp_path / name
            for cmd in ("gen-data", "train-base", "train-pspm", "train-papm"):
                assert run(ws, tiny_cfg, cmd) == EXIT_OK
            assert run(ws, tiny_cfg, "report", "--n-seeds", "1") == EXIT_OK
            texts.append((ws / "reports" / "report.txt").read_bytes())
        assert texts[0] == texts[1]
