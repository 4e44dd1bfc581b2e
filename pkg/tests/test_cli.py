from pathlib import Path

import pytest
import yaml
from click.testing import CliRunner

from csflab.errors import EXIT_CONFIG
from csflab.main import cli

CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture
def runner():
    return CliRunner()


def test_run_zero_config(runner, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ["run", "--config", str(CONFIGS / "zero.cfg"), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "init: ok" in result.output
    assert "evolve: ok" in result.output
    assert (out / "manifest.yaml").is_file()
    assert (out / "snapshots" / "snap_00000.txt").is_file()

    manifest = yaml.safe_load((out / "manifest.yaml").read_text(encoding="utf-8"))
    assert manifest["status"]["peel"] == "ok"
    assert "energy-report.txt" in manifest["artifacts"]


def test_run_rejects_cfl(runner, tmp_path):
    result = runner.invoke(cli, ["run", "--config", str(CONFIGS / "bad.cfg"), "--out", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG
    assert "CFL" in result.output
    assert not (tmp_path / "manifest.yaml").exists()


def test_run_bad_override(runner, tmp_path):
    result = runner.invoke(
        cli, ["run", "--config", str(CONFIGS / "zero.cfg"), "--set", "colour=red", "--out", str(tmp_path)]
    )
    assert result.exit_code == EXIT_CONFIG
    assert "error:" in result.output


def test_run_uses_output_dir_env(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("CSF_OUTPUT_DIR", str(tmp_path / "env-out"))
    result = runner.invoke(cli, ["run", "--config", str(CONFIGS / "zero.cfg"), "--stages", "init"])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "env-out" / "manifest.yaml").is_file()


def test_verify_with_no_cases(runner, tmp_path):
    result = runner.invoke(cli, ["verify", "inequalities", "--cases", "", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "[skip]" in result.output
    assert (tmp_path / "verify-inequalities.yaml").is_file()


def test_verify_unknown_suite(runner, tmp_path):
    result = runner.invoke(cli, ["verify", "everything", "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_report_after_run(runner, tmp_path):
    out = tmp_path / "out"
    assert runner.invoke(cli, ["run", "--config", str(CONFIGS / "zero.cfg"), "--out", str(out)]).exit_code == 0
    result = runner.invoke(cli, ["report", "--out", str(out)])
    assert result.exit_code == 0, result.output
    html = (out / "report.html").read_text(encoding="utf-8")
    assert "peel-report.txt" in html


def test_report_detects_changed_artifacts(runner, tmp_path):
    out = tmp_path / "out"
    runner.invoke(cli, ["run", "--config", str(CONFIGS / "zero.cfg"), "--stages", "init,evolve", "--out", str(out)])
    (out / "monitor.txt").write_text("changed\n", encoding="utf-8")
    result = runner.invoke(cli, ["report", "--out", str(out)])
    assert result.exit_code == 1
    assert (out / "report.html").is_file()


def test_report_without_run(runner, tmp_path):
    result = runner.invoke(cli, ["report", "--out", str(tmp_path)])
    assert result.exit_code == EXIT_CONFIG
    assert "manifest" in result.output


@pytest.mark.slow
def test_charged_gaussian_run(runner, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(
        cli,
        [
            "run",
            "--config",
            str(CONFIGS / "charged_gaussian.cfg"),
            "--T",
            "40",
            "--stages",
            "init,evolve,energy",
            "--threads",
            "2",
            "--out",
            str(out),
        ],
    )
    assert result.exit_code == 0, result.output
    assert (out / "charge-report.txt").is_file()
