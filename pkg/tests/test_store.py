import numpy as np
import pytest

from csflab.errors import EXIT_CONFIG, CFLViolation, ConfigParse, StageFailure
from csflab.evolve import init_state
from csflab.store import (
    RunWriter,
    fmt,
    load_config,
    output_dir,
    parse_overrides,
    read_header,
    read_manifest,
    read_rows,
    read_snapshot,
    verify_manifest,
)


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# sample\nscheme = sph1d\nrecipe = zero\nh = 0.1\nT = 4\nR_max = 20\ns = 0.8\n", encoding="utf-8")
    return path


def test_parse_overrides():
    assert parse_overrides(["h=0.1", " T = 2 "]) == {"h": "0.1", "T": "2"}


@pytest.mark.parametrize("item", ["h", "=1", ""])
def test_parse_overrides_rejects(item):
    with pytest.raises(ConfigParse):
        parse_overrides([item])


def test_load_config_with_overrides(cfg_file):
    cfg = load_config(str(cfg_file), {"T": "2"})
    assert cfg.recipe == "zero"
    assert cfg.h == pytest.approx(0.1)
    assert cfg.T == pytest.approx(2.0)
    assert cfg.weights.s == pytest.approx(0.8)
    assert cfg.cells == 200


def test_load_config_rejects_bad_cfl(cfg_file):
    with pytest.raises(ConfigParse) as exc:
        load_config(str(cfg_file), {"cfl": "1.2"})
    assert "CFL" in str(exc.value)
    assert exc.value.exit_code == EXIT_CONFIG


def test_load_config_rejects_unknown_key_and_missing_file(cfg_file, tmp_path):
    with pytest.raises(ConfigParse):
        load_config(str(cfg_file), {"colour": "red"})
    with pytest.raises(ConfigParse):
        load_config(str(tmp_path / "missing.cfg"))


def test_load_config_rejects_causal_overlap(cfg_file):
    with pytest.raises(ConfigParse, match="causal"):
        load_config(str(cfg_file), {"T": "30"})


def test_output_dir_from_env(monkeypatch):
    monkeypatch.setenv("CSF_OUTPUT_DIR", "/tmp/elsewhere")
    assert output_dir() == "/tmp/elsewhere"
    monkeypatch.delenv("CSF_OUTPUT_DIR")
    assert output_dir() == "./csf-out"


def test_fmt_round_trips_doubles():
    x = 0.1 + 0.2
    assert float(fmt(x)) == x


def test_snapshot_and_manifest(tmp_path, cfg_file):
    cfg = load_config(str(cfg_file))
    writer = RunWriter(tmp_path / "out")
    state = init_state(cfg)
    writer.write_snapshot(state, 0)
    writer.write_rows("rows.txt", ["rows v1; k=1"], ["name", "value"], [("a", 0.5), ("b", 2)])
    writer.write_manifest(cfg, ["init"], 7, {"init": "ok"})

    header, cols = read_snapshot(tmp_path / "out" / "snapshots" / "snap_00000.txt")
    assert header["grid"] == "sph1d"
    assert float(header["t"]) == 0.0
    assert np.allclose(cols["r"], state.r)
    assert np.all(cols["E_r"] == 0.0)

    assert read_header(tmp_path / "out" / "rows.txt")["k"] == "1"
    names, rows = read_rows(tmp_path / "out" / "rows.txt")
    assert names == ["name", "value"]
    assert rows == [["a", "0.5"], ["b", "2"]]

    manifest = read_manifest(tmp_path / "out")
    assert manifest["seed"] == 7
    assert manifest["status"] == {"init": "ok"}
    assert set(manifest["artifacts"]) == {"snapshots/snap_00000.txt", "rows.txt"}
    assert verify_manifest(tmp_path / "out") == []

    (tmp_path / "out" / "rows.txt").write_text("tampered\n", encoding="utf-8")
    assert verify_manifest(tmp_path / "out") == ["rows.txt"]


def test_read_snapshot_rejects_other_files(tmp_path):
    writer = RunWriter(tmp_path)
    path = writer.write_rows("rows.txt", ["rows v1"], ["a"], [(1.0,)])
    with pytest.raises(ConfigParse):
        read_snapshot(path)


def test_missing_manifest(tmp_path):
    with pytest.raises(ConfigParse):
        read_manifest(tmp_path)


def test_stage_failure_keeps_exit_code():
    err = StageFailure("evolve", CFLViolation("too big"))
    assert err.exit_code == EXIT_CONFIG
    assert "evolve" in str(err)
