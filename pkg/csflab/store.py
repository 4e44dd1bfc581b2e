"""設定の読み込みと成果物の書き出し

数値はすべて %.17g（ロケール非依存）、時刻などの揮発情報は書かない。
"""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import yaml
from dotenv import dotenv_values
from pydantic import ValidationError

from csflab.errors import ConfigParse
from csflab.evolve import SphericalState1D
from csflab.schemas import RunConfig, WeightParams

logger = logging.getLogger(__name__)

FMT = "%.17g"
WEIGHT_KEYS = tuple(WeightParams.model_fields)
MANIFEST = "manifest.yaml"


def output_dir() -> str:
    return os.getenv("CSF_OUTPUT_DIR", "").strip() or "./csf-out"


def log_level() -> str:
    return (os.getenv("CSF_LOG_LEVEL", "").strip() or "INFO").upper()


def fmt(x: float) -> str:
    return FMT % float(x)


# ==========================
# 設定
# ==========================
def parse_overrides(items: Iterable[str]) -> Dict[str, str]:
    """--set key=value の並びを辞書にする"""
    out: Dict[str, str] = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigParse(f"override must look like key=value: {item!r}")
        out[key.strip()] = value.strip()
    return out


def config_from_mapping(raw: Mapping[str, Any]) -> RunConfig:
    flat = dict(raw)
    missing = [k for k, v in flat.items() if v is None]
    if missing:
        raise ConfigParse("config keys without a value", keys=sorted(missing))
    weights = {k: flat.pop(k) for k in WEIGHT_KEYS if k in flat}
    if weights:
        flat["weights"] = weights
    try:
        return RunConfig.model_validate(flat)
    except ValidationError as e:
        msgs = []
        for err in e.errors():
            loc = ".".join(str(p) for p in err["loc"])
            msg = err["msg"].removeprefix("Value error, ")
            msgs.append(f"{loc}: {msg}" if loc else msg)
        raise ConfigParse("; ".join(msgs)) from e


def load_config(path: Optional[str], overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    """key = value 形式のファイルを読み、overrides で上書きして検証する"""
    raw: Dict[str, Any] = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigParse("config file not found", path=str(p))
        raw.update(dotenv_values(p))
    raw.update(overrides or {})
    cfg = config_from_mapping(raw)
    logger.debug("config loaded from %s: %s", path, cfg.model_dump())
    return cfg


# ==========================
# 書き出し
# ==========================
def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class RunWriter:
    """out_dir に成果物を書き、manifest 用にハッシュを控える"""

    out_dir: Path
    artifacts: Dict[str, Dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)

    def _record(self, name: str) -> Path:
        path = self.out_dir / name
        self.artifacts[name] = {"sha256": _sha256(path), "bytes": path.stat().st_size}
        logger.debug("wrote %s", path)
        return path

    def write_table(self, name: str, header: Sequence[str], columns: Sequence[str], data: np.ndarray) -> Path:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            fh.write("# columns: " + " ".join(columns) + "\n")
            if len(data):
                np.savetxt(fh, np.atleast_2d(data), fmt=FMT)
        return self._record(name)

    def write_rows(self, name: str, header: Sequence[str], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """文字列と数値が混ざる表"""
        path = self.out_dir / name
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            fh.write("# columns: " + " ".join(columns) + "\n")
            for row in rows:
                cells = [fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row]
                fh.write(" ".join(cells) + "\n")
        return self._record(name)

    # --- 個別の形式 ---
    def write_snapshot(self, state, index: int) -> Path:
        g = state.grid
        if isinstance(state, SphericalState1D):
            cols = ["r", "re_psi", "im_psi", "re_Pi", "im_Pi", "E_r"]
            data = np.column_stack(
                [state.r, state.psi.real, state.psi.imag, state.Pi.real, state.Pi.imag, state.E_r]
            )
            kind = "sph1d"
        else:
            cols = ["x", "y", "z", "re_phi", "im_phi", "re_phi_t", "im_phi_t"]
            cols += [f"A{m}" for m in range(4)] + [f"A{m}_t" for m in range(4)]
            pts = g.points().reshape(-1, 3)
            parts = [pts, state.phi.real.reshape(-1, 1), state.phi.imag.reshape(-1, 1)]
            parts += [state.phi_t.real.reshape(-1, 1), state.phi_t.imag.reshape(-1, 1)]
            parts += [state.A.reshape(4, -1).T, state.A_t.reshape(4, -1).T]
            data = np.hstack(parts)
            kind = "box3d"
        header = [f"csf-snapshot v1; grid={kind}; n={g.n}; h={fmt(g.h)}; t={fmt(state.t)}"]
        return self.write_table(f"snapshots/snap_{index:05d}.txt", header, cols, data)

    def write_monitor(self, rows) -> Path:
        data = np.array([[m.t, m.q, m.gauss, m.gauge, m.energy] for m in rows])
        return self.write_table("monitor.txt", ["monitor v1"], ["t", "q", "gauss", "gauge", "energy"], data)

    def write_charge_report(self, rows) -> Path:
        q0 = rows[0].q
        rel = [abs(m.q - q0) / abs(q0) if q0 != 0 else abs(m.q - q0) for m in rows]
        data = np.array([[m.t, m.q, d] for m, d in zip(rows, rel)])
        header = [f"charge-report v1; q0={fmt(q0)}; max_drift={fmt(max(rel))}"]
        return self.write_table("charge-report.txt", header, ["t", "q", "rel_drift"], data)

    def write_energy_report(self, breakdowns: Mapping[str, Any], extra: Mapping[str, float]) -> Path:
        rows: List[Tuple[Any, ...]] = []
        for field_name in sorted(breakdowns):
            b = breakdowns[field_name]
            for piece, comp, wtag, value in b.rows():
                rows.append((field_name, piece, comp, wtag, float(value)))
            rows.append((field_name, "total", "all", "none", float(b.total)))
        for key in sorted(extra):
            rows.append(("audit", key, "-", "none", float(extra[key])))
        return self.write_rows("energy-report.txt", ["energy-report v1"], ["field", "piece", "component", "weight", "value"], rows)

    def write_energy_series(self, breakdowns: Mapping[str, Any]) -> Path:
        names = sorted(breakdowns)
        series = [breakdowns[n].series for n in names]
        data = np.array([[t] + [s[k][1] for s in series] for k, (t, _) in enumerate(series[0])])
        return self.write_table("energy-series.txt", ["energy-series v1"], ["t"] + names, data)

    def write_peel_report(self, rows, zero_checks: Mapping[str, float], jump=None) -> Path:
        out = []
        for r in rows:
            samples = r.fit.samples if r.fit is not None else 0
            resid = r.fit.residual if r.fit is not None else float("nan")
            out.append((r.component, r.locus, float(r.fitted), float(r.theory), r.status, samples, float(resid)))
        for name in sorted(zero_checks):
            out.append((name, "all", float(zero_checks[name]), 0.0, "exact-zero" if zero_checks[name] == 0 else "nonzero", 0, 0.0))
        header = ["peel-report v1"]
        if jump is not None:
            exp = "nan" if jump.interior_exponent is None else fmt(jump.interior_exponent)
            header.append(
                f"charge-jump; q={fmt(jump.q)}; exterior_error={fmt(jump.exterior_error)}; "
                f"tilde_ratio={fmt(jump.tilde_ratio)}; interior_exponent={exp}; jump_ratio={fmt(jump.jump_ratio)}"
            )
        cols = ["component", "locus", "fitted", "theory", "status", "samples", "residual"]
        return self.write_rows("peel-report.txt", header, cols, out)

    def write_ratio_report(self, reports, name: str = "ratio-report.txt") -> Path:
        rows = []
        for rep in reports:
            for c in rep.cases:
                rows.append((rep.inequality, c.label, float(c.lhs), float(c.rhs), float(c.ratio), c.status))
        summary = "; ".join(f"{r.inequality}: max={fmt(r.max_ratio)} violations={r.violations}" for r in reports)
        header = ["ratio-report v1"] + ([summary] if summary else [])
        return self.write_rows(name, header, ["inequality", "case", "lhs", "rhs", "ratio", "status"], rows)

    def write_yaml(self, name: str, doc: Mapping[str, Any]) -> Path:
        path = self.out_dir / name
        path.write_text(yaml.safe_dump(dict(doc), sort_keys=True), encoding="utf-8")
        return self._record(name)

    def write_manifest(self, cfg: Optional[RunConfig], stages: Sequence[str], seed: int, status: Mapping[str, Any]) -> Path:
        doc = {
            "format": "csf-manifest v1",
            "config": cfg.model_dump(mode="json") if cfg is not None else None,
            "seed": int(seed),
            "stages": list(stages),
            "status": dict(status),
            "artifacts": self.artifacts,
        }
        path = self.out_dir / MANIFEST
        path.write_text(yaml.safe_dump(doc, sort_keys=True), encoding="utf-8")
        return path


# ==========================
# 読み込み
# ==========================
def read_header(path: Path) -> Dict[str, str]:
    """先頭行 "# <format>; key=value; ..." を辞書に"""
    first = Path(path).read_text(encoding="utf-8").splitlines()[0]
    parts = [p.strip() for p in first.lstrip("#").split(";")]
    out = {"format": parts[0]}
    for p in parts[1:]:
        k, _, v = p.partition("=")
        out[k.strip()] = v.strip()
    return out


def read_table(path: Path) -> Tuple[List[str], np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    cols: List[str] = []
    for line in lines:
        if line.startswith("# columns:"):
            cols = line.split(":", 1)[1].split()
            break
    return cols, np.loadtxt(path, comments="#", ndmin=2)


def read_rows(path: Path) -> Tuple[List[str], List[List[str]]]:
    cols: List[str] = []
    rows: List[List[str]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# columns:"):
            cols = line.split(":", 1)[1].split()
        elif line and not line.startswith("#"):
            rows.append(line.split())
    return cols, rows


def read_snapshot(path: Path) -> Tuple[Dict[str, str], Dict[str, np.ndarray]]:
    header = read_header(path)
    if header["format"] != "csf-snapshot v1":
        raise ConfigParse("not a csf snapshot", path=str(path))
    cols, data = read_table(path)
    return header, {c: data[:, k] for k, c in enumerate(cols)}


def read_manifest(out_dir: Path) -> Dict[str, Any]:
    path = Path(out_dir) / MANIFEST
    if not path.is_file():
        raise ConfigParse("manifest not found", path=str(path))
    return yaml.safe_load(path.read_text(encoding="utf-8"))


def verify_manifest(out_dir: Path) -> List[str]:
    """ハッシュが一致しない成果物の名前"""
    doc = read_manifest(out_dir)
    bad = []
    for name, meta in sorted((doc.get("artifacts") or {}).items()):
        p = Path(out_dir) / name
        if not p.is_file() or _sha256(p) != meta["sha256"]:
            bad.append(name)
    return bad
