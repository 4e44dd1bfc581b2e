import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
from jinja2 import Environment, PackageLoader, select_autoescape

from csflab.errors import AcceptanceFailure
from csflab.store import read_manifest, read_rows, output_dir, verify_manifest

logger = logging.getLogger(__name__)

# 表として載せる成果物
REPORT_FILES = (
    "charge-report.txt",
    "energy-report.txt",
    "peel-report.txt",
    "ratio-report.txt",
    "identity-report.txt",
)

env = Environment(loader=PackageLoader("csflab", "templates"), autoescape=select_autoescape(["html"]))


def _tables(out: Path) -> List[Dict[str, Any]]:
    tables = []
    for name in REPORT_FILES:
        path = out / name
        if not path.is_file():
            continue
        lines = path.read_text(encoding="utf-8").splitlines()
        header = [ln.lstrip("# ") for ln in lines if ln.startswith("#") and not ln.startswith("# columns:")]
        cols, rows = read_rows(path)
        tables.append({"name": name, "header": header, "columns": cols, "rows": rows})
    return tables


@click.command("report")
@click.option("--out", "out_dir", default=None, help="run の出力先（既定は CSF_OUTPUT_DIR）")
@click.option("--html", "html_path", default=None, help="書き出す HTML（既定は <out>/report.html）")
def cmd_report(out_dir: Optional[str], html_path: Optional[str]):
    """manifest と各レポートから report.html を作る"""
    out = Path(out_dir or output_dir())
    manifest = read_manifest(out)
    bad = verify_manifest(out)
    if bad:
        logger.warning("artifacts changed since the run: %s", ", ".join(bad))

    html = env.get_template("report.html").render(
        manifest=manifest,
        artifacts=sorted((manifest.get("artifacts") or {}).items()),
        status=sorted((manifest.get("status") or {}).items()),
        tables=_tables(out),
        tampered=bad,
    )
    target = Path(html_path) if html_path else out / "report.html"
    target.write_text(html, encoding="utf-8")
    click.echo(f"wrote {target}")
    if bad:
        raise AcceptanceFailure("manifest hashes do not match", artifacts=bad)
