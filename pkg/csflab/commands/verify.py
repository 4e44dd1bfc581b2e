import logging
from typing import List, Optional

import click

from csflab.errors import SuiteFailure
from csflab.store import RunWriter, output_dir
from csflab.suites import SUITES, CheckResult, run_suite

logger = logging.getLogger(__name__)


def _parse_cases(value: Optional[str]) -> Optional[List[str]]:
    """None は全件、空文字は 0 件"""
    if value is None:
        return None
    return [c.strip() for c in value.split(",") if c.strip()]


def _line(c: CheckResult) -> str:
    mark = "ok" if c.passed else "FAIL"
    if c.kind == "skip":
        return f"[skip] {c.name}: {c.note}"
    if c.kind == "finite":
        return f"[{mark}] {c.name}: {c.value:.6g} (finite) {c.note}".rstrip()
    return f"[{mark}] {c.name}: {c.value:.6g} {c.kind} {c.limit:.6g} {c.note}".rstrip()


@click.command("verify")
@click.argument("suite", type=click.Choice(SUITES))
@click.option("--h", "h", type=float, default=0.05, show_default=True, help="粗い側の刻み")
@click.option("--h2", "h2", type=float, default=None, help="細かい側の刻み（既定 h/2）")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cases", default=None, help="inequalities で回すケース（カンマ区切り、空なら 0 件）")
@click.option("--out", "out_dir", default=None, help="出力先（既定は CSF_OUTPUT_DIR）")
def cmd_verify(suite: str, h: float, h2: Optional[float], threads: int, seed: int, cases: Optional[str], out_dir: Optional[str]):
    """性質テスト群を実行して要約を書く"""
    result = run_suite(suite, seed=seed, h=h, h2=h2, threads=max(1, threads), cases=_parse_cases(cases))

    writer = RunWriter(out_dir or output_dir())
    path = writer.write_yaml(f"verify-{suite}.yaml", result.summary())
    if result.reports:
        writer.write_ratio_report(result.reports, f"ratio-{suite}.txt")

    for c in result.checks:
        click.echo(_line(c))
    click.echo(f"summary: {path}")

    failures = result.failures
    if failures:
        names = ", ".join(c.name for c in failures)
        raise SuiteFailure(f"{len(failures)} check(s) failed in {suite}: {names}", suite=suite)
    click.echo(f"{suite}: passed ({len(result.checks)} checks)")
