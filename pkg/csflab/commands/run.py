import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Tuple

import click
import numpy as np
from pydantic import ValidationError

from csflab.analysis import (
    RatioReport,
    SpacetimeBlock,
    box_commutator_check,
    charge_jump_check,
    exact_zero_checks,
    kato_harness,
    peel_report,
    poincare_harness,
)
from csflab.charge import hodge_decompose
from csflab.energy import (
    EstimateAudit,
    current_norm,
    current_profile,
    energy_breakdown_F,
    energy_breakdown_phi,
    field_linf_norm,
    field_profile,
    grid_divergence,
    initial_data_norm_F,
    initial_data_norm_phi,
    scalar_profile,
    total_tensor_grid,
)
from csflab.errors import AcceptanceFailure, ConfigParse, StageFailure
from csflab.evolve import SphericalState1D, State, init_state, run, step_box3d, step_sph1d
from csflab.fields import current_from_fields, continuity_residual, em_decompose
from csflab.geometry import LorentzField
from csflab.schemas import Pipeline, RunConfig
from csflab.store import RunWriter, fmt, load_config, output_dir, parse_overrides

logger = logging.getLogger(__name__)

# 合格基準
CHARGE_DRIFT_MAX = 1e-6
ENERGY_GROWTH_MAX = 3.0
EXACT_ZERO_MAX = 1e-12
# peel の軌跡
WORLDLINE_R = 2.0
JUMP_MARGIN = 10.0
# 恒等式ステージで進める追加ステップ
CONTINUITY_STEPS = 2
COMMUTATOR_STEPS = 4


@dataclass
class RunContext:
    cfg: RunConfig
    writer: RunWriter
    threads: int = 1
    states: List[State] = field(default_factory=list)
    q: float = 0.0
    # stage -> ok / fail / skipped
    status: Dict[str, str] = field(default_factory=dict)
    failures: List[str] = field(default_factory=list)

    def gate(self, stage: str, passed: bool, why: str = "") -> None:
        self.status[stage] = "ok" if passed else "fail"
        if not passed:
            self.failures.append(f"{stage}: {why}")
            logger.warning("acceptance failed in %s: %s", stage, why)

    def ensure_states(self) -> List[State]:
        if not self.states:
            s = init_state(self.cfg)
            self.states = [s]
            self.q = s.charge()
        return self.states

    def map(self, fn: Callable[[State], Any], items: List[State]) -> List[Any]:
        if self.threads <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


# ==========================
# ステージ
# ==========================
def stage_init(ctx: RunContext) -> None:
    ctx.states = []
    state = ctx.ensure_states()[0]
    ctx.writer.write_snapshot(state, 0)
    ctx.status["init"] = "ok"


def stage_evolve(ctx: RunContext) -> None:
    start = ctx.ensure_states()[0]
    count = {"n": 0}

    def sink(state: State, _row) -> None:
        ctx.writer.write_snapshot(state, count["n"])
        count["n"] += 1

    result = run(ctx.cfg, sink=sink, state=start)
    ctx.states = result.snapshots
    ctx.q = result.monitors[0].q
    ctx.writer.write_monitor(result.monitors)
    ctx.writer.write_charge_report(result.monitors)
    drift = result.charge_drift
    ctx.gate("evolve", drift <= CHARGE_DRIFT_MAX, f"charge drift {drift:.3e} > {CHARGE_DRIFT_MAX:g}")


def _initial_norms(ctx: RunContext) -> Tuple[float, float]:
    """(F の初期データノルム, φ の初期データノルム)"""
    s0 = ctx.states[0]
    wp = ctx.cfg.weights
    phi, A, F = s0.fields()
    g = s0.grid
    E, H = em_decompose(F)
    if isinstance(s0, SphericalState1D):
        E_df = np.zeros_like(E)
        J0 = s0.J0()
    else:
        E_df = hodge_decompose(E, g).E_df
        J0 = current_from_fields(phi, A).J[0]
    return initial_data_norm_F(E_df, H, J0, g, wp), initial_data_norm_phi(phi, A, wp)


def stage_energy(ctx: RunContext) -> None:
    cfg, wp = ctx.cfg, ctx.cfg.weights
    states = ctx.states
    window = (states[0].t, states[-1].t)

    def profiles(s: State):
        phi, A, F = s.fields()
        return (
            field_profile(s.t, F, ctx.q, cfg.chi_offset),
            scalar_profile(s.t, phi, A),
            current_profile(s.t, current_from_fields(phi, A)),
        )

    prof = ctx.map(profiles, states)
    F_sl = [p[0] for p in prof]
    phi_sl = [p[1] for p in prof]
    J_sl = [p[2] for p in prof]

    bF = energy_breakdown_F(F_sl, wp, window, ctx.q)
    bphi = energy_breakdown_phi(phi_sl, wp, window)
    jnorm = current_norm(J_sl, wp, window)
    linf = field_linf_norm(F_sl, wp, ctx.q)
    data_F, data_phi = _initial_norms(ctx)
    audits = [
        EstimateAudit("F", bF.total, data_F + jnorm.total + ctx.q**2),
        EstimateAudit("phi", bphi.total, data_phi + bF.total),
    ]
    extra: Dict[str, float] = {"current_norm": jnorm.total, "linf": linf}
    for a in audits:
        extra[f"{a.name}_lhs"] = a.lhs
        extra[f"{a.name}_rhs"] = a.rhs
        extra[f"{a.name}_ratio"] = a.ratio
    breakdowns = {"F": bF, "phi": bphi}
    ctx.writer.write_energy_report(breakdowns, extra)
    ctx.writer.write_energy_series(breakdowns)

    values = [bF.total, bphi.total, jnorm.total, linf] + [a.ratio for a in audits]
    if not all(np.isfinite(v) for v in values):
        ctx.gate("energy", False, "non-finite energy or audit")
        return
    for name, b in breakdowns.items():
        first = b.series[0][1]
        peak = max(v for _, v in b.series)
        if peak > ENERGY_GROWTH_MAX * first and peak > 0:
            ctx.gate("energy", False, f"{name} energy grew to {peak:.3e} (t=0: {first:.3e})")
            return
    ctx.gate("energy", True)


def stage_peel(ctx: RunContext) -> None:
    cfg = ctx.cfg
    states = ctx.states
    if not isinstance(states[0], SphericalState1D):
        logger.info("peel: box3d runs are not fitted")
        ctx.status["peel"] = "skipped"
        return
    t_min = cfg.r0 + 2.0 * cfg.width
    rows = peel_report(
        states,
        cfg.weights,
        q=ctx.q,
        offset=cfg.chi_offset,
        u_cone=-cfg.r0,
        r_world=WORLDLINE_R,
        t_world_min=t_min,
    )
    zeros = exact_zero_checks(states)
    jump = None
    if abs(ctx.q) > 1e-12:
        slices = [(s.t, s.r, s.E_r) for s in states]
        jump = charge_jump_check(
            slices, ctx.q, offset=cfg.chi_offset, margin=JUMP_MARGIN, r_interior=WORLDLINE_R, t_interior_min=t_min
        )
    ctx.writer.write_peel_report(rows, zeros, jump)

    bad = [f"{r.component}/{r.locus}" for r in rows if not r.passed]
    bad += [f"{k}!=0" for k, v in sorted(zeros.items()) if v > EXACT_ZERO_MAX]
    if jump is not None and not jump.exterior_ok:
        bad.append(f"exterior charge error {fmt(jump.exterior_error)}")
    if jump is not None and not jump.interior_ok:
        bad.append(f"interior exponent {fmt(jump.interior_exponent)}")
    ctx.gate("peel", not bad, ", ".join(bad))


def stage_ratios(ctx: RunContext) -> None:
    states = ctx.ensure_states()
    picks = [states[0]] if len(states) == 1 else [states[0], states[-1]]
    reports: List[RatioReport] = []
    for s in picks:
        phi, A, _ = s.fields()
        tag = f"t={s.t:g}:"
        kato = kato_harness(phi, A, label=tag)
        poin = poincare_harness(phi, A, 0.0, 0.0, region="full", t=s.t, label=f"{tag}p=0,q=0")
        reports.append(kato)
        reports.append(poin)
    merged: Dict[str, RatioReport] = {}
    for rep in reports:
        merged[rep.inequality] = merged[rep.inequality].merged(rep) if rep.inequality in merged else rep
    out = [merged[k] for k in sorted(merged)]
    ctx.writer.write_ratio_report(out)
    worst = max(r.max_ratio for r in out)
    ctx.gate("ratios", bool(np.isfinite(worst)), f"ratio {worst}")


def _advance(state: State, dt: float, steps: int) -> List[State]:
    step = step_sph1d if isinstance(state, SphericalState1D) else step_box3d
    out = [state]
    for _ in range(steps):
        out.append(step(out[-1], dt))
    return out


def stage_identities(ctx: RunContext) -> None:
    state = ctx.ensure_states()[-1]
    dt = ctx.cfg.dt
    rows: List[Tuple[Any, ...]] = []
    if isinstance(state, SphericalState1D):
        seq = _advance(state, dt, CONTINUITY_STEPS)
        J = [current_from_fields(*s.fields()[:2]) for s in seq]
        res = continuity_residual(J[0], J[1], J[2], dt)
        rows.append(("continuity", float(seq[1].t), float(np.max(np.abs(res))), float(np.sqrt(np.mean(res**2)))))
    else:
        seq = _advance(state, dt, COMMUTATOR_STEPS)
        Q = [total_tensor_grid(*s.fields()) for s in seq[1:4]]
        div = grid_divergence(Q[0], Q[1], Q[2], dt, state.grid)
        rows.append(("total-divergence", float(seq[2].t), float(np.max(np.abs(div))), float(np.sqrt(np.mean(div**2)))))
        block = SpacetimeBlock.from_states(seq)
        for X in (LorentzField.d(0), LorentzField.scaling()):
            c = box_commutator_check(block, X)
            rows.append((f"box-commutator-{X.name}", float(block.t_mid), c.max, c.rms))
    ctx.writer.write_rows("identity-report.txt", ["identity-report v1"], ["identity", "t", "max", "rms"], rows)
    ok = all(np.isfinite(r[2]) for r in rows)
    ctx.gate("identities", ok, "non-finite residual")


STAGES: Dict[str, Callable[[RunContext], None]] = {
    "init": stage_init,
    "evolve": stage_evolve,
    "energy": stage_energy,
    "peel": stage_peel,
    "ratios": stage_ratios,
    "identities": stage_identities,
}


def run_pipeline(pipeline: Pipeline, cfg: RunConfig, threads: int = 1) -> RunContext:
    """ステージを順に実行し、最後に manifest を書く"""
    ctx = RunContext(cfg, RunWriter(pipeline.output_dir), threads=max(1, threads))
    try:
        for name in pipeline.stages:
            logger.info("stage %s", name)
            try:
                STAGES[name](ctx)
            except Exception as e:
                ctx.status[name] = "error"
                logger.error("stage %s failed: %s", name, e)
                raise StageFailure(name, e) from e
    finally:
        ctx.writer.write_manifest(cfg, pipeline.stages, pipeline.seed, ctx.status)
    return ctx


@click.command("run")
@click.option("--config", "config_path", required=True, help="key = value 形式の設定ファイル")
@click.option("--set", "overrides", multiple=True, help="key=value で設定を上書き（複数可）")
@click.option("--h", "h", type=float, default=None)
@click.option("--T", "T_end", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--stages", default="init,evolve,energy,peel", show_default=True)
@click.option("--out", "out_dir", default=None, help="出力先（既定は CSF_OUTPUT_DIR）")
def cmd_run(
    config_path: str,
    overrides: Tuple[str, ...],
    h: Optional[float],
    T_end: Optional[float],
    seed: Optional[int],
    threads: int,
    stages: str,
    out_dir: Optional[str],
):
    """設定ファイルからパイプラインを実行する"""
    extra = parse_overrides(overrides)
    if h is not None:
        extra["h"] = repr(h)
    if T_end is not None:
        extra["T"] = repr(T_end)
    if seed is not None:
        extra["seed"] = str(seed)
    cfg = load_config(config_path, extra)

    try:
        pipeline = Pipeline(
            stages=[s.strip() for s in stages.split(",") if s.strip()],
            config_path=config_path,
            output_dir=out_dir or output_dir(),
            seed=cfg.seed,
        )
    except ValidationError as e:
        msg = "; ".join(err["msg"].removeprefix("Value error, ") for err in e.errors())
        raise ConfigParse(msg) from e

    ctx = run_pipeline(pipeline, cfg, threads)
    for name in pipeline.stages:
        click.echo(f"{name}: {ctx.status.get(name, '-')}")
    if ctx.failures:
        raise AcceptanceFailure("acceptance thresholds not met: " + "; ".join(ctx.failures))
    click.echo(f"artifacts written to {pipeline.output_dir}")
