"""減衰指数の当てはめ、不等式の比テスト、恒等式の残差

どれもスナップショットを読むだけで状態は持たない。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.ndimage import maximum_filter

from csflab.charge import ChargeTwoForm
from csflab.errors import (
    DomainError,
    ExponentOutOfRange,
    FieldNotConformalKilling,
    GridMismatch,
    InsufficientDecade,
    MissingTimeLevel,
    NoChargedData,
    NonPositiveSamples,
    RegionViolation,
    StencilOutOfDomain,
)
from csflab.evolve import BoxState3D, SphericalState1D
from csflab.fields import (
    GaugePotentialGrid,
    GaugeScalarGrid,
    GridSpec,
    covariant_derivative,
    interior,
    spatial_diff,
)
from csflab.geometry import (
    ETA,
    LorentzField,
    SampledTwoForm,
    SpacetimePoint,
    TwoFormValue,
    default_step,
    deformation_tensor,
    frame_at,
    frame_vector_field,
    lie_derivative_two_form,
    metric,
    null_decompose,
    tau_minus,
    tau_plus,
    vector_bracket,
)
from csflab.schemas import WeightParams

logger = logging.getLogger(__name__)

VALUE_FLOOR = 1e-300
MIN_SAMPLES = 8
PEEL_TOLERANCE = 0.15
# 当てはめ前に落とす相対ノイズ床
NOISE_FLOOR = 1e-12


# ==========================
# 減衰指数
# ==========================
@dataclass(frozen=True)
class DecayFit:
    component: str
    locus: str
    p_plus: float
    p_minus: float
    residual: float
    samples: int


def _decades(w: np.ndarray) -> float:
    return float(np.log10(np.max(w) / np.min(w)))


def fit_decay(
    values,
    tau_p=None,
    tau_m=None,
    *,
    fixed_plus: Optional[float] = None,
    fixed_minus: Optional[float] = None,
    component: str = "",
    locus: str = "",
) -> DecayFit:
    """log|f| を log τ_± に最小二乗で当てる

    片方の重みだけ渡せばその指数だけを推定する。両方渡した場合、fixed_* で
    指定した側は既知として差し引き、残りを推定する（どちらも未指定なら同時推定）。
    """
    v = np.abs(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(v)) or np.any(v <= VALUE_FLOOR):
        raise NonPositiveSamples("decay fit needs strictly positive finite samples", component=component)
    if v.size < MIN_SAMPLES:
        raise InsufficientDecade("too few samples for a decay fit", samples=int(v.size), component=component)

    y = np.log(v)
    cols: List[np.ndarray] = []
    fit_plus = tau_p is not None and fixed_plus is None
    fit_minus = tau_m is not None and fixed_minus is None
    if tau_p is not None and fixed_plus is not None:
        y = y - fixed_plus * np.log(np.asarray(tau_p, dtype=float))
    if tau_m is not None and fixed_minus is not None:
        y = y - fixed_minus * np.log(np.asarray(tau_m, dtype=float))
    if fit_plus:
        tp = np.asarray(tau_p, dtype=float)
        if _decades(tp) < 1.0:
            raise InsufficientDecade("tau_+ samples span less than one decade", component=component, span=_decades(tp))
        cols.append(np.log(tp))
    if fit_minus:
        tm = np.asarray(tau_m, dtype=float)
        if _decades(tm) < 1.0:
            raise InsufficientDecade("tau_- samples span less than one decade", component=component, span=_decades(tm))
        cols.append(np.log(tm))
    if not cols:
        raise DomainError("nothing to fit: pass tau_p or tau_m", component=component)

    M = np.column_stack(cols + [np.ones_like(y)])
    coef, _, rank, _ = np.linalg.lstsq(M, y, rcond=None)
    if rank < M.shape[1]:
        raise InsufficientDecade("weights are collinear on this locus", component=component)
    resid = float(np.sqrt(np.mean((M @ coef - y) ** 2)))

    k = 0
    p_plus = fixed_plus if fixed_plus is not None else float("nan")
    p_minus = fixed_minus if fixed_minus is not None else float("nan")
    if fit_plus:
        p_plus = float(coef[k])
        k += 1
    if fit_minus:
        p_minus = float(coef[k])
    return DecayFit(component, locus, p_plus, p_minus, resid, int(v.size))


# ==========================
# サンプリング軌跡（sph1d）
# ==========================
@dataclass(frozen=True)
class LocusSeries:
    locus: str
    t: np.ndarray
    r: np.ndarray
    values: np.ndarray

    @property
    def tau_plus(self) -> np.ndarray:
        return tau_plus(self.t, self.r)

    @property
    def tau_minus(self) -> np.ndarray:
        return tau_minus(self.t, self.r)

    def above_noise(self, rel: float = NOISE_FLOOR) -> "LocusSeries":
        v = np.abs(self.values)
        if v.size == 0:
            return self
        keep = v > rel * np.max(v)
        return LocusSeries(self.locus, self.t[keep], self.r[keep], self.values[keep])


ComponentFn = Callable[[SphericalState1D], np.ndarray]


def sph1d_components(state: SphericalState1D, q: float = 0.0, offset: float = 2.0) -> Dict[str, np.ndarray]:
    """球対称で残る成分の絶対値。ψ = rφ、Π = D_t ψ"""
    r = state.r
    psi, Pi = state.psi, state.Pi
    dpsi = state.dr_psi()
    rho = state.E_r
    return {
        "phi": np.abs(psi) / r,
        "DLbar": np.abs(Pi / r - (dpsi / r - psi / r**2)),
        "DL_rphi": np.abs((Pi + dpsi) / r),
        "rho": np.abs(rho),
        "rho_tilde": np.abs(rho - ChargeTwoForm(q, offset).rho(state.t, r)),
    }


def _component(name: str, q: float, offset: float) -> ComponentFn:
    return lambda s: sph1d_components(s, q, offset)[name]


def cone_series(states: Sequence[SphericalState1D], fn: ComponentFn, u: float) -> LocusSeries:
    """u = t − r 一定の錐に沿って線形補間する"""
    ts, rs, vs = [], [], []
    for s in states:
        r = s.t - u
        grid_r = s.r
        if r < grid_r[0] or r > grid_r[-1]:
            continue
        ts.append(s.t)
        rs.append(r)
        vs.append(np.interp(r, grid_r, fn(s)))
    return LocusSeries("cone", np.array(ts), np.array(rs), np.array(vs))


def slice_series(state: SphericalState1D, fn: ComponentFn, r_lo: float, r_hi: float) -> LocusSeries:
    r = state.r
    sel = (r >= r_lo) & (r <= r_hi)
    return LocusSeries("slice", np.full(np.count_nonzero(sel), state.t), r[sel], fn(state)[sel])


def worldline_series(states: Sequence[SphericalState1D], fn: ComponentFn, r: float, t_min: float = 0.0) -> LocusSeries:
    ts, vs = [], []
    for s in states:
        if s.t < t_min:
            continue
        ts.append(s.t)
        vs.append(np.interp(r, s.r, fn(s)))
    t = np.array(ts)
    return LocusSeries("worldline", t, np.full(t.shape, r), np.array(vs))


# ==========================
# peeling
# ==========================
# 成分 -> s を受けて (τ_+ の指数, τ_− の指数)。どれも w_γ^{-1/2} が掛かる
PEELING_RATES: Dict[str, Callable[[float], Tuple[float, float]]] = {
    "DL_rphi": lambda s: (-s - 1.5, 0.0),
    "DLbar": lambda s: (-1.0, -s - 0.5),
    "phi": lambda s: (-1.0, -s + 0.5),
    "rho_tilde": lambda s: (-1.0 - s, -0.5),
}


def theoretical_exponent(component: str, locus: str, wp: WeightParams) -> float:
    """錐: τ_+ の指数。外部スライス: τ_− の指数 − γ。内部の世界線: 和（τ_+ ∼ τ_−）"""
    a_plus, a_minus = PEELING_RATES[component](wp.s)
    if locus == "cone":
        return a_plus
    if locus == "slice":
        return a_minus - wp.gamma
    if locus == "worldline":
        return a_plus + a_minus
    raise DomainError(f"unknown locus {locus!r}")


@dataclass(frozen=True)
class PeelRow:
    component: str
    locus: str
    theory: float
    fit: Optional[DecayFit] = None
    note: str = ""

    @property
    def fitted(self) -> float:
        if self.fit is None:
            return float("nan")
        return self.fit.p_minus if self.locus == "slice" else self.fit.p_plus

    @property
    def status(self) -> str:
        if self.fit is None:
            return "skipped"
        return "ok" if self.fitted <= self.theory + PEEL_TOLERANCE else "violation"

    @property
    def passed(self) -> bool:
        return self.status != "violation"


def _fit_row(series: LocusSeries, component: str, wp: WeightParams) -> PeelRow:
    theory = theoretical_exponent(component, series.locus, wp)
    s = series.above_noise()
    try:
        if series.locus == "slice":
            a_plus = PEELING_RATES[component](wp.s)[0]
            fit = fit_decay(s.values, s.tau_plus, s.tau_minus, fixed_plus=a_plus, component=component, locus="slice")
        else:
            fit = fit_decay(s.values, s.tau_plus, component=component, locus=series.locus)
    except (InsufficientDecade, NonPositiveSamples) as e:
        logger.info("peel %s/%s skipped: %s", component, series.locus, e)
        return PeelRow(component, series.locus, theory, None, e.detail)
    row = PeelRow(component, series.locus, theory, fit)
    if not row.passed:
        logger.warning("peel %s/%s: fitted %.3f > theory %.3f + %.2f", component, series.locus, row.fitted, theory, PEEL_TOLERANCE)
    return row


def peel_report(
    states: Sequence[SphericalState1D],
    wp: WeightParams,
    *,
    q: float,
    offset: float,
    u_cone: float,
    r_world: float,
    t_world_min: float,
) -> List[PeelRow]:
    """成分ごとに錐・最終スライスの外部・内部世界線で当てはめる"""
    last = states[-1]
    rows: List[PeelRow] = []
    for name in PEELING_RATES:
        fn = _component(name, q, offset)
        rows.append(_fit_row(cone_series(states, fn, u_cone), name, wp))
        rows.append(_fit_row(slice_series(last, fn, last.t + 1.0, last.r[-1]), name, wp))
        rows.append(_fit_row(worldline_series(states, fn, r_world, t_world_min), name, wp))
    return rows


def exact_zero_checks(states: Sequence[SphericalState1D]) -> Dict[str, float]:
    """球対称では α, ᾱ, σ は恒等的に 0"""
    out = {"alpha": 0.0, "alphabar": 0.0, "sigma": 0.0}
    for s in states:
        _, _, F = s.fields()
        comps = null_decompose(F.form, frame_at(SpacetimePoint(s.t, s.grid.points())))
        out["alpha"] = max(out["alpha"], float(np.max(np.abs(comps.alpha))))
        out["alphabar"] = max(out["alphabar"], float(np.max(np.abs(comps.alphabar))))
        out["sigma"] = max(out["sigma"], float(np.max(np.abs(comps.sigma))))
    return out


# ==========================
# 電荷の跳び
# ==========================
@dataclass(frozen=True)
class ChargeJumpReport:
    q: float
    exterior_error: float
    tilde_ratio: float
    interior_exponent: Optional[float]
    jump_ratio: float
    samples: int

    @property
    def exterior_ok(self) -> bool:
        return bool(self.samples > 0 and self.exterior_error < 0.05)

    @property
    def interior_ok(self) -> bool:
        return self.interior_exponent is None or self.interior_exponent <= -2.3


Slice = Tuple[float, np.ndarray, np.ndarray]


def charge_jump_check(
    slices: Sequence[Slice],
    q: float,
    *,
    offset: float = 2.0,
    margin: float = 10.0,
    r_interior: float = 2.0,
    t_interior_min: float = 0.0,
) -> ChargeJumpReport:
    """slices は (t, r, ρ)。遠方外部 r > 2t + margin で ρ ≈ q/(4πr²) を確かめる"""
    if abs(q) < 1e-12:
        raise NoChargedData("charge jump check needs a charged run", q=q)
    bar = ChargeTwoForm(q, offset)
    err, tilde, n = 0.0, 0.0, 0
    for t, r, rho in slices:
        sel = r > 2.0 * t + margin
        if not np.any(sel):
            continue
        coulomb = q / (4.0 * np.pi * r[sel] ** 2)
        err = max(err, float(np.max(np.abs(rho[sel] - coulomb) / np.abs(coulomb))))
        rb = bar.rho(t, r[sel])
        ok = np.abs(rb) > 0
        if np.any(ok):
            tilde = max(tilde, float(np.max(np.abs(rho[sel][ok] - rb[ok]) / np.abs(rb[ok]))))
        n += int(np.count_nonzero(sel))
    if n == 0:
        logger.warning("charge jump: no slice reaches r > 2t + %.1f", margin)
        err = float("nan")

    ts = np.array([s[0] for s in slices if s[0] >= t_interior_min])
    vals = np.array([np.interp(r_interior, s[1], np.abs(s[2])) for s in slices if s[0] >= t_interior_min])
    exponent: Optional[float] = None
    if ts.size:
        series = LocusSeries("worldline", ts, np.full(ts.shape, r_interior), vals).above_noise()
        try:
            exponent = fit_decay(series.values, series.tau_plus, component="rho", locus="worldline").p_plus
        except (InsufficientDecade, NonPositiveSamples) as e:
            logger.info("charge jump: interior fit skipped: %s", e)

    # 最終スライスで τ_− を鏡映した 2 点の比
    t, r, rho = slices[-1]
    d = max(offset + 1.0, 0.5 * t)
    jump = float("nan")
    if t - d > r[0] and t + d < r[-1]:
        inner = abs(float(np.interp(t - d, r, rho)))
        outer = abs(float(np.interp(t + d, r, rho)))
        jump = outer / inner if inner > 0 else float("inf")
    logger.info("charge jump: ext err=%.3e tilde=%.3e interior exp=%s jump=%.3e", err, tilde, exponent, jump)
    return ChargeJumpReport(q, err, tilde, exponent, jump, n)


# ==========================
# 比テスト
# ==========================
@dataclass(frozen=True)
class RatioCase:
    label: str
    lhs: float
    rhs: float
    # ok | skipped | out-of-hypothesis
    status: str = "ok"

    @property
    def ratio(self) -> float:
        if self.status != "ok":
            return 0.0
        if self.rhs > 0:
            return self.lhs / self.rhs
        return 0.0 if self.lhs == 0 else float("inf")


@dataclass(frozen=True)
class RatioReport:
    inequality: str
    cases: Tuple[RatioCase, ...] = ()
    violations: int = 0

    @property
    def max_ratio(self) -> float:
        ok = [c.ratio for c in self.cases if c.status == "ok"]
        return max(ok) if ok else 0.0

    @property
    def skipped(self) -> int:
        return sum(1 for c in self.cases if c.status != "ok")

    def merged(self, other: "RatioReport") -> "RatioReport":
        return RatioReport(self.inequality, self.cases + other.cases, self.violations + other.violations)


def _case(label: str, lhs: float, rhs: float, *, degenerate: float = 1e-10) -> RatioCase:
    if lhs == 0.0 and rhs == 0.0:
        return RatioCase(label, 0.0, 0.0, "skipped")
    if rhs <= degenerate * lhs:
        return RatioCase(label, lhs, rhs, "out-of-hypothesis")
    return RatioCase(label, lhs, rhs)


def kato_harness(phi: GaugeScalarGrid, A: GaugePotentialGrid, *, tol_factor: float = 10.0, label: str = "") -> RatioReport:
    """|X(|φ|)| <= |D_X φ| を各点で確かめる。X は ∂_μ（時間方向は φ̇ があるときだけ）"""
    g = phi.grid
    mod = np.abs(phi.values)
    dirs = list(range(1, g.ndim + 1))
    if phi.dt_values is not None:
        dirs.insert(0, 0)
    cases: List[RatioCase] = []
    violations = 0
    for mu in dirs:
        D = np.abs(covariant_derivative(phi, A, mu))
        if mu == 0:
            safe = np.where(mod > 0, mod, 1.0)
            lhs = np.where(mod > 0, np.abs(np.real(np.conj(phi.values) * phi.dt_values)) / safe, 0.0)
            tol = np.zeros_like(lhs)
        else:
            lhs = np.abs(spatial_diff(mod, g, mu))
            d3 = np.abs(spatial_diff(spatial_diff(spatial_diff(mod, g, mu), g, mu), g, mu))
            d3 += np.abs(spatial_diff(spatial_diff(spatial_diff(phi.values, g, mu), g, mu), g, mu))
            tol = tol_factor * g.h**2 * maximum_filter(d3, size=5)
        lhs_i, D_i, tol_i = (interior(a, g, 3) for a in (lhs, D, tol))
        bad = int(np.count_nonzero(lhs_i > D_i + tol_i + 1e-14 * np.max(D_i, initial=0.0)))
        violations += bad
        cases.append(_case(f"{label}d{mu}", float(np.sum(lhs_i)), float(np.sum(D_i))))
    if violations:
        logger.warning("kato: %d points beyond tolerance", violations)
    return RatioReport("kato", tuple(cases), violations)


def _poincare_admissible(p: float, q: float, region: str) -> bool:
    if p <= -1.0:
        return False
    if region == "full":
        return abs(q) < p + 1.0
    if region == "exterior":
        return p + 1.0 + q > 0.0
    if region == "interior":
        return q < p + 1.0
    raise DomainError(f"unknown Poincare region {region!r}")


def poincare_harness(
    phi: GaugeScalarGrid,
    A: GaugePotentialGrid,
    p: float,
    q: float,
    *,
    region: str = "full",
    t: float = 0.0,
    R: Optional[float] = None,
    label: str = "",
) -> RatioReport:
    """∫ τ_−^p τ_+^q |φ|² ≲ ∫ τ_−^{p+2} τ_+^q |r^{-1} D_r(rφ)|²

    exterior は r >= R、interior は r <= R（既定 R = t）。
    """
    if not _poincare_admissible(p, q, region):
        raise ExponentOutOfRange("Poincare exponents outside the admitted range", p=p, q=q, region=region)
    g = phi.grid
    r = g.radius()
    if g.kind == "1d":
        Dr = covariant_derivative(phi, A, 1)
    else:
        pts = g.points()
        safe = np.where(r > 0, r, 1.0)
        Dr = sum(covariant_derivative(phi, A, i + 1) * pts[..., i] / safe for i in range(3))
    Y = Dr + phi.values / r
    tm, tp = tau_minus(t, r), tau_plus(t, r)
    R = t if R is None else R
    mask = np.ones(g.shape, dtype=bool)
    if region == "exterior":
        mask = r >= R
    elif region == "interior":
        mask = r <= R
    dv = g.cell_volume() * mask
    lhs = float(np.sum(tm**p * tp**q * np.abs(phi.values) ** 2 * dv))
    rhs = float(np.sum(tm ** (p + 2.0) * tp**q * np.abs(Y) ** 2 * dv))
    case = _case(label or f"p={p:g},q={q:g},{region}", lhs, rhs)
    if case.status == "out-of-hypothesis":
        logger.warning("poincare: rhs vanishes while lhs = %.3e (D_r(r phi) = 0)", lhs)
    return RatioReport("poincare", (case,))


# --- 大域 Sobolev ---
ScalarFn = Callable[[float, np.ndarray], np.ndarray]


def _sphere_nodes(n_theta: int, n_phi: int) -> Tuple[np.ndarray, np.ndarray]:
    """単位球面の求積点 (n_theta*n_phi, 3) と重み（和は 4π）"""
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    ph = 2.0 * np.pi * np.arange(n_phi) / n_phi
    st = np.sqrt(1.0 - mu**2)
    x = np.stack(
        [st[:, None] * np.cos(ph)[None, :], st[:, None] * np.sin(ph)[None, :], np.broadcast_to(mu[:, None], (n_theta, n_phi))],
        axis=-1,
    )
    w = np.broadcast_to(wmu[:, None] * (2.0 * np.pi / n_phi), (n_theta, n_phi))
    return x.reshape(-1, 3), w.reshape(-1)


def _radial_nodes(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    z, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * z + 0.5 * (b + a), 0.5 * (b - a) * w


def _gradient4(f: ScalarFn, t: float, x: np.ndarray, delta: float) -> np.ndarray:
    """(∂_t f, ∂_1 f, ∂_2 f, ∂_3 f) を中心差分で"""
    out = [(np.asarray(f(t + delta, x)) - np.asarray(f(t - delta, x))) / (2.0 * delta)]
    for i in range(3):
        e = np.zeros(3)
        e[i] = delta
        out.append((np.asarray(f(t, x + e)) - np.asarray(f(t, x - e))) / (2.0 * delta))
    return np.stack(out, axis=-1)


def _rotations(x: np.ndarray, g4: np.ndarray) -> List[np.ndarray]:
    """Ω_ij f = x_i ∂_j f − x_j ∂_i f（i < j）"""
    return [x[..., i] * g4[..., j + 1] - x[..., j] * g4[..., i + 1] for i, j in ((0, 1), (0, 2), (1, 2))]


def _lq_sphere(vals: np.ndarray, w: np.ndarray, r: float, q: float) -> float:
    return float(np.sum(w * np.abs(vals) ** q * r**2) ** (1.0 / q))


def _support_check(f: ScalarFn, t: float, radii: Sequence[float], nodes: np.ndarray, peak: float, what: str) -> None:
    if peak <= 0:
        return
    for rr in radii:
        edge = float(np.max(np.abs(f(t, rr * nodes))))
        if edge > 1e-8 * peak:
            raise RegionViolation(f"f is not supported inside the {what}", r=rr, edge=edge)


def _exterior_sobolev(
    f: ScalarFn, t: float, shell: Tuple[float, float], q_exp: float, n_r: int, n_theta: int, n_phi: int, label: str
) -> List[RatioCase]:
    r_a, r_b = shell
    if t < 1.0 or t >= 2.0 * r_a:
        raise RegionViolation("exterior Sobolev needs 1 <= t < 2r on the shell", t=t, r_a=r_a)
    nodes, w = _sphere_nodes(n_theta, n_phi)
    rs, wr = _radial_nodes(r_a, r_b, n_r)
    delta = 1e-5 * max(1.0, r_b)

    per_r = []
    for rr in rs:
        x = rr * nodes
        vals = np.asarray(f(t, x))
        g4 = _gradient4(f, t, x, delta)
        per_r.append((rr, vals, g4, x))
    peak = max(float(np.max(np.abs(v))) for _, v, _, _ in per_r)
    _support_check(f, t, (r_a, r_b), nodes, peak, "shell")

    cases: List[RatioCase] = []
    # 一つ目: 殻の中で |f| が最大の球面で sup_ω と L^q(S_r) を比べる
    if 2.0 < q_exp < np.inf:
        k = int(np.argmax([np.max(np.abs(v)) for _, v, _, _ in per_r]))
        rr, vals, g4, x = per_r[k]
        lhs = float(np.max(np.abs(vals)))
        ang = _lq_sphere(vals, w, rr, q_exp) + sum(_lq_sphere(o, w, rr, q_exp) for o in _rotations(x, g4))
        rhs = float(tau_plus(t, rr)) ** (-2.0 / q_exp) * ang
        cases.append(_case(f"{label}ext1", lhs, rhs))
    if 2.0 <= q_exp < 4.0:
        lhs = max(_lq_sphere(v, w, rr, q_exp) for rr, v, _, _ in per_r)
        l2 = lambda g: np.sqrt(sum(wk * np.sum(w * np.abs(gk) ** 2) * rr**2 for wk, gk, rr in zip(wr, g, rs)))  # noqa: E731
        r_mid = 0.5 * (r_a + r_b)
        tp, tm = float(tau_plus(t, r_mid)), float(tau_minus(t, r_mid))
        f_vals = [v for _, v, _, _ in per_r]
        dr = [tau_minus(t, rr) * np.einsum("...i,...i->...", x / rr, g4[..., 1:]) for rr, _, g4, x in per_r]
        rot = [_rotations(x, g4) for _, _, g4, x in per_r]
        norm = l2(f_vals) + l2(dr) + sum(l2([o[k] for o in rot]) for k in range(3))
        rhs = tp ** (-2.0 * (0.5 - 1.0 / q_exp)) * tm ** (-0.5) * float(norm)
        cases.append(_case(f"{label}ext2", lhs, rhs))
    if not cases:
        raise ExponentOutOfRange("exterior Sobolev exponent outside (2, 4) and (2, inf)", q=q_exp)
    return cases


def _interior_sobolev(
    f: ScalarFn, t: float, p_exp: float, q_exp: float, n_r: int, n_theta: int, n_phi: int, label: str
) -> List[RatioCase]:
    if t < 1.0:
        raise RegionViolation("interior Sobolev needs t >= 1", t=t)
    if not (1.0 <= p_exp <= q_exp) or 1.0 / p_exp - 1.0 / q_exp >= 1.0 / 3.0:
        raise ExponentOutOfRange("interior Sobolev needs 1/p - 1/q < 1/3", p=p_exp, q=q_exp)
    R = 0.75 * t
    nodes, w = _sphere_nodes(n_theta, n_phi)
    rs, wr = _radial_nodes(0.0, R, n_r)
    delta = 1e-5 * max(1.0, t)

    def lp(vals: List[np.ndarray], p: float) -> float:
        return float(sum(wk * np.sum(w * np.abs(v) ** p) * rr**2 for wk, v, rr in zip(wr, vals, rs)) ** (1.0 / p))

    fv, sv, boosts = [], [], [[], [], []]
    for rr in rs:
        x = rr * nodes
        fv.append(np.asarray(f(t, x)))
        g4 = _gradient4(f, t, x, delta)
        sv.append(t * g4[..., 0] + np.einsum("...i,...i->...", x, g4[..., 1:]))
        for i in range(3):
            boosts[i].append(t * g4[..., i + 1] + x[..., i] * g4[..., 0])
    peak = max(float(np.max(np.abs(v))) for v in fv)
    _support_check(f, t, (R,), nodes, peak, "interior region r < 3t/4")

    lhs = lp(fv, q_exp)
    rhs = t ** (-3.0 * (1.0 / p_exp - 1.0 / q_exp)) * (lp(fv, p_exp) + lp(sv, p_exp) + sum(lp(b, p_exp) for b in boosts))
    return [_case(f"{label}int", lhs, rhs)]


def sobolev_harness(
    kind: str,
    f: ScalarFn,
    *,
    t: float,
    shell: Optional[Tuple[float, float]] = None,
    q_exp: float = 3.0,
    p_exp: float = 2.0,
    n_r: int = 32,
    n_theta: int = 24,
    n_phi: int = 48,
    label: str = "",
) -> RatioReport:
    """f(t, x) は x = (..., 3) を受ける。外部は殻 shell に、内部は r < 3t/4 に台を持つこと"""
    if kind == "exterior":
        if shell is None:
            raise DomainError("exterior Sobolev needs a shell")
        cases = _exterior_sobolev(f, t, shell, q_exp, n_r, n_theta, n_phi, label)
    elif kind == "interior":
        cases = _interior_sobolev(f, t, p_exp, q_exp, n_r, n_theta, n_phi, label)
    else:
        raise DomainError(f"unknown Sobolev kind {kind!r}")
    return RatioReport(f"sobolev-{kind}", tuple(cases))


# ==========================
# □^ℂ の交換子
# ==========================
LEVELS = 5


@dataclass(frozen=True)
class SpacetimeBlock:
    """中心時刻 t_mid の前後 2 レベルずつ、計 5 レベルの φ と A_μ（3d 格子）"""

    grid: GridSpec
    t_mid: float
    dt: float
    phi: np.ndarray
    A: np.ndarray

    def __post_init__(self) -> None:
        if self.grid.kind != "3d":
            raise GridMismatch("commutator check runs on the 3d grid", kind=self.grid.kind)
        if self.phi.shape[0] != LEVELS or self.A.shape[0] != LEVELS:
            raise MissingTimeLevel("commutator check needs five time levels", levels=self.phi.shape[0])
        if self.phi.shape[1:] != self.grid.shape or self.A.shape[1:] != (4,) + self.grid.shape:
            raise GridMismatch("block arrays do not match the grid")

    @property
    def times(self) -> np.ndarray:
        return self.t_mid + self.dt * (np.arange(LEVELS) - 2)

    @classmethod
    def from_functions(
        cls,
        grid: GridSpec,
        t_mid: float,
        dt: float,
        phi_fn: Callable[[float, np.ndarray], np.ndarray],
        A_fn: Callable[[float, np.ndarray], np.ndarray],
    ) -> "SpacetimeBlock":
        """phi_fn(t, x) -> (...)、A_fn(t, x) -> (..., 4)"""
        x = grid.points()
        ts = t_mid + dt * (np.arange(LEVELS) - 2)
        phi = np.stack([np.asarray(phi_fn(t, x), dtype=complex) for t in ts])
        A = np.stack([np.moveaxis(np.asarray(A_fn(t, x), dtype=float), -1, 0) for t in ts])
        return cls(grid, float(t_mid), float(dt), phi, A)

    @classmethod
    def from_states(cls, states: Sequence[BoxState3D]) -> "SpacetimeBlock":
        if len(states) != LEVELS:
            raise MissingTimeLevel("commutator check needs five consecutive states", levels=len(states))
        ts = np.array([s.t for s in states])
        steps = np.diff(ts)
        if np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps[0]:
            raise MissingTimeLevel("states are not equally spaced in time")
        phi = np.stack([s.phi for s in states])
        A = np.stack([s.A for s in states])
        return cls(states[0].grid, float(ts[2]), float(steps[0]), phi, A)


def _d_t(f: np.ndarray, dt: float) -> np.ndarray:
    return (f[2:] - f[:-2]) / (2.0 * dt)


def _d_tt(f: np.ndarray, dt: float) -> np.ndarray:
    return (f[2:] - 2.0 * f[1:-1] + f[:-2]) / dt**2


def _cbox(f: np.ndarray, A: np.ndarray, dt: float, grid: GridSpec) -> np.ndarray:
    """□^ℂ f = −D_0 D_0 f + Σ D_i D_i f。時間レベルが 2 つ減る"""
    fc, Ac = f[1:-1], A[1:-1]
    out = -(_d_tt(f, dt) + 1j * _d_t(A[:, 0], dt) * fc + 2j * Ac[:, 0] * _d_t(f, dt) - Ac[:, 0] ** 2 * fc)
    for i in (1, 2, 3):
        fi = spatial_diff(fc, grid, i)
        out = out + spatial_diff(fi, grid, i) + 1j * spatial_diff(Ac[:, i], grid, i) * fc + 2j * Ac[:, i] * fi - Ac[:, i] ** 2 * fc
    return out


def _cov(f: np.ndarray, A: np.ndarray, dt: float, grid: GridSpec) -> List[np.ndarray]:
    """D_μ f をレベル 1..L−2 で返す"""
    fc, Ac = f[1:-1], A[1:-1]
    out = [_d_t(f, dt) + 1j * Ac[:, 0] * fc]
    out += [spatial_diff(fc, grid, i) + 1j * Ac[:, i] * fc for i in (1, 2, 3)]
    return out


def _partial(f: np.ndarray, mu: int, dt: float, grid: GridSpec) -> np.ndarray:
    """∂_μ f を中央レベルで（f は 3 レベル）"""
    if mu == 0:
        return _d_t(f, dt)[0]
    return spatial_diff(f[1], grid, mu)


@dataclass(frozen=True)
class CommutatorResidual:
    field: str
    max: float
    rms: float
    scale: float


def _constant_conformal_factor(X: LorentzField, p: SpacetimePoint) -> float:
    """π = c g となる定数 c。p は時刻の違う点を含めて渡す"""
    pi = deformation_tensor(X, p)
    c = np.einsum("ab,...ab->...", np.linalg.inv(ETA), pi) / 4.0
    off = np.max(np.abs(pi - c[..., None, None] * ETA))
    scale = 1.0 + float(np.max(np.abs(pi)))
    if off > 1e-8 * scale or np.ptp(c) > 1e-8 * scale:
        raise FieldNotConformalKilling("deformation tensor is not a constant multiple of g", X=X.name)
    return float(np.mean(c))


def box_commutator_check(block: SpacetimeBlock, X: LorentzField, *, region: Optional[float] = None) -> CommutatorResidual:
    """□^ℂ(D_X φ) − [D_X □^ℂφ + π^{αβ}D_αD_βφ − i(2X^α F_{αβ} D^β φ − ∇^α(X^β F_{αβ})φ)]

    region を渡すと max|x_i| <= region の点だけで評価する（既定は端 3 セルを除く）。
    """
    g, dt = block.grid, block.dt
    x = g.points()
    Xv = np.stack([np.moveaxis(X.at(SpacetimePoint(np.full(g.shape, t), x)), -1, 0) for t in block.times])
    p_all = SpacetimePoint(np.broadcast_to(block.times[:, None, None, None], (LEVELS,) + g.shape), np.broadcast_to(x, (LEVELS,) + x.shape))
    c = _constant_conformal_factor(X, p_all)
    phi, A = block.phi, block.A

    # 左辺
    Dphi = _cov(phi, A, dt, g)  # レベル 1..3
    psi = sum(Xv[1:-1, mu] * Dphi[mu] for mu in range(4))
    lhs = _cbox(psi, A[1:-1], dt, g)[0]

    # D_X □φ
    box = _cbox(phi, A, dt, g)
    A2 = A[2]
    DX_box = sum(Xv[2, mu] * (_partial(box, mu, dt, g) + 1j * A2[mu] * box[1]) for mu in range(4))

    # π^{αβ} D_α D_β φ = c η^{αβ} D_α D_β φ
    DD = 0.0
    for mu in range(4):
        DD = DD + ETA[mu, mu] * (_partial(Dphi[mu], mu, dt, g) + 1j * A2[mu] * Dphi[mu][1])
    pi_term = c * DD

    # F_{αβ} をレベル 1..3 で
    dA = [[None] * 4 for _ in range(4)]
    for a in range(4):
        for b in range(4):
            dA[a][b] = _d_t(A[:, b], dt) if a == 0 else spatial_diff(A[1:-1, b], g, a)
    F = [[dA[a][b] - dA[b][a] for b in range(4)] for a in range(4)]
    XF_D = sum(Xv[2, a] * F[a][b][1] * ETA[b, b] * Dphi[b][1] for a in range(4) for b in range(4))
    V = [sum(Xv[1:-1, b] * F[a][b] for b in range(4)) for a in range(4)]
    divV = sum(ETA[a, a] * _partial(V[a], a, dt, g) for a in range(4))
    rhs = DX_box + pi_term - 1j * (2.0 * XF_D - divV * phi[2])

    res = lhs - rhs
    if region is not None:
        mask = np.max(np.abs(x), axis=-1) <= region
        res_v, lhs_v = res[mask], lhs[mask]
    else:
        res_v, lhs_v = interior(res, g, 3).ravel(), interior(lhs, g, 3).ravel()
    out = CommutatorResidual(
        X.name,
        float(np.max(np.abs(res_v))),
        float(np.sqrt(np.mean(np.abs(res_v) ** 2))),
        float(np.max(np.abs(lhs_v))),
    )
    logger.debug("commutator %s: max=%.3e rms=%.3e scale=%.3e", X.name, out.max, out.rms, out.scale)
    return out


# ==========================
# null 成分の Lie 微分表
# ==========================
NULL_SCALARS = ("rho", "sigma", "alpha1", "alpha2")


def _null_scalars(M: np.ndarray, p: SpacetimePoint, chart: int) -> Dict[str, np.ndarray]:
    c = null_decompose(TwoFormValue.from_matrix(M), frame_at(p, chart=chart))
    return {"rho": c.rho, "sigma": c.sigma, "alpha1": c.alpha[..., 0], "alpha2": c.alpha[..., 1]}


@dataclass(frozen=True)
class LieComponentResidual:
    field: str
    rows: Dict[str, float] = field(default_factory=dict)

    @property
    def max(self) -> float:
        return max(self.rows.values()) if self.rows else 0.0


def lie_component_check(
    F: SampledTwoForm,
    X: LorentzField,
    points: SpacetimePoint,
    *,
    h=None,
    chart: int = 1,
) -> LieComponentResidual:
    """スカラー ρ, σ, α_A の X 微分と 𝓛_X F の成分の表を比べる

    X は ∂_r, Ω_ij, S, Ω_0r のいずれか。
        ∂_r(ρ) = ω^i ρ(𝓛_{∂_i}F)           S(ρ) = ρ(𝓛_S F) − 2ρ
        Ω_ij(ρ) = ρ(𝓛_{Ω_ij}F)             Ω_0r(ρ) = ω^i ρ(𝓛_{Ω_0i}F)
    σ も同じ。α_A は Ω_ij で [Ω_ij, e_A]^B α_B、Ω_0r で +α_A が付く。
    """
    if X.tag not in ("d_r", "rot", "S", "boost_r"):
        raise DomainError("Lie component table covers d_r, rotations, S and Omega0r", X=X.name)
    step = default_step(points) if h is None else np.broadcast_to(np.asarray(h, dtype=float), np.shape(points.r))

    # 左辺: スカラー成分の方向微分
    V = X.at(points)
    delta = step / np.maximum(1.0, np.linalg.norm(V, axis=-1))
    plus = points.shifted(delta[..., None] * V)
    minus = points.shifted(-delta[..., None] * V)
    if not (F.contains(plus) and F.contains(minus)):
        raise StencilOutOfDomain("component derivative stencil leaves the sampled domain", X=X.name)
    sp_, sm_ = _null_scalars(F(plus), plus, chart), _null_scalars(F(minus), minus, chart)
    lhs = {k: (sp_[k] - sm_[k]) / (2.0 * delta) for k in NULL_SCALARS}

    # 右辺
    base = _null_scalars(F(points), points, chart)
    w = points.omega
    if X.tag == "d_r":
        LF = sum(w[..., i, None, None] * lie_derivative_two_form(F, LorentzField.d(i + 1), points, step).matrix() for i in range(3))
    elif X.tag == "boost_r":
        # Ω_0i = −Ω_{i0}
        LF = -sum(w[..., i, None, None] * lie_derivative_two_form(F, LorentzField.boost(i + 1), points, step).matrix() for i in range(3))
    else:
        LF = lie_derivative_two_form(F, X, points, step).matrix()
    rhs = _null_scalars(LF, points, chart)

    if X.tag == "S":
        rhs = {k: rhs[k] - 2.0 * base[k] for k in NULL_SCALARS}
    elif X.tag == "boost_r":
        rhs["alpha1"] = rhs["alpha1"] + base["alpha1"]
        rhs["alpha2"] = rhs["alpha2"] + base["alpha2"]
    elif X.tag == "rot":
        fr = frame_at(points, chart=chart)
        alpha = np.stack([base["alpha1"], base["alpha2"]], axis=-1)
        for A_idx, key in ((0, "alpha1"), (1, "alpha2")):
            br = vector_bracket(X.at, frame_vector_field(A_idx, chart), points)
            coeff = np.stack([metric(br, e) for e in fr.e], axis=-1)
            rhs[key] = rhs[key] + np.sum(coeff * alpha, axis=-1)

    rows = {k: float(np.max(np.abs(lhs[k] - rhs[k]))) for k in NULL_SCALARS}
    return LieComponentResidual(X.name, rows)


def observed_order(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    """二段の細分化から測った収束次数"""
    if err_fine <= 0.0:
        return float("inf") if err_coarse > 0 else 0.0
    return float(np.log(err_coarse / err_fine) / np.log(ratio))
