"""エネルギー運動量テンソル、Morawetz 乗数、重み付きエネルギー汎関数"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from csflab.charge import ChargeTwoForm, subtract_charge
from csflab.errors import SingularSet, StencilOutOfDomain, WindowNotCovered
from csflab.fields import (
    CurrentGrid,
    CurvatureGrid,
    GaugePotentialGrid,
    GaugeScalarGrid,
    GridSpec,
    covariant_gradient,
    interior,
    spatial_diff,
)
from csflab.geometry import (
    ETA,
    LieCombination,
    LorentzField,
    SpacetimePoint,
    TwoFormValue,
    chi_plus,
    chi_plus_prime,
    deformation_tensor,
    frame_at,
    null_decompose,
    tau_minus,
    tau_plus,
    weights_tr,
)
from csflab.schemas import WeightParams

logger = logging.getLogger(__name__)

SINGULAR_FLOOR = 1e-8


# ==========================
# テンソル
# ==========================
@dataclass(frozen=True)
class EMTensorValue:
    Q: np.ndarray
    kind: str

    def contract(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        return np.einsum("...a,...ab,...b->...", X, self.Q, Y)

    def trace(self) -> np.ndarray:
        return np.einsum("ab,...ab->...", ETA, self.Q)

    def raised(self) -> np.ndarray:
        return np.einsum("ac,...cd,db->...ab", ETA, self.Q, ETA)

    def __add__(self, other: "EMTensorValue") -> "EMTensorValue":
        return EMTensorValue(self.Q + other.Q, "total")


def em_tensor_F(F: TwoFormValue) -> EMTensorValue:
    """Q_{αβ} = F_{αγ} F_β^γ − ¼ g_{αβ} F_{γδ} F^{γδ}"""
    M = F.matrix()
    FF = np.einsum("...ag,gd,...bd->...ab", M, ETA, M)
    F2 = np.einsum("...gd,gc,de,...ce->...", M, ETA, ETA, M)
    return EMTensorValue(FF - 0.25 * F2[..., None, None] * ETA, "F")


def em_tensor_phi(Dphi: np.ndarray) -> EMTensorValue:
    """Q_{αβ} = Re(D_α φ conj(D_β φ)) − ½ g_{αβ} D^γ φ conj(D_γ φ)。Dphi は (..., 4) 複素"""
    Dphi = np.asarray(Dphi, dtype=complex)
    outer = np.real(np.einsum("...a,...b->...ab", Dphi, np.conj(Dphi)))
    contr = np.einsum("ab,...ab->...", ETA, outer)
    return EMTensorValue(outer - 0.5 * contr[..., None, None] * ETA, "phi")


def conformal_factor(kind: str, p: SpacetimePoint) -> Tuple[np.ndarray, np.ndarray]:
    """(Ω, ∂_α Ω)。I: Ω = r、II: Ω = u·ū = t² − r²"""
    t = np.asarray(p.t, dtype=float)
    r = p.r
    shape = np.shape(r)
    if kind == "I":
        if np.any(r < SINGULAR_FLOOR):
            raise SingularSet("first-kind tensor is singular at r = 0")
        dO = np.concatenate([np.zeros(shape + (1,)), p.omega], axis=-1)
        return r, dO
    if kind == "II":
        om = t**2 - r**2
        if np.any(np.abs(om) < SINGULAR_FLOOR):
            raise SingularSet("second-kind tensor is singular on u*ubar = 0")
        dO = np.concatenate([np.broadcast_to(2.0 * t, shape)[..., None], -2.0 * p.x], axis=-1)
        return om, dO
    raise ValueError(f"unknown conformal kind {kind!r}")


def conformal_tensor(kind: str, phi: np.ndarray, Dphi: np.ndarray, p: SpacetimePoint) -> EMTensorValue:
    """Ωφ のエネルギー運動量テンソル（共形計量では g̃_{αβ} g̃^{γδ} = g_{αβ} g^{γδ}）"""
    Om, dO = conformal_factor(kind, p)
    D_conf = Om[..., None] * np.asarray(Dphi, dtype=complex) + np.asarray(phi)[..., None] * dO
    return EMTensorValue(em_tensor_phi(D_conf).Q, kind)


def momentum_density(Q: EMTensorValue, X, w=1.0, p: Optional[SpacetimePoint] = None) -> np.ndarray:
    """P_α = Q_{αβ} X^β · w"""
    if isinstance(X, (LorentzField, LieCombination)):
        X = X.at(p)
    return np.einsum("...ab,...b->...a", Q.Q, X) * np.asarray(w)[..., None]


def kbar0s(s: float) -> LieCombination:
    """K̄_0^s = T + K_0^s"""
    return LieCombination({LorentzField.time(): 1.0, LorentzField.fractional_morawetz(s): 1.0})


def morawetz_bulk(Q: EMTensorValue, s: float, p: SpacetimePoint) -> np.ndarray:
    """½ Q^{αβ} π_{αβ}(K̄_0^s)。T は Killing なので K_0^s 分だけ"""
    pi = deformation_tensor(LorentzField.fractional_morawetz(s), p)
    return 0.5 * np.einsum("...ab,...ab->...", Q.raised(), pi)


# ==========================
# 証明用の重み w̃
# ==========================
def w_tilde(t, r, gamma: float, eps: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    u = t - r
    ub = t + r
    c = chi_plus(-u)
    two_minus = np.maximum(2.0 - u, 1.0)
    two_plus = np.maximum(2.0 + u, 1.0)
    first = (1.0 + two_minus ** (2 * gamma)) * c + (1.0 + two_plus ** (-2 * eps)) * (1.0 - c)
    second = (1.0 + ub) ** (-2 * eps) * (two_minus ** (2 * gamma + 2 * eps) * c + 1.0 - c)
    return first + second


def w_tilde_minus_half_L(t, r, gamma: float, eps: float) -> np.ndarray:
    """−½ L(w̃) = −∂_ū w̃"""
    t = np.asarray(t, dtype=float)
    u = t - r
    ub = t + r
    c = chi_plus(-u)
    two_minus = np.maximum(2.0 - u, 1.0)
    return 2 * eps * (1.0 + ub) ** (-2 * eps - 1) * (two_minus ** (2 * gamma + 2 * eps) * c + 1.0 - c)


def w_tilde_minus_half_Lbar(t, r, gamma: float, eps: float) -> np.ndarray:
    """−½ L̄(w̃) = −∂_u w̃"""
    t = np.asarray(t, dtype=float)
    u = t - r
    ub = t + r
    c = chi_plus(-u)
    dc = chi_plus_prime(-u)
    two_minus = np.maximum(2.0 - u, 1.0)
    two_plus = np.maximum(2.0 + u, 1.0)
    g = 2 * gamma
    e = 2 * eps
    return (
        (two_minus**g - two_plus ** (-e)) * dc
        + (1.0 + ub) ** (-e) * (two_minus ** (g + e) - 1.0) * dc
        + (g + e) * (1.0 + ub) ** (-e) * two_minus ** (g + e - 1) * c
        + g * two_minus ** (g - 1) * c
        + e * two_plus ** (-e - 1) * (1.0 - c)
    )


def w_tilde_s(t, r, s: float, gamma: float, eps: float) -> np.ndarray:
    """スカラー場用の w̃_{s,γ,ε}"""
    t = np.asarray(t, dtype=float)
    u = t - r
    ub = t + r
    c = chi_plus(-u)
    two_minus = np.maximum(2.0 - u, 1.0)
    return (1.0 + ub) ** (2 * s - 2) * (two_minus ** (2 * gamma) * c + 1.0 - c) + (1.0 + ub) ** (
        2 * s - 2 - 2 * eps
    ) * (two_minus ** (2 * gamma + 2 * eps) * c + 1.0 - c)


# ==========================
# 動径プロファイル
# ==========================
@dataclass(frozen=True)
class SliceProfile:
    """時刻 t の動径プロファイル。comps は球面平均した |成分|²"""

    t: float
    r: np.ndarray
    dv: np.ndarray
    comps: Dict[str, np.ndarray]


F_COMPONENTS = ("alpha", "alphabar", "rho", "sigma")
PHI_COMPONENTS = ("DL", "DLbar", "slash", "phi_r")
J_COMPONENTS = ("J_L", "J_Lbar", "J_slash")


def _shell_average(grid: GridSpec, values: Dict[str, np.ndarray], halo: int = 2) -> Tuple[np.ndarray, np.ndarray, Dict[str, np.ndarray]]:
    """3d 格子の値を幅 h の球殻に平均する（halo は除外）"""
    r = interior(grid.radius(), grid, halo).ravel()
    idx = np.floor(r / grid.h).astype(int)
    counts = np.bincount(idx)
    keep = counts > 0
    r_bin = (np.arange(len(counts)) + 0.5) * grid.h
    # 箱に内接する球の内側だけ使う
    r_box = (grid.n / 2 - halo) * grid.h
    keep &= r_bin + 0.5 * grid.h <= r_box
    out = {}
    for k, v in values.items():
        s = np.bincount(idx, weights=interior(v, grid, halo).ravel(), minlength=len(counts))
        out[k] = (s[keep] / counts[keep])
    rb = r_bin[keep]
    return rb, 4.0 * np.pi * rb**2 * grid.h, out


def field_profile(t: float, F: CurvatureGrid, q: float = 0.0, offset: float = 2.0) -> SliceProfile:
    """F̃ = F − F̄ の null 成分の二乗プロファイル"""
    grid = F.grid
    Ft = subtract_charge(F, q, t, offset)
    pts = SpacetimePoint(np.full(grid.shape, t), grid.points())
    comps = null_decompose(Ft.form, frame_at(pts))
    sq = {
        "alpha": np.sum(comps.alpha**2, axis=-1),
        "alphabar": np.sum(comps.alphabar**2, axis=-1),
        "rho": comps.rho**2,
        "sigma": comps.sigma**2,
    }
    if grid.kind == "1d":
        return SliceProfile(t, grid.axis(), grid.cell_volume(), sq)
    r, dv, avg = _shell_average(grid, sq)
    return SliceProfile(t, r, dv, avg)


def scalar_profile(t: float, phi: GaugeScalarGrid, A: GaugePotentialGrid) -> SliceProfile:
    """(1/r)D_L(rφ), D_L̄ φ, slash-D φ, φ/r の二乗プロファイル"""
    grid = phi.grid
    D = covariant_gradient(phi, A)
    r = grid.radius()
    if grid.kind == "1d":
        Dr = D[1]
        slash2 = np.zeros(grid.shape)
    else:
        pts = grid.points()
        w = pts / np.maximum(r, 1e-300)[..., None]
        Dr = np.einsum("i...,...i->...", D[1:], w)
        slash2 = np.maximum(np.sum(np.abs(D[1:]) ** 2, axis=0) - np.abs(Dr) ** 2, 0.0)
    DL = D[0] + Dr
    DLb = D[0] - Dr
    sq = {
        "DL": np.abs(DL + phi.values / r) ** 2,
        "DLbar": np.abs(DLb) ** 2,
        "slash": slash2,
        "phi_r": np.abs(phi.values / r) ** 2,
    }
    if grid.kind == "1d":
        return SliceProfile(t, grid.axis(), grid.cell_volume(), sq)
    rb, dv, avg = _shell_average(grid, sq)
    return SliceProfile(t, rb, dv, avg)


def current_profile(t: float, J: CurrentGrid) -> SliceProfile:
    grid = J.grid
    r = grid.radius()
    if grid.kind == "1d":
        Jr = J.J[1]
        slash2 = np.zeros(grid.shape)
    else:
        w = grid.points() / np.maximum(r, 1e-300)[..., None]
        Jr = np.einsum("i...,...i->...", J.J[1:], w)
        slash2 = np.maximum(np.sum(J.J[1:] ** 2, axis=0) - Jr**2, 0.0)
    sq = {"J_L": (J.J[0] + Jr) ** 2, "J_Lbar": (J.J[0] - Jr) ** 2, "J_slash": slash2}
    if grid.kind == "1d":
        return SliceProfile(t, grid.axis(), grid.cell_volume(), sq)
    rb, dv, avg = _shell_average(grid, sq)
    return SliceProfile(t, rb, dv, avg)


# ==========================
# 重み表
# ==========================
WeightFn = Callable[[Dict[str, np.ndarray], WeightParams], np.ndarray]


def _ctx(t, r, wp: WeightParams) -> Dict[str, np.ndarray]:
    wv = weights_tr(t, r, wp)
    return {
        "tp": wv.tau_plus,
        "tm": wv.tau_minus,
        "t0": wv.tau_0,
        "wg": wv.w_gamma,
        "wge": wv.w_gamma_eps,
        "wpr": wv.w_prime,
        "u": np.asarray(t) - r,
        "ub": np.asarray(t) + r,
    }


F_WEIGHTS: Dict[str, Dict[str, WeightFn]] = {
    "fixed": {
        "alpha": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
        "alphabar": lambda c, wp: c["tm"] ** (2 * wp.s) * c["wg"],
        "rho": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
        "sigma": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
    },
    "cone": {
        "alpha": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
        "rho": lambda c, wp: c["tm"] ** (2 * wp.s) * c["wg"],
        "sigma": lambda c, wp: c["tm"] ** (2 * wp.s) * c["wg"],
    },
    "spacetime": {
        "alpha": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wpr"],
        "alphabar": lambda c, wp: c["t0"] ** (1 + 2 * wp.eps) * c["tm"] ** (2 * wp.s) * c["wpr"],
        "rho": lambda c, wp: c["t0"] ** (1 + 2 * wp.eps) * c["tp"] ** (2 * wp.s) * c["wpr"],
        "sigma": lambda c, wp: c["t0"] ** (1 + 2 * wp.eps) * c["tp"] ** (2 * wp.s) * c["wpr"],
    },
}

PHI_WEIGHTS: Dict[str, Dict[str, WeightFn]] = {
    "fixed": {
        "DL": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
        "DLbar": lambda c, wp: c["tm"] ** (2 * wp.s) * c["wg"],
        "slash": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
        "phi_r": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
    },
    "cone": {
        "DL": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"],
        "slash": lambda c, wp: c["tm"] ** (2 * wp.s) * c["wg"],
        # |u φ / (ū r)|²
        "phi_r": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wg"] * (c["u"] / np.maximum(c["ub"], 1e-300)) ** 2,
    },
    "spacetime": {
        "DL": lambda c, wp: c["tp"] ** (2 * wp.s) * c["wpr"],
        "DLbar": lambda c, wp: c["t0"] ** (1 + 2 * wp.eps) * c["tm"] ** (2 * wp.s) * c["wpr"],
        "slash": lambda c, wp: c["t0"] ** (1 + 2 * wp.eps) * c["tp"] ** (2 * wp.s) * c["wpr"],
        "phi_r": lambda c, wp: c["t0"] ** (1 + 2 * wp.eps) * c["tp"] ** (2 * wp.s) * c["wpr"],
    },
}

J_WEIGHTS: Dict[str, WeightFn] = {
    "J_L": lambda c, wp: c["tp"] ** (2 * wp.s + 1 + 2 * wp.eps) * c["tm"] ** (-2 * wp.eps) * c["wge"],
    "J_Lbar": lambda c, wp: c["tp"] ** (1 + 2 * wp.eps - 2 * wp.s) * c["tm"] ** (4 * wp.s - 2 * wp.eps) * c["wge"],
    "J_slash": lambda c, wp: c["tp"] ** (2 * wp.s) * c["tm"] * c["wge"],
}


# ==========================
# エネルギー汎関数
# ==========================
@dataclass(frozen=True)
class EnergyBreakdown:
    params: WeightParams
    window: Tuple[float, float]
    slice_dt: float
    charge_term: float
    fixed_time: Dict[str, float]
    fixed_time_total: float
    cone: Dict[str, float]
    cone_total: float
    spacetime: Dict[str, float]
    spacetime_total: float
    # 時刻ごとの固定時刻エネルギー（t, 合計）
    series: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.charge_term + self.fixed_time_total + self.cone_total + self.spacetime_total

    def rows(self) -> List[Tuple[str, str, str, float]]:
        out: List[Tuple[str, str, str, float]] = [("charge", "q", "none", self.charge_term)]
        for piece, d in (("fixed", self.fixed_time), ("cone", self.cone), ("spacetime", self.spacetime)):
            wtag = "w_prime" if piece == "spacetime" else "w_gamma"
            for comp in sorted(d):
                out.append((piece, comp, wtag, d[comp]))
        return out


def _check_window(slices: Sequence[SliceProfile], window: Tuple[float, float]) -> Tuple[List[SliceProfile], float]:
    t0, t1 = window
    if not slices:
        raise WindowNotCovered("no slices supplied", window=window)
    sel = [s for s in slices if t0 - 1e-9 <= s.t <= t1 + 1e-9]
    if not sel or sel[0].t > t0 + 1e-9 or sel[-1].t < t1 - 1e-9:
        raise WindowNotCovered("slices do not cover the window", window=window)
    if len(sel) == 1:
        return sel, 0.0
    ts = np.array([s.t for s in sel])
    dts = np.diff(ts)
    if np.any(dts <= 0) or np.max(np.abs(dts - dts[0])) > 1e-6 * max(dts[0], 1.0):
        raise WindowNotCovered("slices must be stored at uniform spacing", window=window)
    n_r = len(sel[0].r)
    if any(len(s.r) != n_r for s in sel):
        raise WindowNotCovered("slices do not share a radial grid", window=window)
    return sel, float(dts[0])


def _slice_integrals(sl: SliceProfile, table: Dict[str, WeightFn], wp: WeightParams) -> Dict[str, float]:
    c = _ctx(sl.t, sl.r, wp)
    return {k: float(np.sum(fn(c, wp) * sl.comps[k] * sl.dv)) for k, fn in table.items()}


def _cone_integrals(
    sel: List[SliceProfile], dt: float, table: Dict[str, WeightFn], wp: WeightParams
) -> Tuple[Dict[str, float], float]:
    """C(u) = {t − r = u} 上の積分の u に関する sup（t は線形補間）"""
    if dt == 0.0 or not table:
        return {k: 0.0 for k in table}, 0.0
    r = sel[0].r
    dv = np.sqrt(2.0) * sel[0].dv
    ta, tb = sel[0].t, sel[-1].t
    stacks = {k: np.stack([s.comps[k] for s in sel]) for k in table}
    best = {k: 0.0 for k in table}
    best_total = 0.0
    cols = np.arange(len(r))
    for u in np.arange(ta - r[-1], tb + 0.5 * dt, dt):
        t = u + r
        ok = (t >= ta) & (t <= tb)
        if not np.any(ok):
            continue
        pos = (t[ok] - ta) / dt
        k0 = np.minimum(np.floor(pos).astype(int), len(sel) - 2)
        frac = pos - k0
        c = _ctx(t[ok], r[ok], wp)
        total = 0.0
        for k, fn in table.items():
            st = stacks[k]
            vals = (1 - frac) * st[k0, cols[ok]] + frac * st[k0 + 1, cols[ok]]
            v = float(np.sum(fn(c, wp) * vals * dv[ok]))
            best[k] = max(best[k], v)
            total += v
        best_total = max(best_total, total)
    return best, best_total


def _breakdown(
    slices: Sequence[SliceProfile],
    wp: WeightParams,
    window: Tuple[float, float],
    tables: Dict[str, Dict[str, WeightFn]],
    charge_term: float,
) -> EnergyBreakdown:
    sel, dt = _check_window(slices, window)
    fixed_rows = [_slice_integrals(s, tables["fixed"], wp) for s in sel]
    fixed = {k: max(r[k] for r in fixed_rows) for k in tables["fixed"]}
    sums = [sum(r.values()) for r in fixed_rows]
    st_rows = [_slice_integrals(s, tables["spacetime"], wp) for s in sel]
    ts = np.array([s.t for s in sel])
    if len(sel) > 1:
        spacetime = {k: float(trapezoid([r[k] for r in st_rows], ts)) for k in tables["spacetime"]}
    else:
        spacetime = {k: 0.0 for k in tables["spacetime"]}
    cone, cone_total = _cone_integrals(sel, dt, tables["cone"], wp)
    logger.debug("energy breakdown over %d slices, dt=%g", len(sel), dt)
    return EnergyBreakdown(
        params=wp,
        window=window,
        slice_dt=dt,
        charge_term=charge_term,
        fixed_time=fixed,
        fixed_time_total=max(sums),
        cone=cone,
        cone_total=cone_total,
        spacetime=spacetime,
        spacetime_total=sum(spacetime.values()),
        series=[(float(s.t), float(v)) for s, v in zip(sel, sums)],
    )


def energy_breakdown_F(
    slices: Sequence[SliceProfile], wp: WeightParams, window: Tuple[float, float], q: float = 0.0
) -> EnergyBreakdown:
    """slices は field_profile で作った F̃ のプロファイル"""
    return _breakdown(slices, wp, window, F_WEIGHTS, q * q)


def energy_breakdown_phi(slices: Sequence[SliceProfile], wp: WeightParams, window: Tuple[float, float]) -> EnergyBreakdown:
    return _breakdown(slices, wp, window, PHI_WEIGHTS, 0.0)


@dataclass(frozen=True)
class CurrentNorm:
    J_L: float
    J_Lbar: float
    J_slash: float

    @property
    def total(self) -> float:
        return self.J_L + self.J_Lbar + self.J_slash


def current_norm(slices: Sequence[SliceProfile], wp: WeightParams, window: Tuple[float, float]) -> CurrentNorm:
    sel, _ = _check_window(slices, window)
    rows = [_slice_integrals(s, J_WEIGHTS, wp) for s in sel]
    if len(sel) == 1:
        return CurrentNorm(0.0, 0.0, 0.0)
    ts = np.array([s.t for s in sel])
    vals = {k: float(trapezoid([r[k] for r in rows], ts)) for k in J_WEIGHTS}
    return CurrentNorm(vals["J_L"], vals["J_Lbar"], vals["J_slash"])


def charge_current_profiles(q: float, r: np.ndarray, dv: np.ndarray, times: Sequence[float], offset: float = 2.0) -> List[SliceProfile]:
    """J̄ の動径プロファイル（J̄_L = 0、J̄_L̄ = q/(2πr²) χ⁺'）"""
    bar = ChargeTwoForm(q, offset)
    out = []
    for t in times:
        jl, jlb = bar.current_null(t, r)
        out.append(SliceProfile(float(t), r, dv, {"J_L": jl**2, "J_Lbar": jlb**2, "J_slash": np.zeros_like(r)}))
    return out


def field_linf_norm(slices: Sequence[SliceProfile], wp: WeightParams, q: float) -> float:
    """sup (τ+^{2s+3}|α|² + τ+²τ−^{2s+1}|ᾱ|² + τ+^{2s+2}τ−(ρ̃²+σ²)) w_γ + |q|²"""
    best = 0.0
    for sl in slices:
        c = _ctx(sl.t, sl.r, wp)
        v = (
            c["tp"] ** (2 * wp.s + 3) * sl.comps["alpha"]
            + c["tp"] ** 2 * c["tm"] ** (2 * wp.s + 1) * sl.comps["alphabar"]
            + c["tp"] ** (2 * wp.s + 2) * c["tm"] * (sl.comps["rho"] + sl.comps["sigma"])
        ) * c["wg"]
        best = max(best, float(np.max(v)))
    return best + q * q


def fixed_time_convergent(decay_exponent: float, s: float, gamma: float) -> bool:
    """|F̃| ~ r^{-k} の静的場で固定時刻エネルギーが有限か（外部域の重み指数の検査）"""
    # τ+^{2s} w_γ |F̃|² r² ~ r^{2s + 2γ − 2k + 2}
    return 2 * s + 2 * gamma - 2 * decay_exponent + 2 < -1


# ==========================
# 推定の監査
# ==========================
@dataclass(frozen=True)
class EstimateAudit:
    name: str
    lhs: float
    rhs: float

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs if self.rhs > 0 else float("inf") if self.lhs > 0 else 0.0


def initial_data_norm_F(E_df: np.ndarray, H: np.ndarray, J0: np.ndarray, grid: GridSpec, wp: WeightParams) -> float:
    """∫(1+r²)^{s+γ}(|E^df|² + |H|²) + ‖(1+r)^{s+γ} J_0‖²_{L^{6/5}}"""
    r = grid.radius()
    w = grid.cell_volume()
    k = wp.s + wp.gamma
    data = float(np.sum((1 + r**2) ** k * (np.sum(E_df**2, axis=0) + np.sum(H**2, axis=0)) * w))
    src = float(np.sum(np.abs((1 + r) ** k * J0) ** 1.2 * w) ** (5.0 / 3.0))
    return data + src


def initial_data_norm_phi(phi: GaugeScalarGrid, A: GaugePotentialGrid, wp: WeightParams) -> float:
    """∫_{t=0} (1+r²)^{s+γ} |Dφ|²"""
    grid = phi.grid
    D = covariant_gradient(phi, A)
    r = grid.radius()
    return float(np.sum((1 + r**2) ** (wp.s + wp.gamma) * np.sum(np.abs(D) ** 2, axis=0) * grid.cell_volume()))


# ==========================
# 発散の残差
# ==========================
@dataclass(frozen=True)
class DivergenceResidual:
    values: np.ndarray
    max: float
    l2: float


def divergence_residual(
    tensor_fn: Callable[[SpacetimePoint], np.ndarray],
    points: SpacetimePoint,
    h: float,
    rhs_fn: Optional[Callable[[SpacetimePoint], np.ndarray]] = None,
    domain: Optional[Callable[[SpacetimePoint], bool]] = None,
) -> DivergenceResidual:
    """∇^α T_{αβ}（中心差分）から恒等式の右辺を引いた残差"""
    div = 0.0
    for a in range(4):
        dx = np.zeros(points.coords().shape)
        dx[..., a] = h
        plus, minus = points.shifted(dx), points.shifted(-dx)
        if domain is not None and not (domain(plus) and domain(minus)):
            raise StencilOutOfDomain("divergence stencil leaves the sampled domain", axis=a)
        dT = (tensor_fn(plus) - tensor_fn(minus)) / (2.0 * h)
        div = div + ETA[a, a] * dT[..., a, :]
    res = div if rhs_fn is None else div - rhs_fn(points)
    return DivergenceResidual(values=res, max=float(np.max(np.abs(res))), l2=float(np.sqrt(np.mean(np.abs(res) ** 2))))


def conformal_divergence(kind: str, tensor_fn: Callable[[SpacetimePoint], np.ndarray], points: SpacetimePoint, h: float) -> np.ndarray:
    """共形計量 g̃ = Ω⁻² g での ∇̃^α T_{αβ} = Ω²(∂^α T_{αβ} + 2∇^λ w T_{λβ} − ∂_β w trT)、w = −ln Ω"""
    flat = divergence_residual(tensor_fn, points, h).values
    Om, dO = conformal_factor(kind, points)
    T = tensor_fn(points)
    dw = -dO / Om[..., None]
    dw_up = dw * np.diag(ETA)
    trT = np.einsum("ab,...ab->...", ETA, T)
    return Om[..., None] ** 2 * (flat + 2.0 * np.einsum("...l,...lb->...b", dw_up, T) - dw * trT[..., None])


def total_tensor_grid(phi: GaugeScalarGrid, A: GaugePotentialGrid, F: CurvatureGrid) -> np.ndarray:
    """格子上の Q[φ] + Q[F]（..., 4, 4）"""
    D = np.moveaxis(covariant_gradient(phi, A), 0, -1)
    return em_tensor_phi(D).Q + em_tensor_F(F.form).Q


def grid_divergence(Q_prev: np.ndarray, Q_mid: np.ndarray, Q_next: np.ndarray, dt: float, grid: GridSpec) -> np.ndarray:
    """3d 格子の ∇^α Q_{αβ}（時間は 3 レベル中心差分）。halo を除いて返す"""
    div = -(Q_next[..., 0, :] - Q_prev[..., 0, :]) / (2.0 * dt)
    for i in (1, 2, 3):
        comp = np.moveaxis(Q_mid[..., i, :], -1, 0)
        div = div + np.moveaxis(spatial_diff(comp, grid, i), 0, -1)
    return interior(np.moveaxis(div, -1, 0), grid)


def box_energy(phi: GaugeScalarGrid, A: GaugePotentialGrid, F: CurvatureGrid, mask: Optional[np.ndarray] = None) -> float:
    """∫ Q_00[total] dx"""
    Q = total_tensor_grid(phi, A, F)
    dens = Q[..., 0, 0]
    if mask is not None:
        dens = dens * mask
    return float(np.sum(dens * phi.grid.cell_volume()))
