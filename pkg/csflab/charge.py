"""電荷、電荷二形式 F̄ の差し引き、電場の Hodge 分解と重み付き楕円評価"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import cumulative_trapezoid

from csflab.errors import DegenerateRadius, GridMismatch, SolverNonConvergence, WeightOutOfRange
from csflab.fields import (
    CurvatureGrid,
    GridSpec,
    divergence,
    gradient,
    interior,
    curl,
)
from csflab.geometry import (
    LorentzField,
    NullComponents,
    SampledTwoForm,
    SpacetimePoint,
    TwoFormValue,
    chi_plus,
    chi_plus_prime,
    frame_at,
    lie_derivative_two_form,
    null_decompose,
    tau_minus,
    tau_plus,
)

logger = logging.getLogger(__name__)

CG_RTOL = 1e-10


@dataclass(frozen=True)
class ChargeValue:
    q: float
    # 粗い格子（1つ飛ばし）との差から見積もった求積誤差
    quad_error: float


def total_charge(J0: np.ndarray, grid: GridSpec) -> ChargeValue:
    """q = ∫ J_0 dx（セル中心の格子求積、1d は 4πr² の測度）"""
    if J0.shape != grid.shape:
        raise GridMismatch("J_0 does not match grid", shape=J0.shape, grid=grid.shape)
    w = grid.cell_volume()
    q = float(np.sum(J0 * w))
    sl = tuple(slice(0, None, 2) for _ in range(grid.ndim))
    q_coarse = float(np.sum(J0[sl] * w[sl])) * 2**grid.ndim
    return ChargeValue(q=q, quad_error=abs(q - q_coarse) / 3.0)


# ==========================
# 電荷二形式 F̄
# ==========================
@dataclass(frozen=True)
class ChargeTwoForm:
    """ρ̄ = q/(4πr²) χ⁺(r − t − offset)、他の null 成分は 0"""

    q: float
    offset: float = 2.0

    def rho(self, t, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return self.q / (4.0 * np.pi * r**2) * chi_plus(r - t - self.offset)

    def E(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return (self.rho(t, r) / r)[..., None] * x

    def at(self, p: SpacetimePoint) -> TwoFormValue:
        if np.any(p.r <= 0):
            raise DegenerateRadius("charge two-form is singular at r = 0")
        return TwoFormValue.from_eh(self.E(p.t, p.x), np.zeros(p.x.shape))

    def sampled(self) -> SampledTwoForm:
        return SampledTwoForm(lambda t, x: TwoFormValue.from_eh(self.E(t, x), np.zeros(np.shape(x))).matrix())

    def current(self, t, r) -> Tuple[np.ndarray, np.ndarray]:
        """(J̄_0, J̄_r)。div Ē = J̄_0、∂_t Ē_r = J̄_r"""
        r = np.asarray(r, dtype=float)
        c = self.q / (4.0 * np.pi * r**2) * chi_plus_prime(r - t - self.offset)
        return c, -c

    def current_null(self, t, r) -> Tuple[np.ndarray, np.ndarray]:
        """(J̄_L, J̄_L̄) = (0, q/(2πr²) χ⁺')"""
        j0, jr = self.current(t, r)
        return j0 + jr, j0 - jr


def charge_two_form_at(q: float, p: SpacetimePoint, offset: float = 2.0) -> NullComponents:
    r = p.r
    if np.any(r <= 0):
        raise DegenerateRadius("charge two-form needs r > 0")
    shape = np.shape(r)
    return NullComponents(
        alpha=np.zeros(shape + (2,)),
        alphabar=np.zeros(shape + (2,)),
        rho=ChargeTwoForm(q, offset).rho(p.t, r),
        sigma=np.zeros(shape),
    )


def _charge_grid(grid: GridSpec, q: float, t: float, offset: float) -> CurvatureGrid:
    bar = ChargeTwoForm(q, offset)
    if grid.kind == "1d":
        return CurvatureGrid.radial(grid, bar.rho(t, grid.axis()))
    E = np.moveaxis(bar.E(t, grid.points()), -1, 0)
    return CurvatureGrid.from_eh(grid, E, np.zeros_like(E))


def subtract_charge(F: CurvatureGrid, q: float, t: float = 0.0, offset: float = 2.0) -> CurvatureGrid:
    """F̃ = F − F̄"""
    if q == 0.0:
        return F
    return CurvatureGrid(F.grid, F.form - _charge_grid(F.grid, q, t, offset).form)


def add_charge(F_tilde: CurvatureGrid, q: float, t: float = 0.0, offset: float = 2.0) -> CurvatureGrid:
    if q == 0.0:
        return F_tilde
    return CurvatureGrid(F_tilde.grid, F_tilde.form + _charge_grid(F_tilde.grid, q, t, offset).form)


# ==========================
# Poisson / Hodge 分解
# ==========================
def radial_potential_gradient(src: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Δu = src の球対称解の勾配 u'(r) = (1/r²) ∫_0^r s² src ds"""
    r = grid.axis()
    rr = np.concatenate([[0.0], r])
    integrand = np.concatenate([[0.0], r**2 * src])
    return cumulative_trapezoid(integrand, rr)[: len(r)] / r**2


def _wide_laplacian(m: int, h: float) -> sp.csr_matrix:
    """(f_{i+2} − 2f_i + f_{i−2})/(4h²)

    np.gradient の中心差分を 2 回合成した演算子と内部で一致し、E − ∇φ の離散発散が
    CG 許容誤差まで 0 になる。添字の偶奇で 8 つの部分格子に分かれるので、
    境界値は外側 2 層すべてに与える。
    """
    main = -2.0 * np.ones(m)
    off = np.ones(m - 2)
    return sp.diags([off, main, off], [-2, 0, 2], format="csr") / (4.0 * h * h)


@dataclass(frozen=True)
class PoissonResult:
    potential: np.ndarray
    residual: float
    iterations: int


def poisson_solve_3d(src: np.ndarray, grid: GridSpec) -> PoissonResult:
    """Δφ = src を CG で解く。外側2層は単極子 −Q/(4πr) で固定"""
    n, h = grid.n, grid.h
    r = grid.radius()
    inner = (slice(2, n - 2),) * 3
    Q = float(np.sum(src[inner]) * h**3)
    phi = -Q / (4.0 * np.pi * np.maximum(r, 0.5 * h))
    phi[inner] = 0.0

    m = n - 4
    I = sp.identity(m, format="csr")
    L1 = _wide_laplacian(m, h)
    lap = sp.kron(sp.kron(L1, I), I) + sp.kron(sp.kron(I, L1), I) + sp.kron(sp.kron(I, I), L1)

    # 境界値の寄与を右辺へ
    boundary_term = np.zeros((m, m, m))
    for ax in range(3):
        for shift in (2, -2):
            rolled = np.roll(phi, -shift, axis=ax)
            boundary_term += rolled[inner]
    boundary_term /= 4.0 * h * h
    rhs = -(src[inner] - boundary_term).ravel()

    iters = {"n": 0}

    def _count(_x) -> None:
        iters["n"] += 1

    sol, info = spla.cg(-lap, rhs, rtol=CG_RTOL, atol=0.0, maxiter=20 * m**3, callback=_count)
    res = float(np.linalg.norm(-lap @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if info != 0:
        raise SolverNonConvergence("CG did not converge", residual=res, info=info)
    phi[inner] = sol.reshape(m, m, m)
    logger.debug("poisson: %d iterations, residual %.3e", iters["n"], res)
    return PoissonResult(potential=phi, residual=res, iterations=iters["n"])


@dataclass(frozen=True)
class HodgeSplit:
    E_df: np.ndarray
    E_cf: np.ndarray
    potential: np.ndarray
    residual: float


def hodge_decompose(E: np.ndarray, grid: GridSpec) -> HodgeSplit:
    """E = E^df + E^cf、E^cf = ∇φ_pot、Δφ_pot = div E"""
    if grid.kind == "1d":
        # 動径場はすべて curl-free
        seg = E[0] * grid.h
        pot = -(np.cumsum(seg[::-1])[::-1] - seg)
        return HodgeSplit(E_df=np.zeros_like(E), E_cf=E.copy(), potential=pot, residual=0.0)
    res = poisson_solve_3d(divergence(E, grid), grid)
    E_cf = gradient(res.potential, grid)
    return HodgeSplit(E_df=E - E_cf, E_cf=E_cf, potential=res.potential, residual=res.residual)


# ==========================
# 重み付き楕円評価
# ==========================
@dataclass(frozen=True)
class EllipticRatio:
    lhs: float
    rhs: float
    ratio: float


def _lp_norm(f: np.ndarray, w: np.ndarray, p: float) -> float:
    return float(np.sum(np.abs(f) ** p * w) ** (1.0 / p))


def weighted_elliptic_ratio(src: np.ndarray, grid: GridSpec, delta: float) -> EllipticRatio:
    """lhs = ∫ r^{2δ} |∇(Δ⁻¹src + q/(4πr))|²、rhs = ‖r^δ src‖²_{L^{6/5}}"""
    if not 0.5 < delta < 1.5:
        raise WeightOutOfRange("weight exponent must satisfy 1/2 < delta < 3/2", delta=delta)
    w = grid.cell_volume()
    r = grid.radius()
    if grid.kind == "1d":
        # ∇(Δ⁻¹src + q/(4πr)) = −(1/r²) ∫_r^∞ s² src ds
        q_shell = src * r**2 * grid.h
        tail = np.cumsum(q_shell[::-1])[::-1] - 0.5 * q_shell
        g2 = (tail / r**2) ** 2
        lhs = float(np.sum(r ** (2 * delta) * g2 * w))
    else:
        res = poisson_solve_3d(src, grid)
        q = float(np.sum(src) * grid.h**3)
        rs = np.maximum(r, 0.5 * grid.h)
        coul = gradient(q / (4.0 * np.pi * rs), grid)
        grad = gradient(res.potential, grid) + coul
        g2 = np.sum(grad**2, axis=0)
        lhs = float(np.sum(interior(r ** (2 * delta) * g2 * w, grid)))
    rhs = _lp_norm(r**delta * src, w, 6.0 / 5.0) ** 2
    if rhs == 0.0:
        return EllipticRatio(lhs=lhs, rhs=0.0, ratio=0.0)
    return EllipticRatio(lhs=lhs, rhs=rhs, ratio=lhs / rhs)


# ==========================
# 許容初期データ
# ==========================
@dataclass(frozen=True)
class AdmissibleData:
    E: np.ndarray
    H: np.ndarray
    phi0: np.ndarray
    phidot0: np.ndarray
    gauss_residual: float
    magnetic_residual: float


def make_admissible_data(
    phi0: np.ndarray,
    phidot0: np.ndarray,
    grid: GridSpec,
    H_seed: Optional[np.ndarray] = None,
    E_df_seed: Optional[np.ndarray] = None,
) -> AdmissibleData:
    """∇·E = Im(φ_0 conj(φ̇_0))、∇·H = 0 を満たすデータを作る"""
    J0 = np.imag(phi0 * np.conj(phidot0))
    ncomp = 1 if grid.kind == "1d" else 3
    E_df = np.zeros((ncomp,) + grid.shape) if E_df_seed is None else np.asarray(E_df_seed, dtype=float)
    if grid.kind == "1d":
        E = E_df + radial_potential_gradient(J0, grid)[None]
        H = np.zeros_like(E)
        r = grid.axis()
        flux = r**2 * E[0]
        rr = np.concatenate([[0.0], r])
        enclosed = cumulative_trapezoid(np.concatenate([[0.0], r**2 * J0]), rr)
        scale = max(float(np.max(np.abs(enclosed))), 1e-300)
        return AdmissibleData(E, H, phi0, phidot0, float(np.max(np.abs(flux - enclosed)) / scale), 0.0)

    pot = poisson_solve_3d(J0, grid).potential
    E = E_df + gradient(pot, grid)
    if H_seed is None:
        H = np.zeros_like(E)
    else:
        H = H_seed - gradient(poisson_solve_3d(divergence(H_seed, grid), grid).potential, grid)
    gauss = float(np.max(np.abs(interior(divergence(E, grid) - J0, grid))))
    mag = float(np.max(np.abs(interior(divergence(H, grid), grid))))
    return AdmissibleData(E, H, phi0, phidot0, gauss, mag)


def divergence_free_seed(grid: GridSpec, *, amplitude: float = 1.0, width: float = 2.0, center=(0.0, 0.0, 0.0)) -> np.ndarray:
    """E^df の種: Gauss 型ベクトルポテンシャルの curl"""
    X, Y, Z = grid.coords()
    c = np.asarray(center, dtype=float)
    g = amplitude * np.exp(-((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2) / width**2)
    V = np.stack([-(Y - c[1]) * g, (X - c[0]) * g, 0.5 * g])
    return curl(V, grid)


# ==========================
# F̄ の Lie 微分の peeling 定数
# ==========================
def charge_peeling_constants(
    q: float,
    fields: Iterable[LorentzField],
    points: SpacetimePoint,
    offset: float = 2.0,
) -> Dict[str, Dict[str, float]]:
    """|α(𝓛_X F̄)| <= C|q| τ_0 τ_+^{-2}、他成分 <= C|q| τ_+^{-2} の経験定数"""
    bar = ChargeTwoForm(q, offset).sampled()
    fr = frame_at(points)
    tp = tau_plus(points.t, points.r)
    t0 = tau_minus(points.t, points.r) / tp
    out: Dict[str, Dict[str, float]] = {}
    for X in fields:
        comps = null_decompose(lie_derivative_two_form(bar, X, points), fr)
        a = np.linalg.norm(comps.alpha, axis=-1)
        rest = np.maximum.reduce([np.linalg.norm(comps.alphabar, axis=-1), np.abs(comps.rho), np.abs(comps.sigma)])
        out[X.name] = {
            "alpha": float(np.max(a * tp**2 / (abs(q) * t0))),
            "other": float(np.max(rest * tp**2 / abs(q))),
        }
    return out


def tail_slope(r: np.ndarray, values: np.ndarray, r_lo: float, r_hi: float) -> float:
    """log|values| を log r に最小二乗で当てた傾き"""
    sel = (r >= r_lo) & (r <= r_hi) & (np.abs(values) > 1e-300)
    if np.count_nonzero(sel) < 2:
        return float("nan")
    return float(np.polyfit(np.log(r[sel]), np.log(np.abs(values[sel])), 1)[0])

