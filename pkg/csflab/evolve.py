"""CSF 系の時間発展

sph1d: 球対称、ψ = rφ、Π = D_t ψ、動径ゲージ A_r = 0。
    ∂_t ψ = Π − i A_t ψ
    ∂_t Π = ∂_r² ψ − i A_t Π
    ∂_t E_r = J_r,   A_t(r) = ∫_r^R E_r ds（各 RK 段で再計算）
box3d: 周期格子の Lorenz ゲージ。外側はスポンジ層で減衰させる。
    ∂_t² A_α = Δ A_α + J_α
    ∂_t² φ = Δφ + 2i A^α ∂_α φ − A^α A_α φ
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.special import erf

from csflab.charge import poisson_solve_3d, total_charge
from csflab.energy import box_energy
from csflab.errors import CFLViolation, NaNDetected, RecipeUnknown
from csflab.fields import (
    CurvatureGrid,
    GaugePotentialGrid,
    GaugeScalarGrid,
    GridSpec,
    curvature_from_potential,
)
from csflab.schemas import RunConfig

logger = logging.getLogger(__name__)

MAX_CFL = {"sph1d": 0.9, "box3d": 0.8}
SPONGE_STRENGTH = 2.0
# 検証用の強制項つき解で使うポテンシャルの振幅
MANUFACTURED_POTENTIAL = 0.5
ACCEPTANCE_FRACTION = 0.6

SPH1D_RECIPES = ("zero", "charged-gaussian", "real-pulse", "coulomb", "manufactured")
BOX3D_RECIPES = ("zero", "charged-gaussian", "real-pulse", "coulomb", "plane-wave", "manufactured")

Arrays = Tuple[np.ndarray, ...]


def rk4_step(rhs: Callable[[float, Arrays], Arrays], t: float, y: Arrays, dt: float) -> Arrays:
    k = rhs(t, y)
    acc = [dt / 6.0 * v for v in k]
    for h, w in ((0.5 * dt, dt / 3.0), (0.5 * dt, dt / 3.0), (dt, dt / 6.0)):
        stage = tuple(a + h * v for a, v in zip(y, k))
        k = rhs(t + h, stage)
        acc = [a + w * v for a, v in zip(acc, k)]
    return tuple(a + b for a, b in zip(y, acc))


def _check_cfl(scheme: str, dt: float, h: float) -> None:
    if dt / h > MAX_CFL[scheme] + 1e-12:
        raise CFLViolation("time step exceeds the stability bound", scheme=scheme, ratio=dt / h, limit=MAX_CFL[scheme])


def _check_finite(t: float, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            logger.error("non-finite values at t=%.6g", t)
            raise NaNDetected("evolution produced non-finite values", t=t)


def _gaussian_enclosed(r: np.ndarray, width: float) -> np.ndarray:
    """密度 ∝ exp(−r²/w²) の規格化電荷が半径 r 内に持つ割合"""
    x = r / width
    return erf(x) - 2.0 / np.sqrt(np.pi) * x * np.exp(-(x**2))


# ==========================
# 強制項つきの検証解
# ==========================
@dataclass(frozen=True)
class RadialManufactured:
    """ψ = a r e^{-r²}(cos t + i r² sin 2t)、E_r = b r e^{-r²} sin t"""

    a: float
    b: float = MANUFACTURED_POTENTIAL

    def psi(self, t, r):
        e = np.exp(-(r**2))
        return self.a * (r * e * np.cos(t) + 1j * r**3 * e * np.sin(2 * t))

    def psi_t(self, t, r):
        e = np.exp(-(r**2))
        return self.a * (-r * e * np.sin(t) + 2j * r**3 * e * np.cos(2 * t))

    def psi_tt(self, t, r):
        e = np.exp(-(r**2))
        return self.a * (-r * e * np.cos(t) - 4j * r**3 * e * np.sin(2 * t))

    def psi_r(self, t, r):
        e = np.exp(-(r**2))
        return self.a * ((1 - 2 * r**2) * e * np.cos(t) + 1j * (3 * r**2 - 2 * r**4) * e * np.sin(2 * t))

    def psi_rr(self, t, r):
        e = np.exp(-(r**2))
        return self.a * ((4 * r**3 - 6 * r) * e * np.cos(t) + 1j * (6 * r - 14 * r**3 + 4 * r**5) * e * np.sin(2 * t))

    def A(self, t, r):
        return 0.5 * self.b * np.sin(t) * np.exp(-(r**2))

    def E(self, t, r):
        return self.b * np.sin(t) * r * np.exp(-(r**2))

    def Pi(self, t, r):
        return self.psi_t(t, r) + 1j * self.A(t, r) * self.psi(t, r)

    def sources(self, t, r) -> Tuple[np.ndarray, np.ndarray]:
        psi, A = self.psi(t, r), self.A(t, r)
        A_t = 0.5 * self.b * np.cos(t) * np.exp(-(r**2))
        Pi = self.Pi(t, r)
        Pi_t = self.psi_tt(t, r) + 1j * (A_t * psi + A * self.psi_t(t, r))
        S_Pi = Pi_t - self.psi_rr(t, r) + 1j * A * Pi
        E_t = self.b * np.cos(t) * r * np.exp(-(r**2))
        S_E = E_t - np.imag(psi * np.conj(self.psi_r(t, r))) / r**2
        return S_Pi, S_E


@dataclass(frozen=True)
class ModeSum:
    """Σ c exp(i(k·x − ωt))。real なら実部"""

    modes: Tuple[Tuple[complex, Tuple[float, float, float], float], ...]
    real: bool = False

    def _sum(self, t, X, factor) -> np.ndarray:
        out = 0.0
        for c, k, w in self.modes:
            e = c * np.exp(1j * (k[0] * X[0] + k[1] * X[1] + k[2] * X[2] - w * t))
            out = out + factor(k, w) * e
        out = np.asarray(out) * np.ones(np.shape(X[0]))
        return np.real(out) if self.real else out

    def value(self, t, X):
        return self._sum(t, X, lambda k, w: 1.0)

    def d(self, mu: int, t, X):
        if mu == 0:
            return self._sum(t, X, lambda k, w: -1j * w)
        return self._sum(t, X, lambda k, w: 1j * k[mu - 1])

    def dd(self, mu: int, nu: int, t, X):
        """∂_μ ∂_ν"""
        fac = lambda k, w, m: -1j * w if m == 0 else 1j * k[m - 1]  # noqa: E731
        return self._sum(t, X, lambda k, w: fac(k, w, mu) * fac(k, w, nu))

    def dtt(self, t, X):
        return self._sum(t, X, lambda k, w: -(w**2))

    def lap(self, t, X):
        return self._sum(t, X, lambda k, w: -(k[0] ** 2 + k[1] ** 2 + k[2] ** 2))


@dataclass(frozen=True)
class BoxManufactured:
    phi: ModeSum
    A: Tuple[ModeSum, ModeSum, ModeSum, ModeSum]

    @classmethod
    def default(cls, length: float, a: float, b: float = MANUFACTURED_POTENTIAL) -> "BoxManufactured":
        k = 2.0 * np.pi / length
        phi = ModeSum(((a, (k, 0.0, 0.0), 1.0), (0.5 * a, (0.0, k, -k), -0.5)))
        A = (
            ModeSum(((b, (0.0, k, 0.0), 1.0),), real=True),
            ModeSum(((-1j * b, (0.0, 0.0, k), -1.0),), real=True),
            ModeSum(((b, (k, 0.0, 0.0), 0.0),), real=True),
            ModeSum(((0.5 * b, (k, k, 0.0), 1.0),), real=True),
        )
        return cls(phi, A)

    def exact(self, t: float, X) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        phi = self.phi.value(t, X)
        phi_t = self.phi.d(0, t, X)
        A = np.stack([a.value(t, X) for a in self.A])
        A_t = np.stack([a.d(0, t, X) for a in self.A])
        return phi, phi_t, A, A_t

    def sources(self, t: float, X) -> Tuple[np.ndarray, np.ndarray]:
        phi = self.phi.value(t, X)
        dphi = [self.phi.d(mu, t, X) for mu in range(4)]
        A = [a.value(t, X) for a in self.A]
        Adphi = -A[0] * dphi[0] + sum(A[i] * dphi[i] for i in (1, 2, 3))
        AA = -A[0] ** 2 + sum(A[i] ** 2 for i in (1, 2, 3))
        S_phi = self.phi.dtt(t, X) - (self.phi.lap(t, X) + 2j * Adphi - AA * phi)
        J = [np.imag(phi * np.conj(dphi[mu] + 1j * A[mu] * phi)) for mu in range(4)]
        S_A = np.stack([self.A[mu].dtt(t, X) - self.A[mu].lap(t, X) - J[mu] for mu in range(4)])
        return S_phi, S_A


# ==========================
# sph1d
# ==========================
def temporal_potential(E_r: np.ndarray, h: float, gauge: str = "outer") -> np.ndarray:
    """outer: A_t(R) = 0、origin: A_t(0) = 0"""
    seg = h * E_r
    if gauge == "outer":
        return np.cumsum(seg[::-1])[::-1] - 0.5 * seg
    return -(np.cumsum(seg) - 0.5 * seg)


def _ghosted(psi: np.ndarray) -> np.ndarray:
    # 原点は奇拡張、外縁は 0
    return np.concatenate([[-psi[0]], psi, [0.0]])


def _enclosed_flux(psi: np.ndarray, Pi: np.ndarray, r: np.ndarray) -> np.ndarray:
    """∫_0^r s² J_0 ds = ∫_0^r Im(ψ conj Π) ds"""
    rr = np.concatenate([[0.0], r])
    integrand = np.concatenate([[0.0], np.imag(psi * np.conj(Pi))])
    return cumulative_trapezoid(integrand, rr)


@dataclass(frozen=True)
class SphericalState1D:
    grid: GridSpec
    t: float
    psi: np.ndarray
    Pi: np.ndarray
    E_r: np.ndarray
    gauge: str = "outer"
    free_field: bool = False
    # 外部電荷（Gauss 分布）の r²E_r への寄与
    ext_flux: Optional[np.ndarray] = None
    forcing: Optional[RadialManufactured] = None

    @property
    def r(self) -> np.ndarray:
        return self.grid.axis()

    @property
    def A_t(self) -> np.ndarray:
        if self.free_field:
            return np.zeros(self.grid.shape)
        return temporal_potential(self.E_r, self.grid.h, self.gauge)

    @property
    def phi(self) -> np.ndarray:
        return self.psi / self.r

    def dr_psi(self) -> np.ndarray:
        g = _ghosted(self.psi)
        return (g[2:] - g[:-2]) / (2.0 * self.grid.h)

    def J0(self) -> np.ndarray:
        return np.imag(self.psi * np.conj(self.Pi)) / self.r**2

    def Jr(self) -> np.ndarray:
        return np.imag(self.psi * np.conj(self.dr_psi())) / self.r**2

    def external_charge(self) -> float:
        return 0.0 if self.ext_flux is None else float(4.0 * np.pi * self.ext_flux[-1])

    def charge(self) -> float:
        """q = 4π Σ h Im(ψ conj Π)（外部電荷を含む）"""
        return float(4.0 * np.pi * self.grid.h * np.sum(np.imag(self.psi * np.conj(self.Pi)))) + self.external_charge()

    def gauss_residual(self) -> float:
        """max|r²E_r − ∫_0^r s² J_0| の相対値"""
        enclosed = _enclosed_flux(self.psi, self.Pi, self.r)
        if self.ext_flux is not None:
            enclosed = enclosed + self.ext_flux
        diff = float(np.max(np.abs(self.r**2 * self.E_r - enclosed)))
        scale = float(np.max(np.abs(enclosed)))
        return diff / scale if scale > 0 else diff

    def energy(self) -> float:
        """∫ Q_00 dx = 4π ∫ ½(|Π|² + |∂_r ψ|² + r² E_r²) dr"""
        dens = 0.5 * (np.abs(self.Pi) ** 2 + np.abs(self.dr_psi()) ** 2 + self.r**2 * self.E_r**2)
        return float(4.0 * np.pi * self.grid.h * np.sum(dens))

    def fields(self) -> Tuple[GaugeScalarGrid, GaugePotentialGrid, CurvatureGrid]:
        A_t = self.A_t
        phi = GaugeScalarGrid(self.grid, self.phi, (self.Pi - 1j * A_t * self.psi) / self.r)
        A = GaugePotentialGrid(self.grid, np.stack([A_t, np.zeros_like(A_t)]))
        return phi, A, CurvatureGrid.radial(self.grid, self.E_r)


def init_sph1d(recipe: str, cfg: RunConfig) -> SphericalState1D:
    grid = GridSpec.radial(cfg.cells, cfg.h)
    r = grid.axis()
    a, r0, w = cfg.amplitude, cfg.r0, cfg.width
    zero = np.zeros(grid.shape, dtype=complex)
    ext_flux = None
    forcing = None
    if recipe == "zero":
        psi, Pi = zero, zero.copy()
    elif recipe == "charged-gaussian":
        psi = (r * a * np.exp(-((r - r0) ** 2) / w**2)).astype(complex)
        # φ̇_0 = −i c φ_0 なので J_0 = c|φ_0|² > 0
        Pi = -1j * cfg.charge_rate * psi
    elif recipe == "real-pulse":
        psi = (r * a * np.exp(-((r - r0) ** 2) / w**2)).astype(complex)
        Pi = zero.copy()
    elif recipe == "coulomb":
        psi, Pi = zero, zero.copy()
        ext_flux = a * _gaussian_enclosed(r, w) / (4.0 * np.pi)
    elif recipe == "manufactured":
        forcing = RadialManufactured(a)
        psi, Pi = forcing.psi(0.0, r), forcing.Pi(0.0, r)
    else:
        raise RecipeUnknown(f"unknown sph1d recipe {recipe!r}", choices=SPH1D_RECIPES)

    if forcing is not None:
        E_r = forcing.E(0.0, r)
    else:
        flux = _enclosed_flux(psi, Pi, r)
        if ext_flux is not None:
            flux = flux + ext_flux
        E_r = flux / r**2
    state = SphericalState1D(grid, 0.0, psi, Pi, E_r, cfg.gauge, cfg.free_field, ext_flux, forcing)
    logger.info("sph1d init: recipe=%s N=%d h=%g q=%.6e", recipe, grid.n, grid.h, state.charge())
    return state


def _sph1d_rhs(state: SphericalState1D) -> Callable[[float, Arrays], Arrays]:
    grid = state.grid
    h = grid.h
    r = grid.axis()

    def rhs(t: float, y: Arrays) -> Arrays:
        psi, Pi, E_r = y
        g = _ghosted(psi)
        d2 = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / h**2
        if state.free_field:
            A_t = 0.0
            dE = np.zeros_like(E_r)
        else:
            A_t = temporal_potential(E_r, h, state.gauge)
            d1 = (g[2:] - g[:-2]) / (2.0 * h)
            dE = np.imag(psi * np.conj(d1)) / r**2
        dpsi = Pi - 1j * A_t * psi
        dPi = d2 - 1j * A_t * Pi
        if state.forcing is not None:
            S_Pi, S_E = state.forcing.sources(t, r)
            dPi = dPi + S_Pi
            dE = dE + S_E
        return dpsi, dPi, dE

    return rhs


def step_sph1d(state: SphericalState1D, dt: float) -> SphericalState1D:
    _check_cfl("sph1d", dt, state.grid.h)
    psi, Pi, E_r = rk4_step(_sph1d_rhs(state), state.t, (state.psi, state.Pi, state.E_r), dt)
    t = state.t + dt
    _check_finite(t, psi, Pi, E_r)
    return replace(state, t=t, psi=psi, Pi=Pi, E_r=E_r)


# ==========================
# box3d
# ==========================
def _dx(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """周期中心差分。axis は末尾3軸のうちの 0..2"""
    ax = f.ndim - 3 + axis
    return (np.roll(f, -1, ax) - np.roll(f, 1, ax)) / (2.0 * h)


def _lap(f: np.ndarray, h: float) -> np.ndarray:
    out = -6.0 * f
    for axis in range(3):
        ax = f.ndim - 3 + axis
        out = out + np.roll(f, -1, ax) + np.roll(f, 1, ax)
    return out / h**2


def sponge_profile(grid: GridSpec, fraction: float) -> np.ndarray:
    """外側 fraction の層で 4 次の立ち上がりを持つ減衰率"""
    if fraction <= 0.0:
        return np.zeros(grid.shape)
    half = 0.5 * grid.n * grid.h
    d = np.max(np.abs(np.stack(grid.coords())), axis=0)
    start = (1.0 - fraction) * half
    ramp = np.clip((d - start) / (half - start), 0.0, 1.0)
    return SPONGE_STRENGTH * ramp**4


@dataclass(frozen=True)
class BoxState3D:
    grid: GridSpec
    t: float
    phi: np.ndarray
    phi_t: np.ndarray
    A: np.ndarray
    A_t: np.ndarray
    damping: np.ndarray
    J_ext: Optional[np.ndarray] = None
    forcing: Optional[BoxManufactured] = None

    def acceptance_mask(self) -> np.ndarray:
        half = 0.5 * self.grid.n * self.grid.h
        d = np.max(np.abs(np.stack(self.grid.coords())), axis=0)
        return d <= ACCEPTANCE_FRACTION * half

    def current(self) -> np.ndarray:
        h = self.grid.h
        D = [self.phi_t + 1j * self.A[0] * self.phi]
        D += [_dx(self.phi, h, i) + 1j * self.A[i + 1] * self.phi for i in range(3)]
        return np.stack([np.imag(self.phi * np.conj(d)) for d in D])

    def charge(self) -> float:
        J0 = self.current()[0]
        if self.J_ext is not None:
            J0 = J0 + self.J_ext[0]
        return total_charge(J0, self.grid).q

    def electric(self) -> np.ndarray:
        h = self.grid.h
        return np.stack([self.A_t[i + 1] - _dx(self.A[0], h, i) for i in range(3)])

    def gauss_residual(self) -> float:
        h = self.grid.h
        E = self.electric()
        div = sum(_dx(E[i], h, i) for i in range(3))
        J0 = self.current()[0]
        if self.J_ext is not None:
            J0 = J0 + self.J_ext[0]
        return float(np.max(np.abs((div - J0)[self.acceptance_mask()])))

    def lorenz_residual(self) -> float:
        """∂^α A_α = −∂_t A_0 + div A"""
        h = self.grid.h
        res = -self.A_t[0] + sum(_dx(self.A[i + 1], h, i) for i in range(3))
        return float(np.max(np.abs(res[self.acceptance_mask()])))

    def fields(self) -> Tuple[GaugeScalarGrid, GaugePotentialGrid, CurvatureGrid]:
        phi = GaugeScalarGrid(self.grid, self.phi, self.phi_t)
        A = GaugePotentialGrid(self.grid, self.A, self.A_t)
        return phi, A, curvature_from_potential(A)

    def energy(self) -> float:
        phi, A, F = self.fields()
        return box_energy(phi, A, F, self.acceptance_mask())


def init_box3d(recipe: str, cfg: RunConfig) -> BoxState3D:
    grid = GridSpec.box(cfg.n, cfg.h)
    X = grid.coords()
    r = grid.radius()
    a, r0, w = cfg.amplitude, cfg.r0, cfg.width
    shape = grid.shape
    phi = np.zeros(shape, dtype=complex)
    phi_t = np.zeros(shape, dtype=complex)
    A = np.zeros((4,) + shape)
    A_t = np.zeros((4,) + shape)
    J_ext = None
    forcing = None
    if recipe == "zero":
        pass
    elif recipe in ("charged-gaussian", "real-pulse"):
        phi = (a * np.exp(-((r - r0) ** 2) / w**2)).astype(complex)
        if recipe == "charged-gaussian":
            Dt_phi = -1j * cfg.charge_rate * phi
            J0 = np.imag(phi * np.conj(Dt_phi))
            # −ΔA_0 = J_0、∂_t A = 0 で Lorenz 条件とその時間微分を満たす
            A[0] = poisson_solve_3d(-J0, grid).potential
            phi_t = Dt_phi - 1j * A[0] * phi
    elif recipe == "coulomb":
        rs = np.maximum(r, 1e-300)
        A[0] = np.where(r > 0, a * erf(r / w) / (4.0 * np.pi * rs), a / (2.0 * np.pi**1.5 * w))
        J_ext = np.zeros((4,) + shape)
        J_ext[0] = a * np.exp(-(r**2) / w**2) / (np.pi**1.5 * w**3)
    elif recipe == "plane-wave":
        k = 2.0 * np.pi / (grid.n * grid.h)
        A[2] = a * np.sin(k * X[0])
        A_t[2] = -a * k * np.cos(k * X[0])
    elif recipe == "manufactured":
        forcing = BoxManufactured.default(grid.n * grid.h, a)
        phi, phi_t, A, A_t = forcing.exact(0.0, X)
    else:
        raise RecipeUnknown(f"unknown box3d recipe {recipe!r}", choices=BOX3D_RECIPES)
    state = BoxState3D(grid, 0.0, phi, phi_t, A, A_t, sponge_profile(grid, cfg.sponge), J_ext, forcing)
    logger.info("box3d init: recipe=%s n=%d h=%g", recipe, grid.n, grid.h)
    return state


def _box3d_rhs(state: BoxState3D) -> Callable[[float, Arrays], Arrays]:
    h = state.grid.h
    sigma = state.damping
    X = state.grid.coords()

    def rhs(t: float, y: Arrays) -> Arrays:
        phi, phi_t, A, A_t = y
        dphi = [_dx(phi, h, i) for i in range(3)]
        Adphi = -A[0] * phi_t + sum(A[i + 1] * dphi[i] for i in range(3))
        AA = -A[0] ** 2 + sum(A[i + 1] ** 2 for i in range(3))
        phi_tt = _lap(phi, h) + 2j * Adphi - AA * phi - sigma * phi_t
        D = [phi_t + 1j * A[0] * phi] + [dphi[i] + 1j * A[i + 1] * phi for i in range(3)]
        J = np.stack([np.imag(phi * np.conj(d)) for d in D])
        A_tt = _lap(A, h) + J - sigma * A_t
        if state.J_ext is not None:
            A_tt = A_tt + state.J_ext
        if state.forcing is not None:
            S_phi, S_A = state.forcing.sources(t, X)
            phi_tt = phi_tt + S_phi
            A_tt = A_tt + S_A
        return phi_t, phi_tt, A_t, A_tt

    return rhs


def step_box3d(state: BoxState3D, dt: float) -> BoxState3D:
    _check_cfl("box3d", dt, state.grid.h)
    y = (state.phi, state.phi_t, state.A, state.A_t)
    phi, phi_t, A, A_t = rk4_step(_box3d_rhs(state), state.t, y, dt)
    t = state.t + dt
    _check_finite(t, phi, phi_t, A, A_t)
    return replace(state, t=t, phi=phi, phi_t=phi_t, A=A, A_t=A_t)


# ==========================
# 実行
# ==========================
State = Union[SphericalState1D, BoxState3D]


@dataclass(frozen=True)
class MonitorRow:
    t: float
    q: float
    gauss: float
    gauge: float
    energy: float


def monitor(state: State) -> MonitorRow:
    gauge = state.lorenz_residual() if isinstance(state, BoxState3D) else 0.0
    return MonitorRow(state.t, state.charge(), state.gauss_residual(), gauge, state.energy())


@dataclass
class RunResult:
    config: RunConfig
    snapshots: List[State] = field(default_factory=list)
    monitors: List[MonitorRow] = field(default_factory=list)

    @property
    def charge_drift(self) -> float:
        q0 = self.monitors[0].q
        dq = max(abs(m.q - q0) for m in self.monitors)
        return dq / abs(q0) if q0 != 0 else dq


def init_state(cfg: RunConfig) -> State:
    if cfg.scheme == "sph1d":
        return init_sph1d(cfg.recipe, cfg)
    return init_box3d(cfg.recipe, cfg)


def run(
    cfg: RunConfig,
    sink: Optional[Callable[[State, MonitorRow], None]] = None,
    state: Optional[State] = None,
) -> RunResult:
    """cadence ごとにスナップショットとモニタを記録する。sink があれば逐次書き出す"""
    state = init_state(cfg) if state is None else state
    step = step_sph1d if cfg.scheme == "sph1d" else step_box3d
    dt = cfg.dt
    n_steps = int(round(cfg.T / dt))
    every = max(1, int(round(cfg.cadence / dt)))
    result = RunResult(cfg)

    def record(s: State) -> None:
        row = monitor(s)
        result.snapshots.append(s)
        result.monitors.append(row)
        if sink is not None:
            sink(s, row)
        logger.info("t=%.4f q=%.10e gauss=%.3e energy=%.6e", row.t, row.q, row.gauss, row.energy)

    record(state)
    for k in range(1, n_steps + 1):
        state = step(state, dt)
        logger.debug("step %d t=%.6f", k, state.t)
        if k % every == 0:
            record(state)
    return result
