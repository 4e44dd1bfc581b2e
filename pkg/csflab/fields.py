"""格子上の複素スカラー場・ゲージポテンシャル・曲率

方向の添字は μ = 0 が時間、1.. が空間（1d は動径 r のみ、3d は x, y, z）。
空間微分は 2 次中心差分、境界は 2 次片側差分（np.gradient(edge_order=2)）。
時間微分は差分せず、発展スキームが持つ運動量（*_dot）を使う。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal, Optional, Tuple

import numpy as np

from csflab.errors import GridMismatch, MissingTimeLevel, NaNDetected
from csflab.geometry import TwoFormValue, electric_magnetic

logger = logging.getLogger(__name__)

HALO = 2


@dataclass(frozen=True)
class GridSpec:
    kind: Literal["1d", "3d"]
    n: int
    h: float
    # 3d の最初のセル中心。1d は r_0 = h/2 固定
    origin: float = 0.0

    @classmethod
    def radial(cls, N: int, h: float) -> "GridSpec":
        return cls("1d", N, h, 0.5 * h)

    @classmethod
    def box(cls, n: int, h: float) -> "GridSpec":
        return cls("3d", n, h, -0.5 * n * h + 0.5 * h)

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.n,) if self.kind == "1d" else (self.n, self.n, self.n)

    @property
    def ndim(self) -> int:
        return len(self.shape)

    def axis(self) -> np.ndarray:
        return self.origin + self.h * np.arange(self.n)

    def coords(self) -> Tuple[np.ndarray, ...]:
        a = self.axis()
        if self.kind == "1d":
            return (a,)
        return tuple(np.meshgrid(a, a, a, indexing="ij"))

    def radius(self) -> np.ndarray:
        c = self.coords()
        if self.kind == "1d":
            return c[0]
        return np.sqrt(c[0] ** 2 + c[1] ** 2 + c[2] ** 2)

    def cell_volume(self) -> np.ndarray:
        """求積の重み（1d は 4π r² h）"""
        if self.kind == "1d":
            r = self.axis()
            return 4.0 * np.pi * r**2 * self.h
        return np.full(self.shape, self.h**3)

    def points(self) -> np.ndarray:
        """各格子点の空間座標 (..., 3)。1d は x 軸上に置く"""
        if self.kind == "1d":
            r = self.axis()
            return np.stack([r, np.zeros_like(r), np.zeros_like(r)], axis=-1)
        return np.stack(self.coords(), axis=-1)


def interior(arr: np.ndarray, grid: GridSpec, halo: int = HALO) -> np.ndarray:
    """末尾 ndim 軸から halo セルを落とす"""
    sl = (Ellipsis,) + tuple(slice(halo, -halo) for _ in range(grid.ndim))
    return arr[sl]


def spatial_diff(f: np.ndarray, grid: GridSpec, axis: int) -> np.ndarray:
    """axis は 1 始まりの空間方向"""
    return np.gradient(f, grid.h, axis=f.ndim - grid.ndim + axis - 1, edge_order=2)


# ==========================
# 格子上の場
# ==========================
@dataclass(frozen=True)
class GaugeScalarGrid:
    grid: GridSpec
    values: np.ndarray
    dt_values: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.values.shape != self.grid.shape:
            raise GridMismatch("scalar values do not match grid", shape=self.values.shape, grid=self.grid.shape)
        if not np.all(np.isfinite(self.values)):
            raise NaNDetected("scalar field has non-finite values")


@dataclass(frozen=True)
class GaugePotentialGrid:
    """A_μ (下付き)。components は (1 + ndim, *shape)"""

    grid: GridSpec
    components: np.ndarray
    dt_components: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        expect = (1 + self.grid.ndim,) + self.grid.shape
        if self.components.shape != expect:
            raise GridMismatch("potential does not match grid", shape=self.components.shape, expect=expect)

    @classmethod
    def zeros(cls, grid: GridSpec) -> "GaugePotentialGrid":
        z = np.zeros((1 + grid.ndim,) + grid.shape)
        return cls(grid, z, z.copy())


@dataclass(frozen=True)
class CurvatureGrid:
    grid: GridSpec
    form: TwoFormValue

    @classmethod
    def from_eh(cls, grid: GridSpec, E: np.ndarray, H: np.ndarray) -> "CurvatureGrid":
        """E, H は (3, *shape)。1d では (E_r, 0, 0) の x 軸表現を使う"""
        return cls(grid, TwoFormValue.from_eh(np.moveaxis(E, 0, -1), np.moveaxis(H, 0, -1)))

    @classmethod
    def radial(cls, grid: GridSpec, E_r: np.ndarray) -> "CurvatureGrid":
        E = np.zeros((3,) + grid.shape)
        E[0] = E_r
        return cls.from_eh(grid, E, np.zeros_like(E))


@dataclass(frozen=True)
class CurrentGrid:
    grid: GridSpec
    J: np.ndarray


def _check_same(a: GridSpec, b: GridSpec) -> None:
    if a != b:
        raise GridMismatch("fields live on different grids", left=a, right=b)


# ==========================
# 演算
# ==========================
def covariant_derivative(phi: GaugeScalarGrid, A: GaugePotentialGrid, mu: int) -> np.ndarray:
    """D_μ φ = ∂_μ φ + i A_μ φ"""
    _check_same(phi.grid, A.grid)
    if mu == 0:
        if phi.dt_values is None:
            raise MissingTimeLevel("time derivative of phi is not stored")
        d = phi.dt_values
    else:
        d = spatial_diff(phi.values, phi.grid, mu)
    return d + 1j * A.components[mu] * phi.values


def covariant_gradient(phi: GaugeScalarGrid, A: GaugePotentialGrid) -> np.ndarray:
    return np.stack([covariant_derivative(phi, A, mu) for mu in range(1 + phi.grid.ndim)])


def curvature_from_potential(A: GaugePotentialGrid) -> CurvatureGrid:
    """F = dA。F_{0i} は保存された ∂_t A_i を使う"""
    if A.dt_components is None:
        raise MissingTimeLevel("time derivative of A is not stored")
    g = A.grid
    a = A.components
    if g.kind == "1d":
        E_r = A.dt_components[1] - spatial_diff(a[0], g, 1)
        return CurvatureGrid.radial(g, E_r)
    E = np.stack([A.dt_components[i] - spatial_diff(a[0], g, i) for i in (1, 2, 3)])
    H = curl(a[1:], g)
    return CurvatureGrid.from_eh(g, E, H)


def curl(V: np.ndarray, grid: GridSpec) -> np.ndarray:
    d = lambda f, i: spatial_diff(f, grid, i)  # noqa: E731
    return np.stack(
        [
            d(V[2], 2) - d(V[1], 3),
            d(V[0], 3) - d(V[2], 1),
            d(V[1], 1) - d(V[0], 2),
        ]
    )


def divergence(V: np.ndarray, grid: GridSpec) -> np.ndarray:
    if grid.kind == "1d":
        r = grid.axis()
        return spatial_diff(r**2 * V[0], grid, 1) / r**2
    return sum(spatial_diff(V[i], grid, i + 1) for i in range(3))


def gradient(f: np.ndarray, grid: GridSpec) -> np.ndarray:
    return np.stack([spatial_diff(f, grid, i + 1) for i in range(grid.ndim)])


def current_from_fields(phi: GaugeScalarGrid, A: GaugePotentialGrid) -> CurrentGrid:
    """J_μ = Im(φ · conj(D_μ φ))"""
    Dphi = covariant_gradient(phi, A)
    return CurrentGrid(phi.grid, np.imag(phi.values[None] * np.conj(Dphi)))


def em_decompose(F: CurvatureGrid) -> Tuple[np.ndarray, np.ndarray]:
    """(E, H) を (3, *shape) で返す"""
    E, H = electric_magnetic(F.form)
    return np.moveaxis(E, -1, 0), np.moveaxis(H, -1, 0)


def gauge_transform(
    phi: GaugeScalarGrid, A: GaugePotentialGrid, chi: np.ndarray, dchi: np.ndarray, dchi_dt: Optional[np.ndarray] = None
) -> Tuple[GaugeScalarGrid, GaugePotentialGrid]:
    """(e^{iχ}φ, A − dχ)。dchi は (1 + ndim, *shape) の解析的な dχ"""
    _check_same(phi.grid, A.grid)
    phase = np.exp(1j * chi)
    new_dot = None
    if phi.dt_values is not None:
        new_dot = phase * (phi.dt_values + 1j * dchi[0] * phi.values)
    new_A_dot = None
    if A.dt_components is not None:
        new_A_dot = A.dt_components.copy()
        if dchi_dt is not None:
            new_A_dot = new_A_dot - dchi_dt
    return (
        GaugeScalarGrid(phi.grid, phase * phi.values, new_dot),
        GaugePotentialGrid(A.grid, A.components - dchi, new_A_dot),
    )


def bianchi_residual(A: GaugePotentialGrid) -> float:
    """dF = 0 の離散残差: max(|div H|, |∂_t H − curl E|) を halo を除いて評価"""
    g = A.grid
    if g.kind == "1d":
        return 0.0
    if A.dt_components is None:
        raise MissingTimeLevel("time derivative of A is not stored")
    F = curvature_from_potential(A)
    E, H = em_decompose(F)
    H_dot = curl(A.dt_components[1:], g)
    r1 = np.max(np.abs(interior(divergence(H, g), g)))
    r2 = np.max(np.abs(interior(H_dot - curl(E, g), g)))
    return float(max(r1, r2))


def continuity_residual(J_prev: CurrentGrid, J_mid: CurrentGrid, J_next: CurrentGrid, dt: float) -> np.ndarray:
    """∇^α J_α = −∂_t J_0 + div J（時間は 3 レベル中心差分）"""
    g = J_mid.grid
    dJ0 = (J_next.J[0] - J_prev.J[0]) / (2.0 * dt)
    return interior(-dJ0 + divergence(J_mid.J[1:], g), g)
