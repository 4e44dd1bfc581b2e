"""Minkowski の null frame 幾何（閉形式）

計量は diag(-1, 1, 1, 1)、座標は (t, x1, x2, x3)。
点・ベクトル・二形式はすべて末尾軸に成分を持つ numpy 配列で扱い、
先頭軸はバッチとしてそのまま通す。
"""
from __future__ import annotations

import itertools
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from csflab.errors import DegenerateRadius, DomainError, RegionViolation, StencilOutOfDomain
from csflab.schemas import WeightParams

logger = logging.getLogger(__name__)

ETA = np.diag([-1.0, 1.0, 1.0, 1.0])
CHART_SWITCH = 0.9

# 二形式の下三角 (F_{10}, F_{20}, F_{30}, F_{21}, F_{31}, F_{32})
LOWER = ((1, 0), (2, 0), (3, 0), (2, 1), (3, 1), (3, 2))


def _r_min() -> float:
    v = os.getenv("CSF_R_MIN", "").strip()
    return float(v) if v else 1e-10


def _levi_civita() -> np.ndarray:
    eps = np.zeros((4, 4, 4, 4))
    for perm in itertools.permutations(range(4)):
        inv = sum(1 for a in range(4) for b in range(a + 1, 4) if perm[a] > perm[b])
        eps[perm] = -1.0 if inv % 2 else 1.0
    return eps


# ε_{0123} = +1（下付き）
EPS4 = _levi_civita()
# ε_{μν}^{γδ}
EPS4_MIXED = np.einsum("abcd,cg,dh->abgh", EPS4, ETA, ETA)


def metric(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    return -X[..., 0] * Y[..., 0] + np.sum(X[..., 1:] * Y[..., 1:], axis=-1)


def lower(X: np.ndarray) -> np.ndarray:
    out = np.array(X, dtype=float, copy=True)
    out[..., 0] *= -1.0
    return out


# ==========================
# 点と optical functions
# ==========================
@dataclass(frozen=True)
class SpacetimePoint:
    t: np.ndarray
    x: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))

    @classmethod
    def from_tr(cls, t, r, direction=(1.0, 0.0, 0.0)) -> "SpacetimePoint":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        r = np.asarray(r, dtype=float)
        return cls(t=t, x=r[..., None] * d)

    @property
    def r(self) -> np.ndarray:
        return np.linalg.norm(self.x, axis=-1)

    @property
    def omega(self) -> np.ndarray:
        r = self.r
        safe = np.where(r > 0, r, 1.0)
        return self.x / safe[..., None]

    @property
    def u(self) -> np.ndarray:
        return self.t - self.r

    @property
    def ubar(self) -> np.ndarray:
        return self.t + self.r

    def coords(self) -> np.ndarray:
        t = np.broadcast_to(self.t, self.x.shape[:-1])
        return np.concatenate([t[..., None], self.x], axis=-1)

    def shifted(self, delta: np.ndarray) -> "SpacetimePoint":
        c = self.coords() + delta
        return SpacetimePoint(c[..., 0], c[..., 1:])

    @staticmethod
    def random(n: int, rng: np.random.Generator, *, t_max: float = 50.0, r_max: float = 100.0) -> "SpacetimePoint":
        t = rng.uniform(0.0, t_max, n)
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        r = rng.uniform(1e-3, r_max, n)
        return SpacetimePoint(t, r[:, None] * d)


# ==========================
# null frame
# ==========================
@dataclass(frozen=True)
class NullFrameSample:
    L: np.ndarray
    Lbar: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    # ω_i^A : (..., 2, 3)
    omega_A: np.ndarray
    chart: np.ndarray

    @property
    def e(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.e1, self.e2


def _sphere_frame(omega: np.ndarray, chart: Optional[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    if chart is None:
        use_z = np.abs(omega[..., 2]) <= CHART_SWITCH
    else:
        use_z = np.full(omega.shape[:-1], chart == 1)
    axis = np.where(use_z[..., None], np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0]))
    e2 = np.cross(axis, omega)
    e2 /= np.linalg.norm(e2, axis=-1, keepdims=True)
    e1 = np.cross(e2, omega)
    # e1 × e2 = ω
    return e1, e2, np.where(use_z, 1, 2)


def frame_at(p: SpacetimePoint, *, chart: Optional[int] = None, r_min: Optional[float] = None) -> NullFrameSample:
    """L = ∂t+∂r, L̄ = ∂t−∂r と球面上の正規直交枠 e_A（e_1 × e_2 = ω）

    chart=None なら |ω_3| <= 0.9 でチャート1、それ以外はチャート2。
    """
    floor = _r_min() if r_min is None else r_min
    r = p.r
    if np.any(r < floor):
        raise DegenerateRadius("frame requested at degenerate radius", r_min=floor, r=float(np.min(r)))
    w = p.omega
    one = np.ones(w.shape[:-1] + (1,))
    zero = np.zeros(w.shape[:-1] + (1,))
    e1s, e2s, ch = _sphere_frame(w, chart)
    return NullFrameSample(
        L=np.concatenate([one, w], axis=-1),
        Lbar=np.concatenate([one, -w], axis=-1),
        e1=np.concatenate([zero, e1s], axis=-1),
        e2=np.concatenate([zero, e2s], axis=-1),
        omega_A=np.stack([e1s, e2s], axis=-2),
        chart=ch,
    )


# ==========================
# χ⁺ と重み
# ==========================
def chi_plus(x) -> np.ndarray:
    """滑らかな Heaviside: (−∞,0] で 0、[1,∞) で 1"""
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xi = np.where(inside, x, 0.5)
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    val = a / (a + b)
    return np.where(x <= 0.0, 0.0, np.where(x >= 1.0, 1.0, val))


def chi_plus_prime(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    xi = np.where(inside, x, 0.5)
    a = np.exp(-1.0 / xi)
    b = np.exp(-1.0 / (1.0 - xi))
    da = a / xi**2
    db = -b / (1.0 - xi) ** 2
    val = (da * b - a * db) / (a + b) ** 2
    return np.where(inside, val, 0.0)


def tau_plus(t, r) -> np.ndarray:
    return np.sqrt(1.0 + (np.asarray(t, dtype=float) + r) ** 2)


def tau_minus(t, r) -> np.ndarray:
    return np.sqrt(1.0 + (np.asarray(t, dtype=float) - r) ** 2)


@dataclass(frozen=True)
class WeightValues:
    tau_plus: np.ndarray
    tau_minus: np.ndarray
    tau_0: np.ndarray
    w_gamma: np.ndarray
    w_gamma_eps: np.ndarray
    w_prime: np.ndarray


def w_gamma(t, r, gamma: float, *, sharp: bool = False) -> np.ndarray:
    tm = tau_minus(t, r)
    if sharp:
        return np.where(np.asarray(t) < r, tm ** (2.0 * gamma), 0.0)
    c = chi_plus(np.asarray(r) - t)
    return c * tm ** (2.0 * gamma) + (1.0 - c)


def weights_at(p: SpacetimePoint, wp: WeightParams) -> WeightValues:
    return weights_tr(p.t, p.r, wp)


def weights_tr(t, r, wp: WeightParams) -> WeightValues:
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    tp = tau_plus(t, r)
    tm = tau_minus(t, r)
    c = chi_plus(r - t)
    return WeightValues(
        tau_plus=tp,
        tau_minus=tm,
        tau_0=tm / tp,
        w_gamma=w_gamma(t, r, wp.gamma, sharp=wp.sharp),
        w_gamma_eps=c * tm ** (2.0 * wp.gamma) + (1.0 - c) * tm ** (2.0 * wp.eps),
        w_prime=c * tm ** (2.0 * wp.gamma - 1.0) + (1.0 - c) * tm ** (-2.0 * wp.eps - 1.0),
    )


# ==========================
# 二形式と null 分解
# ==========================
@dataclass(frozen=True)
class TwoFormValue:
    """F_{μν}。下三角6成分だけを保持するので反対称性は厳密"""

    comps: np.ndarray

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "TwoFormValue":
        M = np.asarray(M, dtype=float)
        return cls(np.stack([M[..., a, b] for a, b in LOWER], axis=-1))

    @classmethod
    def from_eh(cls, E: np.ndarray, H: np.ndarray) -> "TwoFormValue":
        """E_i = F_{0i}, F_{ij} = ε_{ijk} H_k"""
        E = np.asarray(E, dtype=float)
        H = np.asarray(H, dtype=float)
        E, H = np.broadcast_arrays(E, H)
        # F_{i0} = −E_i, F_{21} = −H_3, F_{31} = H_2, F_{32} = −H_1
        return cls(np.stack([-E[..., 0], -E[..., 1], -E[..., 2], -H[..., 2], H[..., 1], -H[..., 0]], axis=-1))

    @classmethod
    def zeros(cls, shape=()) -> "TwoFormValue":
        return cls(np.zeros(tuple(shape) + (6,)))

    def matrix(self) -> np.ndarray:
        M = np.zeros(self.comps.shape[:-1] + (4, 4))
        for k, (a, b) in enumerate(LOWER):
            M[..., a, b] = self.comps[..., k]
            M[..., b, a] = -self.comps[..., k]
        return M

    def __add__(self, other: "TwoFormValue") -> "TwoFormValue":
        return TwoFormValue(self.comps + other.comps)

    def __sub__(self, other: "TwoFormValue") -> "TwoFormValue":
        return TwoFormValue(self.comps - other.comps)

    def __mul__(self, a) -> "TwoFormValue":
        return TwoFormValue(np.asarray(a)[..., None] * self.comps)

    __rmul__ = __mul__


@dataclass(frozen=True)
class NullComponents:
    alpha: np.ndarray
    alphabar: np.ndarray
    rho: np.ndarray
    sigma: np.ndarray

    def as_tuple(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.alpha, self.alphabar, self.rho, self.sigma


def two_form_apply(M: np.ndarray, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    return np.einsum("...a,...ab,...b->...", X, M, Y)


def eps_rotate(v: np.ndarray) -> np.ndarray:
    """(ε v)_A = ε_A^B v_B, ε_1^2 = 1"""
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def null_decompose(F: TwoFormValue, frame: NullFrameSample) -> NullComponents:
    M = F.matrix()
    alpha = np.stack([two_form_apply(M, frame.L, e) for e in frame.e], axis=-1)
    alphabar = np.stack([two_form_apply(M, frame.Lbar, e) for e in frame.e], axis=-1)
    rho = 0.5 * two_form_apply(M, frame.Lbar, frame.L)
    sigma = two_form_apply(M, frame.e1, frame.e2)
    return NullComponents(alpha=alpha, alphabar=alphabar, rho=rho, sigma=sigma)


def hodge_dual(F: TwoFormValue) -> TwoFormValue:
    """(*F)_{μν} = ½ ε_{μν}^{γδ} F_{γδ}"""
    M = F.matrix()
    return TwoFormValue.from_matrix(0.5 * np.einsum("abgd,...gd->...ab", EPS4_MIXED, M))


def electric_magnetic(F: TwoFormValue) -> Tuple[np.ndarray, np.ndarray]:
    """E_i = F_{0i}, H_i = *F_{0i}"""
    E = F.matrix()[..., 0, 1:]
    H = hodge_dual(F).matrix()[..., 0, 1:]
    return E, H


# ==========================
# Lorentz 代数
# ==========================
LINEAR_TAGS = ("d", "rot", "boost", "S", "T")


@dataclass(frozen=True)
class LorentzField:
    """𝕃 の生成元と共形場。i, j は座標添字（0 = t, 1..3 = 空間）"""

    tag: str
    i: int = 0
    j: int = 0
    s: float = 1.0

    # --- 生成元 ---
    @classmethod
    def d(cls, mu: int) -> "LorentzField":
        return cls("d", mu)

    @classmethod
    def rotation(cls, i: int, j: int) -> "LorentzField":
        return cls("rot", i, j)

    @classmethod
    def boost(cls, i: int) -> "LorentzField":
        """Ω_{i0} = x_i ∂_t + t ∂_i"""
        return cls("boost", i)

    @classmethod
    def radial(cls) -> "LorentzField":
        """∂_r = ω^i ∂_i"""
        return cls("d_r")

    @classmethod
    def radial_boost(cls) -> "LorentzField":
        """Ω_{0r} = ω^i Ω_{0i} = −(r ∂_t + t ∂_r)"""
        return cls("boost_r")

    @classmethod
    def scaling(cls) -> "LorentzField":
        return cls("S")

    @classmethod
    def morawetz(cls) -> "LorentzField":
        return cls("K0")

    @classmethod
    def fractional_morawetz(cls, s: float) -> "LorentzField":
        return cls("K0s", s=s)

    @classmethod
    def time(cls) -> "LorentzField":
        return cls("T")

    @property
    def in_algebra(self) -> bool:
        return self.tag in LINEAR_TAGS

    @property
    def name(self) -> str:
        if self.tag == "d":
            return f"d{self.i}"
        if self.tag == "rot":
            return f"Omega{self.i}{self.j}"
        if self.tag == "boost":
            return f"Omega{self.i}0"
        if self.tag == "K0s":
            return f"K0s[{self.s:g}]"
        return {"boost_r": "Omega0r", "d_r": "dr"}.get(self.tag, self.tag)

    def affine(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """X^μ = a^μ + M^μ_ν x^ν。𝕃 の外なら None"""
        a = np.zeros(4)
        M = np.zeros((4, 4))
        if self.tag == "d":
            a[self.i] = 1.0
        elif self.tag == "T":
            a[0] = 1.0
        elif self.tag == "rot":
            M[self.j, self.i] = 1.0
            M[self.i, self.j] = -1.0
        elif self.tag == "boost":
            M[0, self.i] = 1.0
            M[self.i, 0] = 1.0
        elif self.tag == "S":
            M = np.eye(4)
        else:
            return None
        return a, M

    def at(self, p: SpacetimePoint) -> np.ndarray:
        aff = self.affine()
        c = p.coords()
        if aff is not None:
            a, M = aff
            return a + np.einsum("mn,...n->...m", M, c)
        t = c[..., 0]
        r = p.r
        w = p.omega
        if self.tag == "d_r":
            return np.concatenate([np.zeros_like(t)[..., None], w], axis=-1)
        if self.tag == "boost_r":
            return np.concatenate([-r[..., None], -t[..., None] * w], axis=-1)
        if self.tag == "K0":
            return np.concatenate([(t**2 + r**2)[..., None], 2.0 * t[..., None] * p.x], axis=-1)
        if self.tag == "K0s":
            vb = np.abs(t + r) ** (2.0 * self.s)
            v = np.abs(t - r) ** (2.0 * self.s)
            return np.concatenate([(0.5 * (vb + v))[..., None], (0.5 * (vb - v))[..., None] * w], axis=-1)
        raise DomainError(f"unknown field tag {self.tag!r}")

    def jacobian(self, p: SpacetimePoint, h: float = 1e-5) -> np.ndarray:
        """D[μ, ν] = ∂_ν X^μ"""
        aff = self.affine()
        shape = p.coords().shape[:-1]
        if aff is not None:
            return np.broadcast_to(aff[1], shape + (4, 4)).copy()
        if self.tag == "K0":
            c = p.coords()
            D = np.zeros(shape + (4, 4))
            D[..., 0, 0] = 2.0 * c[..., 0]
            D[..., 0, 1:] = 2.0 * c[..., 1:]
            D[..., 1:, 0] = 2.0 * c[..., 1:]
            D[..., 1:, 1:] = 2.0 * c[..., 0][..., None, None] * np.eye(3)
            return D
        cols = []
        for nu in range(4):
            dx = np.zeros(4)
            dx[nu] = h
            cols.append((self.at(p.shifted(dx)) - self.at(p.shifted(-dx))) / (2.0 * h))
        return np.stack(cols, axis=-1)


def algebra_basis() -> Tuple[LorentzField, ...]:
    out = [LorentzField.d(mu) for mu in range(4)]
    out += [LorentzField.rotation(i, j) for i, j in ((1, 2), (1, 3), (2, 3))]
    out += [LorentzField.boost(i) for i in (1, 2, 3)]
    out.append(LorentzField.scaling())
    return tuple(out)


@dataclass(frozen=True)
class LieCombination:
    """定数係数の線形結合 Σ c_k X_k"""

    terms: Dict[LorentzField, float] = field(default_factory=dict)

    def at(self, p: SpacetimePoint) -> np.ndarray:
        out = np.zeros(p.coords().shape)
        for X, c in self.terms.items():
            out = out + c * X.at(p)
        return out

    def is_zero(self) -> bool:
        return not self.terms

    def __len__(self) -> int:
        return len(self.terms)


def bracket(X: LorentzField, Y: LorentzField) -> LieCombination:
    """[X, Y] を 𝕃 の基底で厳密に展開する"""
    ax = X.affine()
    ay = Y.affine()
    if ax is None or ay is None:
        raise DomainError("bracket is defined on the linear algebra only", X=X.name, Y=Y.name)
    a_x, M_x = ax
    a_y, M_y = ay
    a = M_y @ a_x - M_x @ a_y
    M = M_y @ M_x - M_x @ M_y

    terms: Dict[LorentzField, float] = {}
    for mu in range(4):
        if a[mu] != 0.0:
            terms[LorentzField.d(mu)] = float(a[mu])
    c_s = np.trace(M) / 4.0
    if c_s != 0.0:
        terms[LorentzField.scaling()] = float(c_s)
    for i, j in ((1, 2), (1, 3), (2, 3)):
        c = 0.5 * (M[j, i] - M[i, j])
        if c != 0.0:
            terms[LorentzField.rotation(i, j)] = float(c)
    for i in (1, 2, 3):
        c = 0.5 * (M[0, i] + M[i, 0])
        if c != 0.0:
            terms[LorentzField.boost(i)] = float(c)
    return LieCombination(terms)


def vector_bracket(
    X: Callable[[SpacetimePoint], np.ndarray],
    Y: Callable[[SpacetimePoint], np.ndarray],
    p: SpacetimePoint,
    h: float = 1e-5,
) -> np.ndarray:
    """[X,Y]^μ = X^ν ∂_ν Y^μ − Y^ν ∂_ν X^μ（中心差分）"""

    def grad(V):
        cols = []
        for nu in range(4):
            dx = np.zeros(4)
            dx[nu] = h
            cols.append((V(p.shifted(dx)) - V(p.shifted(-dx))) / (2.0 * h))
        return np.stack(cols, axis=-1)

    Xp = X(p)
    Yp = Y(p)
    return np.einsum("...mn,...n->...m", grad(Y), Xp) - np.einsum("...mn,...n->...m", grad(X), Yp)


# ==========================
# deformation tensor / Morawetz
# ==========================
def deformation_tensor(X: LorentzField, p: SpacetimePoint, h: float = 1e-5) -> np.ndarray:
    """π_{μν} = ∇_μ X_ν + ∇_ν X_μ"""
    if X.tag == "K0s":
        return k0s_deformation_closed_form(X.s, p)
    D = X.jacobian(p, h)
    low = np.einsum("nl,...lm->...nm", ETA, D)
    return low + np.swapaxes(low, -1, -2)


def _fractional_profiles(s: float, t, r):
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    ub = t + r
    u = t - r
    vb = np.abs(ub) ** (2.0 * s)
    v = np.abs(u) ** (2.0 * s)
    vb_d = 2.0 * s * np.abs(ub) ** (2.0 * s - 1.0) * np.sign(ub)
    v_d = 2.0 * s * np.abs(u) ** (2.0 * s - 1.0) * np.sign(u)
    return vb, v, vb_d, v_d


def morawetz_factor(s: float, t, r) -> np.ndarray:
    """(v̄ − v)/r − (v̄' + v')。1/2 <= s <= 1 で非負"""
    if not 0.5 <= s <= 1.0:
        raise DomainError("morawetz exponent outside [1/2, 1]", s=s)
    if np.any(np.asarray(r) <= 0):
        raise DegenerateRadius("morawetz factor needs r > 0")
    vb, v, vb_d, v_d = _fractional_profiles(s, t, r)
    return (vb - v) / r - (vb_d + v_d)


def k0s_deformation_closed_form(s: float, p: SpacetimePoint) -> np.ndarray:
    """π(K_0^s) = (v̄−v)/r · g + 2f (θ^L̄⊗θ^L + θ^L⊗θ^L̄)"""
    t, r = p.t, p.r
    vb, v, _, _ = _fractional_profiles(s, t, r)
    f = morawetz_factor(s, t, r)
    fr = frame_at(p)
    # θ^L(X) = −½ g(L̄, X), θ^L̄(X) = −½ g(L, X)
    th_L = -0.5 * lower(fr.Lbar)
    th_Lb = -0.5 * lower(fr.L)
    sym = np.einsum("...a,...b->...ab", th_Lb, th_L)
    sym = sym + np.swapaxes(sym, -1, -2)
    trace = ((vb - v) / r)[..., None, None] * ETA
    return trace + 2.0 * f[..., None, None] * sym


# ==========================
# 二形式の Lie 微分（有限差分）
# ==========================
@dataclass(frozen=True)
class SampledTwoForm:
    """(t, x) -> F_{μν} を返す関数。bounds は (t_min, t_max, r_max)"""

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bounds: Optional[Tuple[float, float, float]] = None

    def __call__(self, p: SpacetimePoint) -> np.ndarray:
        return np.asarray(self.func(p.t, p.x), dtype=float)

    def contains(self, p: SpacetimePoint) -> bool:
        if self.bounds is None:
            return True
        t_lo, t_hi, r_hi = self.bounds
        return bool(np.all((p.t >= t_lo) & (p.t <= t_hi) & (p.r <= r_hi)))


def default_step(p: SpacetimePoint) -> np.ndarray:
    return 1e-3 * np.maximum(1.0, p.r)


def lie_derivative_two_form(F: SampledTwoForm, X: LorentzField, p: SpacetimePoint, h=None) -> TwoFormValue:
    """(𝓛_X F)_{αβ} = X(F_{αβ}) + F_{γβ} ∂_α X^γ + F_{αγ} ∂_β X^γ"""
    h = default_step(p) if h is None else np.asarray(h, dtype=float)
    hh = np.broadcast_to(h, p.coords().shape[:-1])
    dF = []
    for mu in range(4):
        dx = np.zeros(p.coords().shape)
        dx[..., mu] = hh
        plus, minus = p.shifted(dx), p.shifted(-dx)
        if not (F.contains(plus) and F.contains(minus)):
            raise StencilOutOfDomain("Lie derivative stencil leaves the sampled domain", mu=mu)
        dF.append((F(plus) - F(minus)) / (2.0 * hh[..., None, None]))
    dF = np.stack(dF, axis=-3)
    Xp = X.at(p)
    D = X.jacobian(p)
    M = F(p)
    XF = np.einsum("...m,...mab->...ab", Xp, dF)
    out = XF + np.einsum("...ga,...gb->...ab", D, M) + np.einsum("...ag,...gb->...ab", M, D)
    return TwoFormValue.from_matrix(out)


def lie_field(F: SampledTwoForm, X: LorentzField, h: Optional[float] = None) -> SampledTwoForm:
    """𝓛_X F をまた SampledTwoForm として返す（入れ子評価用）"""

    def func(t, x):
        return lie_derivative_two_form(F, X, SpacetimePoint(t, x), h).matrix()

    return SampledTwoForm(func, F.bounds)


# ==========================
# special cancellation
# ==========================
def special_cancellation(X: LorentzField, p: SpacetimePoint) -> np.ndarray:
    """max_A |(2/r)∇^{L̄}(r) X^A − (∇^{L̄}X)^A + (∇^A X)^{L̄}|

    ∇^{L̄} = −½∇_L、V^{L̄} = −½ g(V, L)。
    """
    if not X.in_algebra:
        raise DomainError("special cancellation is defined on the linear algebra only", X=X.name)
    r = p.r
    if np.any(np.asarray(p.t) >= 2.0 * r):
        raise RegionViolation("special cancellation needs t < 2r", X=X.name)
    fr = frame_at(p)
    D = X.jacobian(p)
    Xp = X.at(p)
    nabla_L = np.einsum("...mn,...n->...m", D, fr.L)
    vals = []
    for e in fr.e:
        XA = metric(Xp, e)
        term_L = -0.5 * metric(nabla_L, e)
        nabla_e = np.einsum("...mn,...n->...m", D, e)
        term_A = -0.5 * metric(nabla_e, fr.L)
        # ∇^{L̄}(r) = −½ L(r) = −½
        vals.append(np.abs(-XA / r - term_L + term_A))
    return np.maximum(vals[0], vals[1])


def frame_vector_field(A: int, chart: int) -> Callable[[SpacetimePoint], np.ndarray]:
    def field_fn(p: SpacetimePoint) -> np.ndarray:
        fr = frame_at(p, chart=chart)
        return fr.e1 if A == 0 else fr.e2

    return field_fn
