"""csf verify が回す性質テスト群

各スイートは CheckResult を並べた SuiteResult を返すだけで、終了コードの判断は CLI 側。
乱数はすべて seed から作るので同じ seed なら同じ結果になる。
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from csflab.analysis import (
    RatioCase,
    RatioReport,
    SpacetimeBlock,
    box_commutator_check,
    kato_harness,
    lie_component_check,
    observed_order,
    poincare_harness,
    sobolev_harness,
)
from csflab.charge import charge_peeling_constants, weighted_elliptic_ratio
from csflab.energy import (
    conformal_divergence,
    conformal_factor,
    conformal_tensor,
    divergence_residual,
    em_tensor_F,
    em_tensor_phi,
)
from csflab.errors import DomainError
from csflab.evolve import BoxManufactured, run
from csflab.fields import GaugePotentialGrid, GaugeScalarGrid, GridSpec
from csflab.geometry import (
    ETA,
    LorentzField,
    SampledTwoForm,
    SpacetimePoint,
    TwoFormValue,
    algebra_basis,
    bracket,
    deformation_tensor,
    eps_rotate,
    frame_at,
    hodge_dual,
    lie_derivative_two_form,
    lie_field,
    metric,
    morawetz_factor,
    null_decompose,
    special_cancellation,
    tau_minus,
    tau_plus,
    vector_bracket,
    w_gamma,
)
from csflab.schemas import RunConfig

logger = logging.getLogger(__name__)

SUITES = ("geometry", "identities", "inequalities", "convergence")
INEQUALITIES = ("kato", "elliptic", "poincare", "sobolev-exterior", "sobolev-interior")

CLOSED_FORM_TOL = 1e-12
MIN_ORDER = 1.9
# これ未満の残差は丸め誤差だけとみなして次数を測らない
EXACT_FLOOR = 1e-11
ELLIPTIC_SPREAD = 0.10
POINCARE_SPREAD = 0.10
SOBOLEV_SPREAD = 0.20

T = TypeVar("T")
R = TypeVar("R")


# ==========================
# 結果
# ==========================
@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    limit: float
    passed: bool
    # "<=", ">=", "finite", "skip"
    kind: str = "<="
    note: str = ""

    @classmethod
    def at_most(cls, name: str, value: float, limit: float, note: str = "") -> "CheckResult":
        value = float(value)
        return cls(name, value, float(limit), bool(np.isfinite(value) and value <= limit), "<=", note)

    @classmethod
    def at_least(cls, name: str, value: float, limit: float, note: str = "") -> "CheckResult":
        value = float(value)
        return cls(name, value, float(limit), bool(not np.isnan(value) and value >= limit), ">=", note)

    @classmethod
    def finite(cls, name: str, value: float, note: str = "") -> "CheckResult":
        value = float(value)
        return cls(name, value, float("inf"), bool(np.isfinite(value)), "finite", note)

    @classmethod
    def skipped(cls, name: str, note: str) -> "CheckResult":
        return cls(name, float("nan"), float("nan"), True, "skip", note)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "value": float(self.value),
            "limit": float(self.limit),
            "kind": self.kind,
            "passed": bool(self.passed),
            "note": self.note,
        }


@dataclass
class SuiteResult:
    suite: str
    seed: int
    checks: List[CheckResult] = field(default_factory=list)
    reports: List[RatioReport] = field(default_factory=list)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        level = logging.INFO if check.passed else logging.WARNING
        logger.log(level, "%s/%s: %s %.6g (limit %.6g) %s", self.suite, check.name, check.kind, check.value, check.limit, check.note)
        return check

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def summary(self) -> Dict[str, Any]:
        """機械可読の要約（YAML にそのまま出す）"""
        return {
            "suite": self.suite,
            "seed": int(self.seed),
            "passed": self.passed,
            "checks": [c.as_dict() for c in self.checks],
        }


def _map(fn: Callable[[T], R], items: Iterable[T], threads: int) -> List[R]:
    """投入順に結果を返す"""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _order_check(name: str, err_coarse: float, err_fine: float, ratio: float) -> CheckResult:
    if max(err_coarse, err_fine) < EXACT_FLOOR:
        return CheckResult(name, float("inf"), MIN_ORDER, True, ">=", f"exact to roundoff (err={err_coarse:.3e})")
    order = observed_order(err_coarse, err_fine, ratio)
    return CheckResult.at_least(name, order, MIN_ORDER, f"err={err_coarse:.3e}/{err_fine:.3e}")


def _spread(values: Sequence[float]) -> float:
    v = np.asarray([x for x in values if x > 0], dtype=float)
    if len(v) < 2:
        return float("nan")
    return float(v.max() / v.min() - 1.0)


# ==========================
# geometry
# ==========================
def _random_two_forms(rng: np.random.Generator, n: int) -> TwoFormValue:
    return TwoFormValue(rng.normal(size=(n, 6)))


def _frame_defect(fr) -> float:
    vecs = {"L": fr.L, "Lbar": fr.Lbar, "e1": fr.e1, "e2": fr.e2}
    expect = {("L", "L"): 0.0, ("Lbar", "Lbar"): 0.0, ("L", "Lbar"): -2.0, ("e1", "e1"): 1.0, ("e2", "e2"): 1.0, ("e1", "e2"): 0.0}
    for a in ("L", "Lbar"):
        for b in ("e1", "e2"):
            expect[(a, b)] = 0.0
    return max(float(np.max(np.abs(metric(vecs[a], vecs[b]) - v))) for (a, b), v in expect.items())


def _omega_defect(p: SpacetimePoint, fr) -> float:
    w = p.omega
    wA = fr.omega_A
    ortho = np.einsum("...i,...ai->...a", w, wA)
    gram = np.einsum("...ai,...bi->...ab", wA, wA) - np.eye(2)
    return max(float(np.max(np.abs(ortho))), float(np.max(np.abs(gram))))


def _duality_defect(F: TwoFormValue, fr) -> Tuple[float, float]:
    c = null_decompose(F, fr)
    d = null_decompose(hodge_dual(F), fr)
    table = max(
        float(np.max(np.abs(d.alpha + eps_rotate(c.alpha)))),
        float(np.max(np.abs(d.alphabar - eps_rotate(c.alphabar)))),
        float(np.max(np.abs(d.rho - c.sigma))),
        float(np.max(np.abs(d.sigma + c.rho))),
    )
    double = float(np.max(np.abs(hodge_dual(hodge_dual(F)).comps + F.comps)))
    return table, double


def _energy_density_defect(F: TwoFormValue, Dphi: np.ndarray, fr) -> float:
    c = null_decompose(F, fr)
    Q = em_tensor_F(F)
    scale = 1.0 + np.sum(F.comps**2, axis=-1)
    errs = [
        np.abs(Q.contract(fr.L, fr.L) - np.sum(c.alpha**2, axis=-1)),
        np.abs(Q.contract(fr.Lbar, fr.Lbar) - np.sum(c.alphabar**2, axis=-1)),
        np.abs(Q.contract(fr.Lbar, fr.L) - (c.rho**2 + c.sigma**2)),
    ]
    P = em_tensor_phi(Dphi)
    D = lambda X: np.einsum("...a,...a->...", X, Dphi)  # noqa: E731
    slash = np.abs(D(fr.e1)) ** 2 + np.abs(D(fr.e2)) ** 2
    scale_phi = 1.0 + np.sum(np.abs(Dphi) ** 2, axis=-1)
    errs_phi = [
        np.abs(P.contract(fr.L, fr.L) - np.abs(D(fr.L)) ** 2),
        np.abs(P.contract(fr.Lbar, fr.Lbar) - np.abs(D(fr.Lbar)) ** 2),
        np.abs(P.contract(fr.Lbar, fr.L) - slash),
    ]
    return max(max(float(np.max(e / scale)) for e in errs), max(float(np.max(e / scale_phi)) for e in errs_phi))


def _bracket_defect(p: SpacetimePoint) -> float:
    basis = algebra_basis()
    scale = 1.0 + float(np.max(np.abs(p.coords())))
    worst = 0.0
    for X in basis:
        for Y in basis:
            exact = bracket(X, Y).at(p)
            flow = vector_bracket(X.at, Y.at, p)
            worst = max(worst, float(np.max(np.abs(exact - flow))) / scale)
    return worst


def _deformation_defect(p: SpacetimePoint) -> float:
    worst = 0.0
    for X in algebra_basis():
        pi = deformation_tensor(X, p)
        expect = 2.0 * ETA if X.tag == "S" else np.zeros(4)
        worst = max(worst, float(np.max(np.abs(pi - expect))))
    pi = deformation_tensor(LorentzField.morawetz(), p)
    expect = 4.0 * np.asarray(p.t)[..., None, None] * ETA
    worst = max(worst, float(np.max(np.abs(pi - expect) / (1.0 + np.abs(expect)))))
    return worst


def _morawetz_checks(rng: np.random.Generator, n: int) -> Tuple[float, float, float]:
    s = rng.uniform(0.5, 1.0, n)
    t = rng.uniform(0.0, 50.0, n)
    r = 100.0 * (1.0 - rng.random(n))
    # (v̄ − v)/r の打ち消しで残る丸め誤差の大きさ
    scale = 1.0 + (t + r) ** (2.0 * s) / r
    f = np.array([morawetz_factor(si, ti, ri) for si, ti, ri in zip(s, t, r)])
    negative = float(max(0.0, -np.min(f / scale)))
    at_one = float(np.max(np.abs(morawetz_factor(1.0, t, r)) / (1.0 + (t + r) ** 2 / r)))
    points = max(
        abs(float(morawetz_factor(0.75, 1.0, 1.0)) - 2.0**1.5 / 4.0),
        float(np.max(np.abs(morawetz_factor(0.5, 0.0, r) / (1.0 + 1.0 / r)))),
    )
    return negative, at_one, points


def _weight_points() -> float:
    return max(
        abs(float(w_gamma(0.0, 3.0, 0.5)) - np.sqrt(10.0)),
        abs(float(w_gamma(5.0, 1.0, 0.5)) - 1.0),
        abs(float(tau_plus(0.0, 0.0)) - 1.0),
        abs(float(tau_minus(0.0, 0.0)) - 1.0),
    )


def _exterior_points(rng: np.random.Generator, n: int, *, t_max: float = 50.0, r_max: float = 100.0, gap: float = 0.0) -> SpacetimePoint:
    """t < 2r（gap > 0 なら r >= t + gap）の点"""
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r = rng.uniform(1.0, r_max, n)
    if gap > 0:
        t = rng.uniform(0.0, 1.0, n) * np.clip(r - gap, 0.0, t_max)
    else:
        t = rng.uniform(0.0, 1.0, n) * np.minimum(t_max, 1.98 * r)
    return SpacetimePoint(t, r[:, None] * d)


def geometry_suite(*, seed: int = 0, n_points: int = 100_000, n_samples: int = 10_000, threads: int = 1) -> SuiteResult:
    rng = np.random.default_rng(seed)
    res = SuiteResult("geometry", seed)

    p = SpacetimePoint.random(n_points, rng)
    fr = frame_at(p)
    res.add(CheckResult.at_most("frame-orthonormality", _frame_defect(fr), CLOSED_FORM_TOL))
    res.add(CheckResult.at_most("omega-relations", _omega_defect(p, fr), CLOSED_FORM_TOL))

    F = _random_two_forms(rng, n_points)
    table, double = _duality_defect(F, fr)
    res.add(CheckResult.at_most("duality-table", table, CLOSED_FORM_TOL))
    res.add(CheckResult.at_most("double-dual", double, CLOSED_FORM_TOL))
    Dphi = rng.normal(size=(n_points, 4)) + 1j * rng.normal(size=(n_points, 4))
    res.add(CheckResult.at_most("energy-densities", _energy_density_defect(F, Dphi, fr), CLOSED_FORM_TOL))

    # 流れの差分で作る括弧は h = 1e-5 の丸め誤差を含む
    small = SpacetimePoint.random(200, rng, t_max=10.0, r_max=10.0)
    res.add(CheckResult.at_most("bracket-table", _bracket_defect(small), 1e-6))
    res.add(CheckResult.at_most("deformation-table", _deformation_defect(small), 1e-10))

    negative, at_one, points = _morawetz_checks(rng, n_samples)
    res.add(CheckResult.at_most("morawetz-positivity", negative, CLOSED_FORM_TOL))
    res.add(CheckResult.at_most("morawetz-s1-zero", at_one, CLOSED_FORM_TOL))
    res.add(CheckResult.at_most("morawetz-points", points, CLOSED_FORM_TOL))
    res.add(CheckResult.at_most("weight-points", _weight_points(), CLOSED_FORM_TOL))

    ext = _exterior_points(rng, n_samples)
    tau0 = tau_minus(ext.t, ext.r) / tau_plus(ext.t, ext.r)
    fields = list(algebra_basis())
    values = _map(lambda X: special_cancellation(X, ext), fields, threads)
    rot = max(float(np.max(v)) for X, v in zip(fields, values) if X.tag == "rot")
    res.add(CheckResult.at_most("special-cancellation-rotations", rot, 1e-10))
    consts = {X.name: float(np.max(v / tau0)) for X, v in zip(fields, values)}
    worst = max(consts, key=consts.get)
    res.add(CheckResult.finite("special-cancellation-constant", consts[worst], f"largest for {worst}"))

    far = _exterior_points(rng, n_samples, gap=1.0)
    peel = charge_peeling_constants(1.0, fields, far)
    c_alpha = max(v["alpha"] for v in peel.values())
    c_other = max(v["other"] for v in peel.values())
    res.add(CheckResult.finite("charge-peeling-alpha", c_alpha))
    res.add(CheckResult.finite("charge-peeling-other", c_other))
    return res


# ==========================
# identities
# ==========================
@dataclass(frozen=True)
class AnalyticFields:
    """ModeSum で与えた (φ, A_μ) を時空の点でそのまま評価する"""

    source: BoxManufactured

    @staticmethod
    def _args(p: SpacetimePoint):
        shape = p.x.shape[:-1]
        t = np.broadcast_to(p.t, shape)
        return t, (p.x[..., 0], p.x[..., 1], p.x[..., 2])

    def phi(self, p: SpacetimePoint) -> np.ndarray:
        t, X = self._args(p)
        return self.source.phi.value(t, X)

    def dphi(self, p: SpacetimePoint) -> np.ndarray:
        t, X = self._args(p)
        return np.stack([self.source.phi.d(mu, t, X) for mu in range(4)], axis=-1)

    def A(self, p: SpacetimePoint) -> np.ndarray:
        t, X = self._args(p)
        return np.stack([a.value(t, X) for a in self.source.A], axis=-1)

    def dA(self, p: SpacetimePoint) -> np.ndarray:
        """[..., μ, ν] = ∂_μ A_ν"""
        t, X = self._args(p)
        return np.stack([np.stack([a.d(mu, t, X) for a in self.source.A], axis=-1) for mu in range(4)], axis=-2)

    def Dphi(self, p: SpacetimePoint) -> np.ndarray:
        return self.dphi(p) + 1j * self.A(p) * self.phi(p)[..., None]

    def F(self, p: SpacetimePoint) -> np.ndarray:
        dA = self.dA(p)
        return dA - np.swapaxes(dA, -1, -2)

    def box(self, p: SpacetimePoint) -> np.ndarray:
        """□^ℂφ = η^{αα} D_α D_α φ"""
        t, X = self._args(p)
        phi, A, dphi, dA = self.phi(p), self.A(p), self.dphi(p), self.dA(p)
        out = 0.0
        for a in range(4):
            dd = self.source.phi.dd(a, a, t, X)
            out = out + ETA[a, a] * (dd + 1j * dA[..., a, a] * phi + 2j * A[..., a] * dphi[..., a] - A[..., a] ** 2 * phi)
        return out

    def current(self, p: SpacetimePoint) -> np.ndarray:
        """J^γ（上付き）"""
        J = np.imag(self.phi(p)[..., None] * np.conj(self.Dphi(p)))
        return J * np.diag(ETA)

    def maxwell(self, p: SpacetimePoint) -> np.ndarray:
        """∇_α F^{αγ}"""
        t, X = self._args(p)
        out = []
        for g in range(4):
            s = 0.0
            for a in range(4):
                s = s + ETA[a, a] * (self.source.A[g].dd(a, a, t, X) - self.source.A[a].dd(a, g, t, X))
            out.append(ETA[g, g] * s)
        return np.stack(out, axis=-1)

    def sampled_two_form(self) -> SampledTwoForm:
        return SampledTwoForm(lambda t, x: self.F(SpacetimePoint(t, x)))


def _manufactured_fields() -> AnalyticFields:
    return AnalyticFields(BoxManufactured.default(2.0 * np.pi, 0.5))


def _box_points(rng: np.random.Generator, n: int, *, r_lo: float, r_hi: float, t_hi: float = 1.0, polar_cap: float = 1.0) -> SpacetimePoint:
    cos_t = rng.uniform(-polar_cap, polar_cap, n)
    ph = rng.uniform(0.0, 2.0 * np.pi, n)
    st = np.sqrt(1.0 - cos_t**2)
    d = np.stack([st * np.cos(ph), st * np.sin(ph), cos_t], axis=-1)
    r = rng.uniform(r_lo, r_hi, n)
    return SpacetimePoint(rng.uniform(0.0, t_hi, n), r[:, None] * d)


def total_conservation_error(fields: AnalyticFields, points: SpacetimePoint, h: float) -> float:
    """∇^α(Q[φ] + Q[F])_{αβ} と Re(□φ conj D_βφ) + F_{βγ}(J^γ + ∇_αF^{αγ}) の差"""

    def tensor(p: SpacetimePoint) -> np.ndarray:
        return em_tensor_phi(fields.Dphi(p)).Q + em_tensor_F(TwoFormValue.from_matrix(fields.F(p))).Q

    def rhs(p: SpacetimePoint) -> np.ndarray:
        F = fields.F(p)
        src = np.real(fields.box(p)[..., None] * np.conj(fields.Dphi(p)))
        return src + np.einsum("...bg,...g->...b", F, fields.current(p) + fields.maxwell(p))

    return divergence_residual(tensor, points, h, rhs).max


def conformal_divergence_error(kind: str, fields: AnalyticFields, points: SpacetimePoint, h: float) -> float:
    """∇̃^α Q̃_{αβ} = Ω⁴(Re(□φ conj(D_βφ + φ ∂_βΩ/Ω)) + F_{βγ}J^γ)"""

    def tensor(p: SpacetimePoint) -> np.ndarray:
        return conformal_tensor(kind, fields.phi(p), fields.Dphi(p), p).Q

    got = conformal_divergence(kind, tensor, points, h)
    Om, dO = conformal_factor(kind, points)
    phi = fields.phi(points)
    shifted = fields.Dphi(points) + phi[..., None] * dO / Om[..., None]
    expect = np.real(fields.box(points)[..., None] * np.conj(shifted))
    expect = expect + np.einsum("...bg,...g->...b", fields.F(points), fields.current(points))
    return float(np.max(np.abs(got - Om[..., None] ** 4 * expect)))


LIE_PAIRS = (
    (LorentzField.scaling(), LorentzField.rotation(1, 2)),
    (LorentzField.boost(1), LorentzField.rotation(1, 2)),
    (LorentzField.d(0), LorentzField.boost(1)),
    (LorentzField.d(1), LorentzField.scaling()),
    (LorentzField.boost(1), LorentzField.boost(2)),
)


def lie_commutator_error(F: SampledTwoForm, points: SpacetimePoint, h: float) -> float:
    """(𝓛_X 𝓛_Y − 𝓛_Y 𝓛_X)F − 𝓛_{[X,Y]}F"""
    worst = 0.0
    for X, Y in LIE_PAIRS:
        xy = lie_derivative_two_form(lie_field(F, Y, h), X, points, h).matrix()
        yx = lie_derivative_two_form(lie_field(F, X, h), Y, points, h).matrix()
        rhs = np.zeros_like(xy)
        for Z, c in bracket(X, Y).terms.items():
            rhs = rhs + c * lie_derivative_two_form(F, Z, points, h).matrix()
        worst = max(worst, float(np.max(np.abs(xy - yx - rhs))))
    return worst


COMMUTATOR_BOX = 1.2
COMMUTATOR_REGION = 0.3


def commutator_block(fields: AnalyticFields, h: float, t_mid: float = 1.0) -> SpacetimeBlock:
    n = int(round(COMMUTATOR_BOX / h))
    grid = GridSpec.box(n, h)

    def phi_fn(t, x):
        return fields.phi(SpacetimePoint(np.full(x.shape[:-1], t), x))

    def A_fn(t, x):
        return fields.A(SpacetimePoint(np.full(x.shape[:-1], t), x))

    return SpacetimeBlock.from_functions(grid, t_mid, h, phi_fn, A_fn)


def identities_suite(*, seed: int = 0, h: float = 0.05, h2: Optional[float] = None, n_points: int = 200, threads: int = 1) -> SuiteResult:
    h2 = 0.5 * h if h2 is None else h2
    if not 0.0 < h2 < h:
        raise DomainError("refinement pair needs 0 < h2 < h", h=h, h2=h2)
    ratio = h / h2
    rng = np.random.default_rng(seed)
    res = SuiteResult("identities", seed)
    fields = _manufactured_fields()
    F = fields.sampled_two_form()

    bulk = _box_points(rng, n_points, r_lo=0.5, r_hi=2.0)
    shell = _box_points(rng, n_points, r_lo=2.0, r_hi=3.0)
    charted = _box_points(rng, n_points, r_lo=1.5, r_hi=3.0, polar_cap=0.8)

    jobs: List[Tuple[str, Callable[[float], float]]] = [
        ("total-conservation", lambda s: total_conservation_error(fields, bulk, s)),
        ("conformal-divergence-I", lambda s: conformal_divergence_error("I", fields, shell, s)),
        ("conformal-divergence-II", lambda s: conformal_divergence_error("II", fields, shell, s)),
        ("lie-commutator", lambda s: lie_commutator_error(F, bulk, s)),
    ]
    for X in (LorentzField.radial(), LorentzField.rotation(1, 2), LorentzField.scaling(), LorentzField.radial_boost()):
        jobs.append((f"lie-table-{X.name}", lambda s, X=X: lie_component_check(F, X, charted, h=s).max))
    for X in (LorentzField.d(0), LorentzField.scaling()):
        jobs.append(
            (f"box-commutator-{X.name}", lambda s, X=X: box_commutator_check(commutator_block(fields, s), X, region=COMMUTATOR_REGION).max)
        )

    pairs = [(name, fn, s) for name, fn in jobs for s in (h, h2)]
    errs = _map(lambda job: job[1](job[2]), pairs, threads)
    for k, (name, _) in enumerate(jobs):
        res.add(_order_check(name, errs[2 * k], errs[2 * k + 1], ratio))
    return res


# ==========================
# inequalities
# ==========================
def _smooth_gauge_pair(grid: GridSpec, rng: np.random.Generator) -> Tuple[GaugeScalarGrid, GaugePotentialGrid]:
    """φ = g e^{iθ}（g >= 1/2）と滑らかな A。|φ| が零点を持たないので |φ| も滑らか"""
    X = grid.coords()
    L = grid.n * grid.h

    def waves(count: int, amp: float) -> np.ndarray:
        out = np.zeros(grid.shape)
        for _ in range(count):
            k = rng.integers(-2, 3, size=3) * (2.0 * np.pi / L)
            out = out + amp * rng.normal() * np.sin(k[0] * X[0] + k[1] * X[1] + k[2] * X[2] + rng.uniform(0, 2 * np.pi))
        return out

    g = 0.5 + np.zeros(grid.shape)
    for _ in range(3):
        c = rng.uniform(-0.5 * L / 2, 0.5 * L / 2, size=3)
        w = rng.uniform(0.4, 0.8)
        g = g + rng.uniform(0.2, 1.0) * np.exp(-((X[0] - c[0]) ** 2 + (X[1] - c[1]) ** 2 + (X[2] - c[2]) ** 2) / w**2)
    theta = waves(3, 1.0)
    phi = g * np.exp(1j * theta)
    phi_t = (waves(2, 0.3) + 1j * waves(2, 0.3)) * np.exp(1j * theta)
    A = np.stack([waves(2, 0.5) for _ in range(4)])
    return GaugeScalarGrid(grid, phi, phi_t), GaugePotentialGrid(grid, A)


def _kato_cases(rng: np.random.Generator, threads: int) -> RatioReport:
    grid = GridSpec.box(32, 0.1)
    seeds = rng.integers(0, 2**31, size=3)

    def one(k: int) -> RatioReport:
        phi, A = _smooth_gauge_pair(grid, np.random.default_rng(seeds[k]))
        return kato_harness(phi, A, label=f"case{k}:")

    reports = _map(one, range(len(seeds)), threads)
    out = reports[0]
    for r in reports[1:]:
        out = out.merged(r)
    return out


ELLIPTIC_SCALES = (1.0, 2.0, 4.0, 8.0)


def _elliptic_cases(delta: float = 1.0) -> RatioReport:
    cases = []
    for lam in ELLIPTIC_SCALES:
        grid = GridSpec.radial(400, 0.05 * lam)
        y = grid.axis() / lam
        src = np.exp(-(y**2)) * (1.0 - 0.5 * y**2)
        er = weighted_elliptic_ratio(src, grid, delta)
        cases.append(RatioReport("elliptic", (_ratio_case(f"lambda={lam:g}", er.lhs, er.rhs),)))
    return _join("elliptic", cases)


POINCARE_SCALES = (8.0, 16.0, 32.0)


def _poincare_cases() -> Tuple[RatioReport, RatioReport]:
    """(全空間, 外部/内部)。全空間の比だけがスケール安定性の判定に使われる"""
    full, regions = [], []
    for lam in POINCARE_SCALES:
        grid = GridSpec.radial(240, lam / 40.0)
        phi = GaugeScalarGrid(grid, np.exp(-((grid.axis() / lam) ** 2)).astype(complex))
        A = GaugePotentialGrid.zeros(grid)
        full.append(poincare_harness(phi, A, 0.0, 0.0, label=f"lambda={lam:g}"))
        regions.append(poincare_harness(phi, A, 0.0, 0.0, region="exterior", R=lam, label=f"exterior,lambda={lam:g}"))
        regions.append(poincare_harness(phi, A, 0.0, 0.0, region="interior", R=lam, label=f"interior,lambda={lam:g}"))
    return _join("poincare", full), _join("poincare-regions", regions)


def _bump(s: np.ndarray) -> np.ndarray:
    inside = np.abs(s) < 1.0
    si = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - si**2)), 0.0)


SOBOLEV_SHELLS = (10.0, 20.0)
SOBOLEV_TIMES = (3.0, 5.0, 8.0)


def _shell_bump(R: float) -> Callable[[float, np.ndarray], np.ndarray]:
    def f(t, x):
        r = np.linalg.norm(x, axis=-1)
        return _bump((r - 1.5 * R) / (0.4 * R)) * (1.0 + 0.3 * x[..., 0] / r)

    return f


def _interior_bump(t: float, x: np.ndarray) -> np.ndarray:
    return _bump(np.linalg.norm(x, axis=-1) / (0.6 * t))


def _sobolev_exterior_cases() -> RatioReport:
    reps = [sobolev_harness("exterior", _shell_bump(R), t=1.0, shell=(R, 2.0 * R), label=f"R={R:g}:") for R in SOBOLEV_SHELLS]
    return _join("sobolev-exterior", reps)


def _sobolev_interior_cases() -> RatioReport:
    reps = [sobolev_harness("interior", _interior_bump, t=t, label=f"t={t:g}:") for t in SOBOLEV_TIMES]
    return _join("sobolev-interior", reps)


def _ratio_case(label: str, lhs: float, rhs: float) -> RatioCase:
    if lhs == 0.0 and rhs == 0.0:
        return RatioCase(label, 0.0, 0.0, "skipped")
    return RatioCase(label, lhs, rhs)


def _join(name: str, reports: Sequence[RatioReport]) -> RatioReport:
    cases = tuple(c for r in reports for c in r.cases)
    return RatioReport(name, cases, sum(r.violations for r in reports))


def _by_suffix(report: RatioReport, suffix: str) -> List[float]:
    return [c.ratio for c in report.cases if c.status == "ok" and c.label.endswith(suffix)]


def inequalities_suite(*, seed: int = 0, cases: Optional[Sequence[str]] = None, threads: int = 1) -> SuiteResult:
    res = SuiteResult("inequalities", seed)
    wanted = list(INEQUALITIES) if cases is None else [c.strip() for c in cases if c.strip()]
    unknown = sorted(set(wanted) - set(INEQUALITIES))
    if unknown:
        raise DomainError("unknown inequality cases", cases=unknown, choices=INEQUALITIES)
    if not wanted:
        res.add(CheckResult.skipped("inequalities", "empty case list"))
        return res
    rng = np.random.default_rng(seed)

    if "kato" in wanted:
        rep = _kato_cases(rng, threads)
        res.reports.append(rep)
        res.add(CheckResult.at_most("kato-violations", rep.violations, 0, f"{len(rep.cases)} directions"))
    if "elliptic" in wanted:
        rep = _elliptic_cases()
        res.reports.append(rep)
        res.add(CheckResult.finite("elliptic-max-ratio", rep.max_ratio))
        res.add(CheckResult.at_most("elliptic-scale-spread", _spread([c.ratio for c in rep.cases]), ELLIPTIC_SPREAD))
    if "poincare" in wanted:
        full, regions = _poincare_cases()
        res.reports.extend([full, regions])
        res.add(CheckResult.finite("poincare-max-ratio", max(full.max_ratio, regions.max_ratio)))
        res.add(CheckResult.at_most("poincare-scale-spread", _spread([c.ratio for c in full.cases]), POINCARE_SPREAD))
    if "sobolev-exterior" in wanted:
        rep = _sobolev_exterior_cases()
        res.reports.append(rep)
        res.add(CheckResult.finite("sobolev-exterior-max-ratio", rep.max_ratio))
        for form in ("ext1", "ext2"):
            res.add(CheckResult.at_most(f"sobolev-{form}-shell-spread", _spread(_by_suffix(rep, form)), SOBOLEV_SPREAD))
    if "sobolev-interior" in wanted:
        rep = _sobolev_interior_cases()
        res.reports.append(rep)
        res.add(CheckResult.finite("sobolev-interior-max-ratio", rep.max_ratio))
        res.add(CheckResult.at_most("sobolev-interior-time-spread", _spread(_by_suffix(rep, "int")), SOBOLEV_SPREAD))
    return res


# ==========================
# convergence
# ==========================
BOX_SIDES = (32, 64)
CHARGE_DRIFT_MAX = 1e-6


def sph1d_manufactured_error(h: float, T_end: float = 2.0) -> float:
    cfg = RunConfig(scheme="sph1d", recipe="manufactured", h=h, T=T_end, cadence=T_end, R_max=8.0, amplitude=0.5, cfl=0.5)
    last = run(cfg).snapshots[-1]
    exact = last.forcing.psi(last.t, last.r)
    return float(np.max(np.abs(last.psi - exact)))


def box3d_manufactured_error(n: int, T_end: float = 2.0) -> float:
    h = 2.0 * np.pi / n
    cfg = RunConfig(scheme="box3d", recipe="manufactured", n=n, h=h, T=T_end, cadence=T_end, amplitude=0.5, cfl=0.5, sponge=0.0)
    last = run(cfg).snapshots[-1]
    phi, _, _, _ = last.forcing.exact(last.t, last.grid.coords())
    return float(np.max(np.abs(last.phi - phi)))


def charge_drift(h: float, T_end: float = 10.0) -> float:
    cfg = RunConfig(
        scheme="sph1d", recipe="charged-gaussian", h=h, T=T_end, cadence=T_end, R_max=40.0, r0=10.0, width=2.0, amplitude=0.05
    )
    return run(cfg).charge_drift


def drift_checks(drift_coarse: float, drift_fine: float, h: float) -> List[CheckResult]:
    """粗い刻み 2h と h の電荷ドリフト。上限と細分化での次数の両方を見る"""
    note = f"h={2 * h:g}: {drift_coarse:.3e}, h={h:g}: {drift_fine:.3e}"
    return [
        CheckResult.at_most("charge-drift", max(drift_coarse, drift_fine), CHARGE_DRIFT_MAX, note),
        _order_check("charge-drift-order", drift_coarse, drift_fine, 2.0),
    ]


def convergence_suite(*, seed: int = 0, h: float = 0.05, h2: Optional[float] = None, threads: int = 1) -> SuiteResult:
    h2 = 0.5 * h if h2 is None else h2
    if not 0.0 < h2 < h:
        raise DomainError("refinement pair needs 0 < h2 < h", h=h, h2=h2)
    res = SuiteResult("convergence", seed)

    jobs: List[Callable[[], float]] = [
        lambda: sph1d_manufactured_error(h),
        lambda: sph1d_manufactured_error(h2),
        lambda: box3d_manufactured_error(BOX_SIDES[0]),
        lambda: box3d_manufactured_error(BOX_SIDES[1]),
        lambda: charge_drift(2.0 * h),
        lambda: charge_drift(h),
    ]
    e = _map(lambda fn: fn(), jobs, threads)
    res.add(_order_check("sph1d-manufactured", e[0], e[1], h / h2))
    res.add(_order_check("box3d-manufactured", e[2], e[3], BOX_SIDES[1] / BOX_SIDES[0]))
    for check in drift_checks(e[4], e[5], h):
        res.add(check)
    return res


def run_suite(name: str, *, seed: int = 0, h: float = 0.05, h2: Optional[float] = None, threads: int = 1, cases: Optional[Sequence[str]] = None) -> SuiteResult:
    logger.info("suite %s: seed=%d h=%g h2=%s threads=%d", name, seed, h, h2, threads)
    if name == "geometry":
        return geometry_suite(seed=seed, threads=threads)
    if name == "identities":
        return identities_suite(seed=seed, h=h, h2=h2, threads=threads)
    if name == "inequalities":
        return inequalities_suite(seed=seed, cases=cases, threads=threads)
    if name == "convergence":
        return convergence_suite(seed=seed, h=h, h2=h2, threads=threads)
    raise DomainError(f"unknown suite {name!r}", choices=SUITES)
