import numpy as np
import pytest

from csflab.analysis import (
    PeelRow,
    RatioCase,
    RatioReport,
    SpacetimeBlock,
    box_commutator_check,
    charge_jump_check,
    exact_zero_checks,
    fit_decay,
    kato_harness,
    lie_component_check,
    observed_order,
    peel_report,
    poincare_harness,
    sobolev_harness,
    theoretical_exponent,
)
from csflab.errors import (
    DomainError,
    ExponentOutOfRange,
    FieldNotConformalKilling,
    GridMismatch,
    InsufficientDecade,
    MissingTimeLevel,
    NoChargedData,
    NonPositiveSamples,
)
from csflab.evolve import init_state, run
from csflab.fields import GaugePotentialGrid, GaugeScalarGrid, GridSpec
from csflab.geometry import LorentzField, SampledTwoForm, SpacetimePoint
from csflab.schemas import RunConfig, WeightParams

WP = WeightParams()


def test_fit_decay_single_weight():
    tp = np.geomspace(2.0, 500.0, 40)
    fit = fit_decay(3.0 * tp**-2.5, tp)
    assert fit.p_plus == pytest.approx(-2.5)
    assert np.isnan(fit.p_minus)
    assert fit.residual < 1e-10


def test_fit_decay_two_weights():
    rng = np.random.default_rng(0)
    tp = np.exp(rng.uniform(0.0, 6.0, 60))
    tm = np.exp(rng.uniform(0.0, 5.0, 60))
    fit = fit_decay(tp**-1.0 * tm**-0.5, tp, tm)
    assert fit.p_plus == pytest.approx(-1.0)
    assert fit.p_minus == pytest.approx(-0.5)


def test_fit_decay_with_known_exponent():
    rng = np.random.default_rng(1)
    tp = np.exp(rng.uniform(0.0, 6.0, 30))
    tm = np.exp(rng.uniform(0.0, 5.0, 30))
    fit = fit_decay(tp**-1.75 * tm**-1.25, tp, tm, fixed_plus=-1.75)
    assert fit.p_plus == -1.75
    assert fit.p_minus == pytest.approx(-1.25)


def test_fit_decay_rejections():
    tp = np.geomspace(2.0, 500.0, 20)
    with pytest.raises(NonPositiveSamples):
        fit_decay(np.zeros(20), tp)
    with pytest.raises(InsufficientDecade):
        fit_decay(np.ones(5), tp[:5])
    with pytest.raises(InsufficientDecade):
        narrow = np.linspace(2.0, 5.0, 20)
        fit_decay(narrow**-2, narrow)
    with pytest.raises(DomainError):
        fit_decay(np.ones(20))


def test_theoretical_exponents():
    assert theoretical_exponent("DL_rphi", "cone", WP) == pytest.approx(-2.25)
    assert theoretical_exponent("phi", "slice", WP) == pytest.approx(-0.75)
    assert theoretical_exponent("rho_tilde", "worldline", WP) == pytest.approx(-2.25)
    with pytest.raises(DomainError):
        theoretical_exponent("phi", "nowhere", WP)


def test_peel_row_status():
    skipped = PeelRow("phi", "cone", -1.0)
    assert skipped.status == "skipped"
    assert skipped.passed
    assert np.isnan(skipped.fitted)
    tp = np.geomspace(2.0, 500.0, 20)
    slow = PeelRow("phi", "cone", -1.0, fit_decay(tp**-0.5, tp))
    assert slow.status == "violation"
    fast = PeelRow("phi", "cone", -1.0, fit_decay(tp**-1.5, tp))
    assert fast.status == "ok"


def test_peel_report_on_zero_data_skips_every_row():
    cfg = RunConfig(scheme="sph1d", recipe="zero", h=0.1, T=4.0, cadence=1.0, R_max=20.0)
    states = run(cfg).snapshots
    rows = peel_report(states, WP, q=0.0, offset=2.0, u_cone=-3.0, r_world=2.0, t_world_min=0.0)
    assert len(rows) == 12
    assert all(r.status == "skipped" for r in rows)


def test_spherical_data_has_no_alpha_or_sigma():
    cfg = RunConfig(scheme="sph1d", recipe="charged-gaussian", r0=3.0, width=1.0, h=0.1, T=1.0, R_max=20.0)
    checks = exact_zero_checks([init_state(cfg)])
    assert all(v < 1e-12 for v in checks.values())


def _coulomb_slices(q, times, r):
    return [(t, r, q / (4.0 * np.pi * r**2)) for t in times]


def test_charge_jump_on_pure_coulomb_field():
    r = np.linspace(0.5, 200.0, 4000)
    rep = charge_jump_check(_coulomb_slices(1.0, np.arange(0.0, 51.0), r), 1.0, margin=10.0, r_interior=2.0)
    assert rep.exterior_ok
    assert rep.exterior_error < 1e-12
    assert rep.tilde_ratio < 1e-12
    assert rep.interior_exponent == pytest.approx(0.0, abs=1e-6)
    assert rep.jump_ratio == pytest.approx(1.0 / 9.0, rel=1e-3)


def test_charge_jump_needs_charge():
    r = np.linspace(0.5, 10.0, 20)
    with pytest.raises(NoChargedData):
        charge_jump_check(_coulomb_slices(0.0, [0.0], r), 0.0)


@pytest.mark.parametrize("lam", [8.0, 32.0])
def test_poincare_ratio_of_gaussian(lam):
    grid = GridSpec.radial(240, lam / 40.0)
    phi = GaugeScalarGrid(grid, np.exp(-((grid.axis() / lam) ** 2)).astype(complex))
    rep = poincare_harness(phi, GaugePotentialGrid.zeros(grid), 0.0, 0.0)
    assert rep.max_ratio == pytest.approx(4.0 / (7.0 + 12.0 / lam**2), rel=1e-2)


@pytest.mark.parametrize("p, q, region", [(-1.0, 0.0, "full"), (0.0, 2.0, "full"), (0.0, -2.0, "exterior")])
def test_poincare_rejects_exponents(p, q, region):
    grid = GridSpec.radial(10, 0.1)
    phi = GaugeScalarGrid(grid, np.ones(10, dtype=complex))
    with pytest.raises(ExponentOutOfRange):
        poincare_harness(phi, GaugePotentialGrid.zeros(grid), p, q, region=region)


def test_kato_on_positive_real_field_is_sharp():
    grid = GridSpec.box(16, 0.2)
    X = grid.coords()
    phi = GaugeScalarGrid(grid, (1.0 + np.exp(-(X[0] ** 2 + X[1] ** 2 + X[2] ** 2))).astype(complex))
    rep = kato_harness(phi, GaugePotentialGrid.zeros(grid))
    assert rep.violations == 0
    assert len(rep.cases) == 3
    assert rep.max_ratio == pytest.approx(1.0)


def test_ratio_report_merge_and_skips():
    a = RatioReport("x", (RatioCase("a", 1.0, 2.0),), 1)
    b = RatioReport("x", (RatioCase("b", 0.0, 0.0, "skipped"),), 2)
    m = a.merged(b)
    assert m.violations == 3
    assert m.skipped == 1
    assert m.max_ratio == pytest.approx(0.5)


def test_spacetime_block_validation():
    g3 = GridSpec.box(10, 0.3)
    with pytest.raises(MissingTimeLevel):
        SpacetimeBlock(g3, 0.0, 0.1, np.zeros((3,) + g3.shape, dtype=complex), np.zeros((3, 4) + g3.shape))
    g1 = GridSpec.radial(10, 0.1)
    with pytest.raises(GridMismatch):
        SpacetimeBlock(g1, 0.0, 0.1, np.zeros((5, 10), dtype=complex), np.zeros((5, 2, 10)))
    with pytest.raises(MissingTimeLevel):
        SpacetimeBlock.from_states([])


def test_commutator_on_vacuum_block():
    g = GridSpec.box(10, 0.3)
    block = SpacetimeBlock.from_functions(
        g, 1.0, 0.05, lambda t, x: np.zeros(x.shape[:-1]), lambda t, x: np.zeros(x.shape[:-1] + (4,))
    )
    res = box_commutator_check(block, LorentzField.d(0))
    assert res.max == 0.0
    with pytest.raises(FieldNotConformalKilling):
        box_commutator_check(block, LorentzField.radial())


def test_observed_order():
    assert observed_order(4e-4, 1e-4) == pytest.approx(2.0)
    assert observed_order(1e-3, 0.0) == float("inf")
    assert observed_order(0.0, 0.0) == 0.0


def test_sobolev_harness_arguments():
    def f(t, x):
        return np.zeros(x.shape[:-1])

    with pytest.raises(DomainError):
        sobolev_harness("exterior", f, t=1.0)
    with pytest.raises(DomainError):
        sobolev_harness("sideways", f, t=1.0)


def test_lie_component_table_covers_listed_fields_only():
    F = SampledTwoForm(lambda t, x: np.zeros(np.shape(t) + (4, 4)))
    p = SpacetimePoint(np.array([1.0]), np.array([[2.0, 1.0, 0.5]]))
    with pytest.raises(DomainError):
        lie_component_check(F, LorentzField.d(0), p)


def _bump(s):
    inside = np.abs(s) < 1.0
    si = np.where(inside, s, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - si**2)), 0.0)


def test_interior_sobolev_ratio_follows_self_similar_data():
    def similar(t, x):
        return _bump(np.linalg.norm(x, axis=-1) / (0.6 * t))

    def fixed(t, x):
        return _bump(np.linalg.norm(x, axis=-1) / 2.0)

    same = [sobolev_harness("interior", similar, t=t).max_ratio for t in (3.0, 5.0)]
    assert same[0] > 0.0
    assert same[1] == pytest.approx(same[0], rel=1e-6)
    # 幅を固定すると boost 項が t とともに育ち比が変わる
    other = [sobolev_harness("interior", fixed, t=t).max_ratio for t in (3.0, 5.0)]
    assert abs(other[1] / other[0] - 1.0) > 1e-2
