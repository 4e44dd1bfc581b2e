import numpy as np
import pytest

from csflab.charge import add_charge
from csflab.energy import (
    EstimateAudit,
    SliceProfile,
    box_energy,
    charge_current_profiles,
    conformal_factor,
    conformal_tensor,
    current_norm,
    divergence_residual,
    em_tensor_F,
    em_tensor_phi,
    energy_breakdown_F,
    energy_breakdown_phi,
    field_linf_norm,
    field_profile,
    fixed_time_convergent,
    kbar0s,
    momentum_density,
    morawetz_bulk,
    scalar_profile,
    w_tilde,
    w_tilde_minus_half_L,
    w_tilde_minus_half_Lbar,
    w_tilde_s,
)
from csflab.errors import SingularSet, WindowNotCovered
from csflab.fields import CurvatureGrid, GaugePotentialGrid, GaugeScalarGrid, GridSpec
from csflab.geometry import LorentzField, SpacetimePoint, TwoFormValue
from csflab.schemas import WeightParams

WP = WeightParams()


def _forms(n=100, seed=5):
    return TwoFormValue(np.random.default_rng(seed).normal(size=(n, 6)))


def _slice(t, r, dv, **comps):
    base = {k: np.zeros_like(r) for k in ("alpha", "alphabar", "rho", "sigma")}
    base.update(comps)
    return SliceProfile(t, r, dv, base)


def test_maxwell_tensor_is_traceless():
    Q = em_tensor_F(_forms())
    assert np.allclose(Q.trace(), 0.0, atol=1e-12)


def test_maxwell_energy_density():
    E = np.array([0.3, -1.0, 0.2])
    H = np.array([0.5, 0.4, -2.0])
    Q = em_tensor_F(TwoFormValue.from_eh(E, H))
    T = np.array([1.0, 0.0, 0.0, 0.0])
    assert Q.contract(T, T) == pytest.approx(0.5 * (E @ E + H @ H))


def test_scalar_tensor_energy_density():
    Dphi = np.array([1.0 + 0.5j, 0.2j, -0.3, 0.1 + 0.1j])
    T = np.array([1.0, 0.0, 0.0, 0.0])
    Q = em_tensor_phi(Dphi)
    assert Q.contract(T, T) == pytest.approx(0.5 * np.sum(np.abs(Dphi) ** 2))


def test_morawetz_bulk_vanishes_for_maxwell_at_s_one():
    p = SpacetimePoint.random(50, np.random.default_rng(6), t_max=10.0, r_max=20.0)
    bulk = morawetz_bulk(em_tensor_F(_forms(50)), 1.0, p)
    assert np.allclose(bulk, 0.0, atol=1e-6)


def test_kbar0s_contains_time_translation():
    comb = kbar0s(0.75)
    assert LorentzField.time() in comb.terms
    assert LorentzField.fractional_morawetz(0.75) in comb.terms


def test_conformal_factor_singular_sets():
    with pytest.raises(SingularSet):
        conformal_factor("I", SpacetimePoint(1.0, np.zeros(3)))
    with pytest.raises(SingularSet):
        conformal_factor("II", SpacetimePoint(2.0, np.array([2.0, 0.0, 0.0])))
    with pytest.raises(ValueError):
        conformal_factor("III", SpacetimePoint(2.0, np.array([1.0, 0.0, 0.0])))


def test_w_tilde_derivatives_are_nonnegative():
    t, r = np.meshgrid(np.linspace(0.0, 30.0, 61), np.linspace(0.1, 40.0, 81))
    assert np.all(w_tilde_minus_half_L(t, r, 0.5, 0.05) >= 0.0)
    assert np.all(w_tilde_minus_half_Lbar(t, r, 0.5, 0.05) >= 0.0)


def test_w_tilde_derivatives_match_finite_differences():
    u, ub, h = -5.0, 20.0, 1e-5

    def w(u_, ub_):
        return float(w_tilde(0.5 * (u_ + ub_), 0.5 * (ub_ - u_), 0.5, 0.05))

    t, r = 0.5 * (u + ub), 0.5 * (ub - u)
    d_u = -(w(u + h, ub) - w(u - h, ub)) / (2 * h)
    d_ub = -(w(u, ub + h) - w(u, ub - h)) / (2 * h)
    assert float(w_tilde_minus_half_Lbar(t, r, 0.5, 0.05)) == pytest.approx(d_u, rel=1e-6)
    assert float(w_tilde_minus_half_L(t, r, 0.5, 0.05)) == pytest.approx(d_ub, rel=1e-6)


def test_fixed_time_energy_of_single_shell():
    g = GridSpec.radial(100, 0.1)
    r, dv = g.axis(), g.cell_volume()
    k = 50
    alpha = np.zeros_like(r)
    alpha[k] = 1.0
    br = energy_breakdown_F([_slice(0.0, r, dv, alpha=alpha)], WP, (0.0, 0.0))
    expect = (1 + r[k] ** 2) ** (WP.s + WP.gamma) * dv[k]
    assert br.fixed_time["alpha"] == pytest.approx(expect, rel=1e-12)
    assert br.fixed_time_total == pytest.approx(expect, rel=1e-12)
    assert br.cone_total == 0.0
    assert br.spacetime_total == 0.0
    assert br.charge_term == 0.0


def test_charge_term_enters_total():
    g = GridSpec.radial(10, 0.1)
    br = energy_breakdown_F([_slice(0.0, g.axis(), g.cell_volume())], WP, (0.0, 0.0), q=0.3)
    assert br.total == pytest.approx(0.09)
    assert br.rows()[0] == ("charge", "q", "none", pytest.approx(0.09))


def test_cone_and_spacetime_pieces_over_several_slices():
    g = GridSpec.radial(100, 0.1)
    r, dv = g.axis(), g.cell_volume()
    slices = [_slice(t, r, dv, rho=np.exp(-((r - 3.0 - t) ** 2))) for t in (0.0, 0.5, 1.0, 1.5, 2.0)]
    br = energy_breakdown_F(slices, WP, (0.0, 2.0))
    assert br.slice_dt == pytest.approx(0.5)
    assert br.cone["rho"] > 0.0
    assert br.spacetime["rho"] > 0.0
    assert len(br.series) == 5


def test_window_must_be_covered():
    g = GridSpec.radial(10, 0.1)
    sl = _slice(0.0, g.axis(), g.cell_volume())
    with pytest.raises(WindowNotCovered):
        energy_breakdown_F([sl], WP, (0.0, 1.0))
    with pytest.raises(WindowNotCovered):
        energy_breakdown_F([], WP, (0.0, 0.0))
    uneven = [_slice(t, g.axis(), g.cell_volume()) for t in (0.0, 0.5, 1.5)]
    with pytest.raises(WindowNotCovered):
        energy_breakdown_F(uneven, WP, (0.0, 1.5))


@pytest.mark.parametrize(
    "lhs, rhs, ratio",
    [(2.0, 1.0, 2.0), (1.0, 0.0, float("inf")), (0.0, 0.0, 0.0)],
)
def test_estimate_audit_ratio(lhs, rhs, ratio):
    assert EstimateAudit("x", lhs, rhs).ratio == ratio


def test_fixed_time_convergence_of_static_tails():
    assert not fixed_time_convergent(2.0, 0.75, 0.5)
    assert fixed_time_convergent(3.0, 0.75, 0.5)


def test_linf_norm_of_zero_field_is_charge_squared():
    g = GridSpec.radial(10, 0.1)
    assert field_linf_norm([_slice(0.0, g.axis(), g.cell_volume())], WP, 0.4) == pytest.approx(0.16)


def test_charge_current_profiles():
    g = GridSpec.radial(100, 0.1)
    profs = charge_current_profiles(1.0, g.axis(), g.cell_volume(), [0.0, 1.0])
    for p in profs:
        assert np.all(p.comps["J_L"] == 0.0)
        assert np.max(p.comps["J_Lbar"]) > 0.0
    cn = current_norm(profs, WP, (0.0, 1.0))
    assert cn.J_L == 0.0
    assert cn.total == pytest.approx(cn.J_Lbar)
    assert current_norm(profs[:1], WP, (0.0, 0.0)).total == 0.0


def test_field_profile_removes_charge():
    g = GridSpec.radial(200, 0.1)
    F = add_charge(CurvatureGrid.radial(g, np.zeros(200)), 2.0, t=1.0)
    prof = field_profile(1.0, F, q=2.0)
    assert np.allclose(prof.comps["rho"], 0.0)
    raw = field_profile(1.0, F)
    assert np.max(raw.comps["rho"]) > 0.0


def test_divergence_of_constant_tensor():
    p = SpacetimePoint.random(10, np.random.default_rng(7), t_max=5.0, r_max=5.0)
    Q = np.arange(16.0).reshape(4, 4)
    res = divergence_residual(lambda q: np.broadcast_to(Q, q.coords().shape[:-1] + (4, 4)), p, 1e-3)
    assert res.max == 0.0


def test_box_energy_of_vacuum():
    g = GridSpec.box(8, 0.5)
    phi = GaugeScalarGrid(g, np.zeros(g.shape, dtype=complex), np.zeros(g.shape, dtype=complex))
    A = GaugePotentialGrid.zeros(g)
    F = CurvatureGrid.from_eh(g, np.zeros((3,) + g.shape), np.zeros((3,) + g.shape))
    assert box_energy(phi, A, F) == 0.0


def test_conformal_tensor_of_first_kind_scales_with_r():
    rng = np.random.default_rng(8)
    p = SpacetimePoint.random(30, rng, t_max=5.0, r_max=10.0)
    Dphi = rng.normal(size=(30, 4)) + 1j * rng.normal(size=(30, 4))
    Q = conformal_tensor("I", np.zeros(30, dtype=complex), Dphi, p)
    assert Q.kind == "I"
    assert np.allclose(Q.Q, p.r[:, None, None] ** 2 * em_tensor_phi(Dphi).Q)


def test_momentum_density_along_time():
    Q = em_tensor_F(_forms(20))
    p = SpacetimePoint.random(20, np.random.default_rng(9))
    P = momentum_density(Q, LorentzField.d(0), 2.0, p)
    assert np.allclose(P, 2.0 * Q.Q[..., :, 0])


def test_scalar_energy_of_zero_field():
    g = GridSpec.radial(50, 0.2)
    phi = GaugeScalarGrid(g, np.zeros(50, dtype=complex), dt_values=np.zeros(50, dtype=complex))
    slices = [scalar_profile(t, phi, GaugePotentialGrid.zeros(g)) for t in (0.0, 1.0)]
    br = energy_breakdown_phi(slices, WP, (0.0, 1.0))
    assert br.total == 0.0
    assert br.charge_term == 0.0


def test_scalar_proof_weight_on_the_cone():
    # u = 0 では χ_+ = 0
    val = float(w_tilde_s(5.0, 5.0, 0.75, 0.5, 0.05))
    assert val == pytest.approx(11.0**-0.5 + 11.0**-0.6)
