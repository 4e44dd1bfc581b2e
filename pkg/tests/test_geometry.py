import numpy as np
import pytest

from csflab.energy import em_tensor_F, em_tensor_phi
from csflab.errors import DegenerateRadius, DomainError, RegionViolation, StencilOutOfDomain
from csflab.geometry import (
    ETA,
    LorentzField,
    SampledTwoForm,
    SpacetimePoint,
    TwoFormValue,
    algebra_basis,
    bracket,
    chi_plus,
    deformation_tensor,
    electric_magnetic,
    eps_rotate,
    frame_at,
    hodge_dual,
    lie_derivative_two_form,
    metric,
    morawetz_factor,
    null_decompose,
    special_cancellation,
    tau_minus,
    tau_plus,
    vector_bracket,
    w_gamma,
    weights_at,
    weights_tr,
)
from csflab.schemas import WeightParams


def _points(n=200, seed=1, t_max=20.0, r_max=40.0):
    return SpacetimePoint.random(n, np.random.default_rng(seed), t_max=t_max, r_max=r_max)


def _forms(n=200, seed=2):
    return TwoFormValue(np.random.default_rng(seed).normal(size=(n, 6)))


def test_frame_is_null_and_orthonormal():
    fr = frame_at(_points())
    assert np.allclose(metric(fr.L, fr.L), 0.0, atol=1e-12)
    assert np.allclose(metric(fr.Lbar, fr.Lbar), 0.0, atol=1e-12)
    assert np.allclose(metric(fr.L, fr.Lbar), -2.0, atol=1e-12)
    for e in fr.e:
        assert np.allclose(metric(e, e), 1.0, atol=1e-12)
        assert np.allclose(metric(e, fr.L), 0.0, atol=1e-12)
    assert np.allclose(metric(fr.e1, fr.e2), 0.0, atol=1e-12)


def test_frame_orientation_and_chart_switch():
    p = SpacetimePoint(np.zeros(2), np.array([[1.0, 0.0, 0.0], [0.0, 0.1, 1.0]]))
    fr = frame_at(p)
    assert list(fr.chart) == [1, 2]
    cross = np.cross(fr.e1[..., 1:], fr.e2[..., 1:])
    assert np.allclose(cross, p.omega, atol=1e-12)


def test_frame_at_origin_is_degenerate():
    with pytest.raises(DegenerateRadius):
        frame_at(SpacetimePoint(0.0, np.zeros(3)))


def test_radial_electric_field_is_pure_rho():
    p = SpacetimePoint(0.0, np.array([2.0, 0.0, 0.0]))
    F = TwoFormValue.from_eh(np.array([0.7, 0.0, 0.0]), np.zeros(3))
    c = null_decompose(F, frame_at(p))
    assert c.rho == pytest.approx(0.7)
    assert np.allclose(c.alpha, 0.0)
    assert np.allclose(c.alphabar, 0.0)
    assert c.sigma == pytest.approx(0.0)


def test_electric_magnetic_split_matches_construction():
    E = np.array([0.3, -1.2, 0.5])
    H = np.array([2.0, 0.1, -0.4])
    E2, H2 = electric_magnetic(TwoFormValue.from_eh(E, H))
    assert np.allclose(E2, E)
    assert np.allclose(H2, H)


def test_duality_table():
    F = _forms()
    fr = frame_at(_points())
    c = null_decompose(F, fr)
    d = null_decompose(hodge_dual(F), fr)
    assert np.allclose(d.alpha, -eps_rotate(c.alpha), atol=1e-12)
    assert np.allclose(d.alphabar, eps_rotate(c.alphabar), atol=1e-12)
    assert np.allclose(d.rho, c.sigma, atol=1e-12)
    assert np.allclose(d.sigma, -c.rho, atol=1e-12)
    assert np.allclose(hodge_dual(hodge_dual(F)).comps, -F.comps, atol=1e-12)


def test_energy_densities_in_null_frame():
    F = _forms()
    fr = frame_at(_points())
    c = null_decompose(F, fr)
    Q = em_tensor_F(F)
    assert np.allclose(Q.contract(fr.L, fr.L), np.sum(c.alpha**2, axis=-1), atol=1e-10)
    assert np.allclose(Q.contract(fr.Lbar, fr.Lbar), np.sum(c.alphabar**2, axis=-1), atol=1e-10)
    assert np.allclose(Q.contract(fr.Lbar, fr.L), c.rho**2 + c.sigma**2, atol=1e-10)

    rng = np.random.default_rng(3)
    Dphi = rng.normal(size=(200, 4)) + 1j * rng.normal(size=(200, 4))
    P = em_tensor_phi(Dphi)
    slash = sum(np.abs(np.einsum("...a,...a->...", e, Dphi)) ** 2 for e in fr.e)
    assert np.allclose(P.contract(fr.Lbar, fr.L), slash, atol=1e-10)


def test_bracket_table_against_flow():
    p = _points(20, t_max=5.0, r_max=5.0)
    basis = algebra_basis()
    for X in basis:
        for Y in basis:
            assert np.allclose(bracket(X, Y).at(p), vector_bracket(X.at, Y.at, p), atol=1e-6)


def test_bracket_of_translation_and_scaling():
    comb = bracket(LorentzField.d(0), LorentzField.scaling())
    assert comb.terms == {LorentzField.d(0): 1.0}
    assert bracket(LorentzField.d(1), LorentzField.d(2)).is_zero()


def test_bracket_outside_algebra_raises():
    with pytest.raises(DomainError):
        bracket(LorentzField.morawetz(), LorentzField.d(0))


def test_deformation_tensors():
    p = SpacetimePoint(np.full(5, 3.0), np.random.default_rng(4).normal(size=(5, 3)))
    assert np.allclose(deformation_tensor(LorentzField.scaling(), p), 2.0 * ETA, atol=1e-8)
    assert np.allclose(deformation_tensor(LorentzField.rotation(1, 2), p), 0.0, atol=1e-8)
    # t = 3 で π(K_0) = 12 g
    assert np.allclose(deformation_tensor(LorentzField.morawetz(), p), 12.0 * ETA, atol=1e-8)
    # s = 1 の K_0^s は K_0 と同じ
    assert np.allclose(deformation_tensor(LorentzField.fractional_morawetz(1.0), p), 12.0 * ETA, atol=1e-8)


def test_morawetz_factor_values():
    assert morawetz_factor(0.75, 1.0, 1.0) == pytest.approx(2.0**1.5 / 4.0)
    r = np.linspace(0.1, 50.0, 100)
    assert np.allclose(morawetz_factor(1.0, 7.0, r), 0.0, atol=1e-10)
    assert np.all(morawetz_factor(0.6, 3.0, r) >= -1e-10)


@pytest.mark.parametrize("s", [0.4, 1.2])
def test_morawetz_factor_rejects_exponent(s):
    with pytest.raises(DomainError):
        morawetz_factor(s, 1.0, 1.0)


def test_weights():
    assert w_gamma(0.0, 3.0, 0.5) == pytest.approx(np.sqrt(10.0))
    assert w_gamma(5.0, 1.0, 0.5) == pytest.approx(1.0)
    assert w_gamma(5.0, 1.0, 0.5, sharp=True) == pytest.approx(0.0)
    assert tau_plus(0.0, 0.0) == pytest.approx(1.0)
    assert tau_minus(2.0, 2.0) == pytest.approx(1.0)
    wv = weights_tr(0.0, 3.0, WeightParams())
    assert wv.tau_0 == pytest.approx(1.0)


def test_chi_plus_is_a_smooth_step():
    assert chi_plus(-1.0) == 0.0
    assert chi_plus(0.0) == 0.0
    assert chi_plus(0.5) == pytest.approx(0.5)
    assert chi_plus(1.0) == 1.0
    x = np.linspace(-0.5, 1.5, 201)
    assert np.all(np.diff(chi_plus(x)) >= 0.0)


def test_special_cancellation_for_rotations():
    p = SpacetimePoint(np.array([0.5, 2.0, 3.0]), np.array([[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 4.0, 1.0]]))
    for i, j in ((1, 2), (1, 3), (2, 3)):
        assert np.max(special_cancellation(LorentzField.rotation(i, j), p)) < 1e-10


def test_special_cancellation_region():
    p = SpacetimePoint(np.array([5.0]), np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(RegionViolation):
        special_cancellation(LorentzField.scaling(), p)


def test_weights_at_matches_tr_form():
    p = _points(20)
    a = weights_at(p, WeightParams())
    b = weights_tr(p.t, p.r, WeightParams())
    assert np.array_equal(a.w_gamma_eps, b.w_gamma_eps)
    assert np.array_equal(a.w_prime, b.w_prime)


def test_lie_derivative_of_constant_form():
    M = _forms(1).matrix()[0]
    F = SampledTwoForm(lambda t, x: np.broadcast_to(M, np.shape(t) + (4, 4)))
    p = _points(10, t_max=5.0, r_max=5.0)
    # 定数場: 𝓛_T F = 0, 𝓛_S F = 2F
    assert np.max(np.abs(lie_derivative_two_form(F, LorentzField.d(0), p).comps)) < 1e-12
    scaled = lie_derivative_two_form(F, LorentzField.scaling(), p).matrix()
    assert np.allclose(scaled, 2.0 * M, atol=1e-12)


def test_lie_derivative_stencil_must_stay_inside():
    F = SampledTwoForm(lambda t, x: np.zeros(np.shape(t) + (4, 4)), bounds=(0.0, 1.0, 10.0))
    p = SpacetimePoint(np.array([0.0]), np.array([[1.0, 0.0, 0.0]]))
    with pytest.raises(StencilOutOfDomain):
        lie_derivative_two_form(F, LorentzField.d(0), p)
