import numpy as np
import pytest

from csflab.errors import GridMismatch, MissingTimeLevel, NaNDetected
from csflab.fields import (
    CurrentGrid,
    GaugePotentialGrid,
    GaugeScalarGrid,
    GridSpec,
    bianchi_residual,
    continuity_residual,
    covariant_derivative,
    current_from_fields,
    curvature_from_potential,
    em_decompose,
    gauge_transform,
    interior,
)


def _gaussian_pair(grid, k=1.5):
    X = grid.coords()
    r2 = sum(x**2 for x in X)
    phi = np.exp(-r2) * np.exp(1j * k * X[0])
    phi_t = -1j * 0.7 * phi
    A = GaugePotentialGrid(grid, 0.2 * np.stack([np.exp(-r2)] * 4), np.zeros((4,) + grid.shape))
    return GaugeScalarGrid(grid, phi, phi_t), A


def test_radial_grid_is_cell_centred():
    g = GridSpec.radial(10, 0.1)
    assert g.axis()[0] == pytest.approx(0.05)
    assert g.cell_volume()[0] == pytest.approx(4.0 * np.pi * 0.05**2 * 0.1)
    assert g.points().shape == (10, 3)


def test_box_grid_avoids_origin():
    g = GridSpec.box(8, 0.5)
    assert g.shape == (8, 8, 8)
    assert np.min(g.radius()) > 0.0
    assert g.axis()[0] == pytest.approx(-1.75)


def test_scalar_grid_validation():
    g = GridSpec.radial(10, 0.1)
    with pytest.raises(GridMismatch):
        GaugeScalarGrid(g, np.zeros(11))
    bad = np.zeros(10, dtype=complex)
    bad[3] = np.nan
    with pytest.raises(NaNDetected):
        GaugeScalarGrid(g, bad)
    with pytest.raises(GridMismatch):
        GaugePotentialGrid(g, np.zeros((4, 10)))


def test_time_derivative_required():
    g = GridSpec.radial(10, 0.1)
    phi = GaugeScalarGrid(g, np.ones(10, dtype=complex))
    with pytest.raises(MissingTimeLevel):
        covariant_derivative(phi, GaugePotentialGrid.zeros(g), 0)


def test_covariant_derivative_of_plane_wave():
    g = GridSpec.box(32, 0.05)
    X = g.coords()
    phi = GaugeScalarGrid(g, np.exp(1j * 2.0 * X[0]))
    D = covariant_derivative(phi, GaugePotentialGrid.zeros(g), 1)
    assert np.allclose(interior(D, g), interior(2j * phi.values, g), atol=5e-3)


def test_constant_gauge_change_leaves_current_unchanged():
    g = GridSpec.box(16, 0.2)
    phi, A = _gaussian_pair(g)
    chi = np.full(g.shape, 0.9)
    phi2, A2 = gauge_transform(phi, A, chi, np.zeros((4,) + g.shape))
    J1 = current_from_fields(phi, A).J
    J2 = current_from_fields(phi2, A2).J
    assert np.allclose(J1, J2, atol=1e-12)


def test_linear_gauge_change_is_covariant_to_truncation():
    g = GridSpec.box(48, 0.05)
    phi, A = _gaussian_pair(g)
    X = g.coords()
    chi = 0.3 * X[0]
    dchi = np.zeros((4,) + g.shape)
    dchi[1] = 0.3
    phi2, A2 = gauge_transform(phi, A, chi, dchi)
    for mu in range(4):
        D1 = np.abs(covariant_derivative(phi, A, mu))
        D2 = np.abs(covariant_derivative(phi2, A2, mu))
        assert np.max(np.abs(interior(D1 - D2, g))) < 2e-2


def test_uniform_magnetic_field():
    g = GridSpec.box(12, 0.25)
    X = g.coords()
    a = np.zeros((4,) + g.shape)
    a[1] = -0.5 * X[1]
    a[2] = 0.5 * X[0]
    A = GaugePotentialGrid(g, a, np.zeros_like(a))
    E, H = em_decompose(curvature_from_potential(A))
    assert np.allclose(E, 0.0, atol=1e-12)
    assert np.allclose(H[2], 1.0, atol=1e-12)
    assert np.allclose(H[:2], 0.0, atol=1e-12)
    assert bianchi_residual(A) < 1e-12


def test_radial_curvature_uses_stored_time_derivative():
    g = GridSpec.radial(20, 0.1)
    A = GaugePotentialGrid(g, np.zeros((2, 20)), np.stack([np.zeros(20), np.full(20, 0.4)]))
    E, _ = em_decompose(curvature_from_potential(A))
    assert np.allclose(E[0], 0.4)


def test_continuity_of_linear_current():
    g = GridSpec.box(10, 0.3)
    X = g.coords()
    dt = 0.1

    def current(t):
        J = np.stack([np.full(g.shape, t), X[0] / 3.0, X[1] / 3.0, X[2] / 3.0])
        return CurrentGrid(g, J)

    res = continuity_residual(current(0.0), current(dt), current(2 * dt), dt)
    assert np.allclose(res, 0.0, atol=1e-12)


def test_real_field_carries_no_current():
    g = GridSpec.radial(50, 0.1)
    r = g.axis()
    phi = GaugeScalarGrid(g, np.exp(-(r**2)).astype(complex), np.zeros(50, dtype=complex))
    J = current_from_fields(phi, GaugePotentialGrid.zeros(g))
    assert np.allclose(J.J, 0.0)
