import numpy as np
import pytest

from csflab.errors import CFLViolation, RecipeUnknown
from csflab.evolve import (
    RadialManufactured,
    RunResult,
    init_box3d,
    init_sph1d,
    init_state,
    rk4_step,
    run,
    step_box3d,
    step_sph1d,
    temporal_potential,
)
from csflab.schemas import RunConfig


def _sph(**kw):
    base = dict(scheme="sph1d", recipe="charged-gaussian", r0=3.0, width=1.0, h=0.1, T=2.0, R_max=20.0, cadence=1.0)
    base.update(kw)
    return RunConfig(**base)


def _box(**kw):
    base = dict(scheme="box3d", recipe="charged-gaussian", n=16, h=0.25, cfl=0.4, r0=0.0, width=1.0, amplitude=0.1, T=0.5)
    base.update(kw)
    return RunConfig(**base)


def test_rk4_integrates_exponential():
    y = (np.array([1.0]),)
    t = 0.0
    for _ in range(10):
        y = rk4_step(lambda t_, y_: (y_[0],), t, y, 0.1)
        t += 0.1
    assert y[0][0] == pytest.approx(np.e, rel=1e-5)


def test_temporal_potential_gauges():
    E = np.ones(10)
    outer = temporal_potential(E, 0.1, "outer")
    origin = temporal_potential(E, 0.1, "origin")
    assert outer[-1] == pytest.approx(0.05)
    assert origin[0] == pytest.approx(-0.05)
    assert np.allclose(np.diff(outer), -0.1)
    assert np.allclose(np.diff(origin), -0.1)


def test_zero_data_stays_zero():
    result = run(_sph(recipe="zero", T=1.0))
    last = result.snapshots[-1]
    assert np.all(last.psi == 0.0)
    assert np.all(last.E_r == 0.0)
    assert result.charge_drift == 0.0


def test_charged_gaussian_initial_data():
    state = init_state(_sph())
    assert state.charge() > 0.0
    assert state.gauss_residual() < 1e-12
    # r = R で E_r ≈ q/(4πR²)
    assert state.E_r[-1] * 4.0 * np.pi * state.r[-1] ** 2 == pytest.approx(state.charge(), rel=1e-3)


def test_charge_is_conserved_over_short_run():
    result = run(_sph())
    assert result.charge_drift <= 1e-6


def test_snapshot_cadence():
    result = run(_sph(T=2.0, cadence=0.5))
    assert len(result.snapshots) == 5
    assert [round(s.t, 9) for s in result.snapshots] == [0.0, 0.5, 1.0, 1.5, 2.0]


def test_snapshot_sink_sees_every_record():
    seen = []
    run(_sph(recipe="zero", T=1.0), sink=lambda s, row: seen.append(row.t))
    assert len(seen) == 2


def test_coulomb_recipe_carries_external_charge():
    state = init_state(_sph(recipe="coulomb", amplitude=0.3, width=2.0))
    assert state.charge() == pytest.approx(0.3, rel=1e-6)
    assert state.gauss_residual() < 1e-12


def test_manufactured_radial_solution_is_tracked():
    cfg = _sph(recipe="manufactured", amplitude=0.1, h=0.05, R_max=8.0, T=0.5, cadence=0.5)
    result = run(cfg)
    last = result.snapshots[-1]
    exact = RadialManufactured(0.1).psi(last.t, last.r)
    assert np.max(np.abs(last.psi - exact)) < 5e-2 * np.max(np.abs(exact))


@pytest.mark.parametrize("scheme", ["sph1d", "box3d"])
def test_unknown_recipe(scheme):
    cfg = _sph(recipe="bogus") if scheme == "sph1d" else _box(recipe="bogus")
    with pytest.raises(RecipeUnknown):
        init_state(cfg)


def test_cfl_violation_on_step():
    state = init_state(_sph(recipe="zero"))
    with pytest.raises(CFLViolation):
        step_sph1d(state, 0.1)


def test_box_charged_gaussian_satisfies_constraints():
    state = init_box3d("charged-gaussian", _box())
    assert state.charge() > 0.0
    assert state.gauss_residual() < 1e-8
    assert state.lorenz_residual() == 0.0


def test_box_zero_data_stays_zero():
    state = init_box3d("zero", _box(recipe="zero"))
    nxt = step_box3d(state, 0.1)
    assert np.all(nxt.phi == 0.0)
    assert np.all(nxt.A == 0.0)
    assert nxt.t == pytest.approx(0.1)


def test_init_sph1d_grid_matches_config():
    cfg = _sph(recipe="zero")
    state = init_sph1d("zero", cfg)
    assert state.r.shape == (cfg.cells,)
    assert state.r[0] == pytest.approx(0.05)
    assert state.t == 0.0
    assert state.charge() == 0.0


def test_run_returns_every_snapshot():
    result = run(_sph(recipe="zero", h=0.1, T=0.5, R_max=10.0, cadence=0.25))
    assert isinstance(result, RunResult)
    assert len(result.snapshots) == 3
    assert len(result.monitors) == 3


def _odd_pulse(x, amplitude, r0, width):
    # ψ_0 の奇拡張
    return x * amplitude * np.exp(-((np.abs(x) - r0) ** 2) / width**2)


def test_real_pulse_is_a_free_wave():
    cfg = _sph(recipe="real-pulse", T=1.0)
    last = run(cfg).snapshots[-1]
    assert np.all(last.psi.imag == 0.0)
    assert np.all(last.E_r == 0.0)
    r, t = last.r, last.t
    exact = 0.5 * (_odd_pulse(r - t, cfg.amplitude, 3.0, 1.0) + _odd_pulse(r + t, cfg.amplitude, 3.0, 1.0))
    assert np.max(np.abs(last.psi.real - exact)) < 2e-2 * np.max(np.abs(exact))


def test_gauge_anchor_does_not_change_observables():
    outer = run(_sph(T=1.0, gauge="outer"))
    origin = run(_sph(T=1.0, gauge="origin"))
    a, b = outer.snapshots[-1], origin.snapshots[-1]
    assert np.allclose(a.E_r, b.E_r, rtol=0.0, atol=1e-6 * np.max(np.abs(a.E_r)))
    assert np.allclose(np.abs(a.psi), np.abs(b.psi), rtol=0.0, atol=1e-6 * np.max(np.abs(a.psi)))
    assert outer.monitors[-1].energy == pytest.approx(origin.monitors[-1].energy, rel=1e-6)
    assert outer.monitors[-1].q == pytest.approx(origin.monitors[-1].q, rel=1e-6)


def test_discrete_charge_is_tracked_by_monitors():
    result = run(_sph(T=1.0, cadence=0.5))
    q0 = result.snapshots[0].charge()
    assert q0 > 0.0
    for s, m in zip(result.snapshots, result.monitors):
        assert m.q == pytest.approx(s.charge(), rel=1e-12)
        assert abs(s.charge() - q0) <= 1e-6 * q0
