import pytest

from csflab.errors import DomainError
from csflab.suites import CheckResult, drift_checks, geometry_suite, identities_suite, inequalities_suite, run_suite


def test_check_result_constructors():
    assert CheckResult.at_most("a", 1.0, 2.0).passed
    assert not CheckResult.at_most("a", float("nan"), 2.0).passed
    assert CheckResult.at_least("b", float("inf"), 1.9).passed
    assert not CheckResult.finite("c", float("inf")).passed
    skip = CheckResult.skipped("d", "nothing to do")
    assert skip.passed and skip.kind == "skip"


def test_geometry_suite_passes_on_small_sample():
    res = geometry_suite(seed=3, n_points=2000, n_samples=500)
    assert res.passed, [c.name for c in res.failures]
    names = {c.name for c in res.checks}
    assert {"duality-table", "bracket-table", "special-cancellation-rotations"} <= names


def test_geometry_suite_is_reproducible():
    a = geometry_suite(seed=1, n_points=500, n_samples=200).summary()
    b = geometry_suite(seed=1, n_points=500, n_samples=200, threads=4).summary()
    assert a == b


def test_empty_inequality_list_is_skipped():
    res = inequalities_suite(cases=[])
    assert res.passed
    assert [c.kind for c in res.checks] == ["skip"]
    assert res.summary()["passed"] is True


def test_scale_checks_for_elliptic_and_poincare():
    res = inequalities_suite(cases=["elliptic", "poincare"])
    assert res.passed, [c.name for c in res.failures]
    assert {r.inequality for r in res.reports} == {"elliptic", "poincare", "poincare-regions"}


def test_drift_checks_gate_bound_and_order():
    bound, order = drift_checks(1.6e-8, 1e-9, 0.05)
    assert bound.passed and order.passed
    assert order.value == pytest.approx(4.0)
    # 細分化で減らないドリフトは次数で落ちる
    _, flat = drift_checks(1e-8, 9e-9, 0.05)
    assert not flat.passed
    big, _ = drift_checks(1e-5, 1e-7, 0.05)
    assert not big.passed


def test_unknown_names():
    with pytest.raises(DomainError):
        inequalities_suite(cases=["triangle"])
    with pytest.raises(DomainError):
        run_suite("everything")
    with pytest.raises(DomainError):
        identities_suite(h=0.05, h2=0.1)


@pytest.mark.slow
def test_identities_suite():
    res = run_suite("identities", h=0.05)
    assert res.passed, [c.name for c in res.failures]


@pytest.mark.slow
def test_inequalities_suite():
    res = run_suite("inequalities", threads=2)
    assert res.passed, [c.name for c in res.failures]


@pytest.mark.slow
def test_convergence_suite():
    res = run_suite("convergence", h=0.05, threads=2)
    assert res.passed, [c.name for c in res.failures]
