import pytest
from src.verify import CHECKS, report_frame, run_checks

QUICK = [
    "schedule_boundaries",
    "schedule_gamma_peak",
    "epsilon_constant",
    "gamma_sq_finite_difference",
    "precond_loss_weight",
    "analytic_posterior_endpoints",
    "tinynet_gradient",
    "oracle_ode_deterministic",
    "metric_golden_values",
    "metric_identities",
    "bvol_round_trip",
    "split_partition",
]


def test_registry_holds_every_check():
    assert set(QUICK) <= set(CHECKS)
    assert len(CHECKS) >= 10


def test_quick_checks_pass(sched):
    results = run_checks(sched, QUICK)
    failed = {r.name: r.detail for r in results if not r.passed}
    assert not failed


def test_broken_schedule_is_reported(broken_sched):
    (result,) = run_checks(broken_sched, ["schedule_boundaries"])
    assert not result.passed
    assert "max violation" in result.detail


def test_check_errors_become_failures(sched, monkeypatch):
    def explode(_):
        raise ValueError("boom")

    monkeypatch.setitem(CHECKS, "explode", explode)
    (result,) = run_checks(sched, ["explode"])
    assert not result.passed
    assert result.detail == "ValueError: boom"


def test_report_frame(sched):
    frame = report_frame(run_checks(sched, ["epsilon_constant", "bvol_round_trip"]))
    assert list(frame.columns) == ["check", "status", "seconds", "detail"]
    assert frame["status"].tolist() == ["pass", "pass"]


@pytest.mark.slow
def test_monte_carlo_checks_pass(sched):
    names = [n for n in CHECKS if n not in QUICK]
    results = run_checks(sched, names)
    assert all(r.passed for r in results), [(r.name, r.detail) for r in results if not r.passed]
