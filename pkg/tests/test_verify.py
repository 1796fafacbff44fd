import pytest

from services.exceptions import DomainError, ValidationError, VerificationError
from services.integrals_service import LogIdentity
from services import verify_service
from services.verify_service import SUITES, cell_rows, identity_rows, run_suite


def test_identity_rows():
    rows = identity_rows(draws=5, seed=1)
    assert len(rows) == 5 * len(LogIdentity)
    assert max(row["rel_error"] for row in rows) <= 1e-8
    assert {row["identity"] for row in rows} == {case.value for case in LogIdentity}


def test_identity_rows_are_seeded():
    assert identity_rows(draws=2, seed=4) == identity_rows(draws=2, seed=4)


def test_cell_rows():
    rows = cell_rows(draws=5, seed=2)
    assert len(rows) == 15
    assert max(row["abs_error"] for row in rows) <= 1e-10


@pytest.mark.slow
def test_identities_suite_passes():
    report = run_suite("identities")
    assert report["passed"]
    assert set(report["checks"]) == set(SUITES["identities"])
    assert report["checks"]["detailed_balance"]["max_error"] <= 1e-14


def test_unknown_suite():
    with pytest.raises(ValidationError):
        run_suite("nonexistent")


def test_failed_check_reported(monkeypatch):
    def broken():
        return {"max_error": 1.0, "tolerance": 0.0}

    def crashing():
        raise DomainError("вне области")

    monkeypatch.setitem(SUITES, "broken", {"broken": broken, "crashing": crashing})
    report = run_suite("broken", raise_on_failure=False)
    assert not report["passed"]
    assert report["checks"]["crashing"]["error"] == "вне области"

    with pytest.raises(VerificationError) as info:
        run_suite("broken")
    assert info.value.report["suite"] == "broken"


def test_cauchy_check_covers_four_by_four(monkeypatch):
    calls = []

    def record(n, m, theta, kind, **kwargs):
        calls.append((n, m, theta, kind))
        return 0.0

    monkeypatch.setattr(verify_service, "verify_cauchy_sum", record)
    result = SUITES["identities"]["cauchy_sums"]()
    assert result["passed"]
    pure = {(n, m) for n, m, _, kind in calls if kind == "pure_beta"}
    assert pure == {(n, m) for n in range(1, 5) for m in range(1, 5)}
    assert {theta for _, _, theta, kind in calls if kind == "pure_beta"} == {0.5, 1.0, 2.0}
