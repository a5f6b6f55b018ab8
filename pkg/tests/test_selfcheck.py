import pytest

from racnn import selfcheck


@pytest.mark.parametrize("suite", [s for s in selfcheck.SUITES])
def test_each_suite_passes(suite):
    (result,) = selfcheck.run(only=[suite])
    assert result["ok"], result["detail"]


@pytest.mark.parametrize("suite", [s for s in selfcheck.SUITES if s != "gradients"])
def test_each_suite_passes_in_fp64(suite):
    (result,) = selfcheck.run(only=[suite], fp64=True)
    assert result["ok"], result["detail"]


def test_hollow_fault_is_caught_only_by_its_suite():
    selfcheck.FAULTS.add("hollow")
    try:
        results = selfcheck.run()
    finally:
        selfcheck.FAULTS.clear()
    failed = [r["suite"] for r in results if not r["ok"]]
    assert failed == ["hollow_invariant"]


def test_crashing_suite_reports_failure(monkeypatch):
    def broken(rng):
        raise RuntimeError("kaboom")

    monkeypatch.setitem(selfcheck.SUITES, "gemm", broken)
    (result,) = selfcheck.run(only=["gemm"])
    assert not result["ok"] and "kaboom" in result["detail"]
