"""Timing properties of the benchmark harness on the reference layer size."""

import pytest

from racnn.bench import make_case, run_bench
from racnn.adaptive import racnn_forward_sparse

DIMS = dict(h=128, c=128, d=64, f=64)


@pytest.fixture(scope="module")
def sweep():
    return {az: run_bench(**DIMS, alpha_zero=az, reps=20) for az in (0.0, 0.25, 0.5, 0.75, 1.0)}


@pytest.mark.slow
def test_sparse_time_non_increasing_in_alpha_zero(sweep):
    medians = [sweep[az].timings["racnn_sparse"]["median_ms"] for az in sorted(sweep)]
    for slower, faster in zip(medians, medians[1:]):
        assert faster <= 1.05 * slower, medians


@pytest.mark.slow
def test_no_skipping_costs_at_least_a_standard_conv(sweep):
    r = sweep[0.0]
    assert r.fraction_alpha_zero == 0.0
    assert r.timings["racnn_sparse"]["median_ms"] >= 0.9 * r.timings["standard"]["median_ms"]


@pytest.mark.slow
def test_full_skipping_is_under_half(sweep):
    r = sweep[1.0]
    assert r.fraction_alpha_zero == 1.0
    assert r.ratio_sparse < 0.5


@pytest.mark.slow
def test_reports_follow_the_cost_model(sweep):
    for az, r in sweep.items():
        assert r.fraction_alpha_zero == az
        assert abs(r.mac_ratio - r.predicted_factor) <= 0.02 * r.predicted_factor


def test_make_case_controls_the_skip_fraction():
    for az in (0.0, 0.1, 0.5, 1.0):
        x, p = make_case(20, 15, 8, 4, az, seed=2)
        _, _, stats = racnn_forward_sparse(x, p)
        assert stats.skipped_pixels == round(az * 300)


def test_run_bench_validates():
    for kwargs in (dict(reps=2), dict(warmup=0), dict(alpha_zero=-0.1)):
        with pytest.raises(ValueError):
            run_bench(8, 8, 4, 4, **kwargs)
    with pytest.raises(ValueError):
        run_bench(0, 8, 4, 4)
