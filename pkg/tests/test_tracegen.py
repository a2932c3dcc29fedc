# tests/test_tracegen.py
import numpy as np
import pytest

from core.errors import IngestionError, ParameterError
from core.tracegen import (
    RateTrace,
    bmodel_rates,
    bmodel_volumes,
    expected_count,
    ingest_arrival_csv,
    ingest_rate_csv,
    next_power_of_two,
    poisson_arrivals,
    sample_request_size,
    scale_to_workers,
    sniff_trace_kind,
    synthetic_trace,
    write_arrival_csv,
    write_rate_csv,
)


def test_bmodel_two_and_four_slots():
    assert sorted(bmodel_volumes(100.0, 2, 0.7, seed=1)) == pytest.approx([30.0, 70.0])
    assert sorted(bmodel_volumes(100.0, 4, 0.7, seed=1)) == pytest.approx([9.0, 21.0, 21.0, 49.0])


def test_bmodel_uniform_at_half():
    vols = bmodel_volumes(64.0, 64, 0.5, seed=3)
    assert np.all(vols == 1.0)


def test_bmodel_conserves_volume():
    vols = bmodel_volumes(1234.5, 256, 0.73, seed=9)
    assert vols.sum() == pytest.approx(1234.5)
    assert np.all(vols >= 0)


@pytest.mark.parametrize("slots,bias", [(3, 0.6), (4, 0.4), (4, 1.0), (0, 0.6)])
def test_bmodel_rejects_bad_params(slots, bias):
    with pytest.raises(ParameterError):
        bmodel_volumes(1.0, slots, bias, seed=0)


def test_burstiness_raises_variation():
    def mean_cv(bias):
        cvs = []
        for seed in range(50):
            v = bmodel_volumes(1.0, 128, bias, seed)
            cvs.append(v.std() / v.mean())
        return np.mean(cvs)

    cvs = [mean_cv(b) for b in (0.5, 0.6, 0.7, 0.75)]
    assert cvs[0] == 0.0
    assert all(a < b for a, b in zip(cvs, cvs[1:]))


def test_scale_to_workers():
    rates = bmodel_rates(1.0, 16, 0.7, seed=2, base_size=0.02)
    scaled = scale_to_workers(rates, 100.0)
    assert scaled.rates.mean() * 0.02 == pytest.approx(100.0)
    with pytest.raises(ParameterError):
        scale_to_workers(RateTrace(np.zeros(4), 0.01), 10.0)


def test_expected_count_constant_rate():
    rates = RateTrace(np.full(4, 50.0), 0.01)
    assert expected_count(rates, 240.0) == pytest.approx(50.0 * 240.0)


def test_poisson_counts_track_rate_integral():
    rates = RateTrace(np.array([20.0, 80.0, 40.0]), 0.01, 20.0)
    mu = expected_count(rates, rates.duration)
    inside = 0
    for seed in range(200):
        n = len(poisson_arrivals(rates, seed=seed))
        inside += abs(n - mu) <= 3 * np.sqrt(mu)
    assert inside >= 0.99 * 200 - 1


def test_poisson_arrivals_sorted_and_in_horizon():
    rates = RateTrace(np.array([30.0, 10.0]), 0.01, 10.0)
    trace = poisson_arrivals(rates, 15.0, seed=4)
    times = [r.arrival for r in trace.requests]
    assert times == sorted(times)
    assert all(0.0 <= t < 15.0 for t in times)
    assert all(r.deadline == pytest.approx(r.arrival + 0.1) for r in trace.requests)
    with pytest.raises(ParameterError):
        poisson_arrivals(rates, 30.0, seed=4)


def test_zero_rate_trace_has_no_arrivals():
    assert len(poisson_arrivals(RateTrace(np.zeros(3), 0.01), seed=1)) == 0


def test_request_size_buckets():
    for seed in range(20):
        assert 0.01 <= sample_request_size("short", seed) <= 0.1
        assert 1.0 <= sample_request_size("long", seed) <= 10.0


def test_next_power_of_two():
    assert [next_power_of_two(n) for n in (1, 2, 3, 120, 128)] == [1, 2, 4, 128, 128]


def test_synthetic_trace_truncates_and_is_deterministic():
    rates, arrivals = synthetic_trace("short", 0.6, hours=0.1, avg_workers=0.2, seed=7, size=0.01)
    assert rates.num_slots == 6
    assert rates.rates.mean() * 0.01 == pytest.approx(0.2)
    _, again = synthetic_trace("short", 0.6, hours=0.1, avg_workers=0.2, seed=7, size=0.01)
    assert [r.arrival for r in arrivals.requests] == [r.arrival for r in again.requests]


def test_rate_csv_round_trip(tmp_path):
    path = tmp_path / "rates.csv"
    rates = RateTrace(np.array([1.5, 2.25, 0.0]), 0.01)
    write_rate_csv(rates, path, ["seed=1"])
    back = ingest_rate_csv(path)
    assert back.rates.tolist() == [1.5, 2.25, 0.0]
    assert back.base_size == pytest.approx(0.01)
    assert sniff_trace_kind(path) == "rate"


def test_arrival_csv_round_trip(tmp_path):
    path = tmp_path / "arrivals.csv"
    rates = RateTrace(np.array([40.0]), 0.02, 5.0)
    trace = poisson_arrivals(rates, seed=2)
    write_arrival_csv(trace, path)
    back = ingest_arrival_csv(path)
    assert len(back) == len(trace)
    assert [r.arrival for r in back.requests] == pytest.approx([r.arrival for r in trace.requests], abs=1e-9)
    assert back.base_size == pytest.approx(0.02)
    assert sniff_trace_kind(path) == "arrival"


def test_empty_arrival_csv(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("arrival_s,size_s\n")
    assert len(ingest_arrival_csv(path)) == 0


@pytest.mark.parametrize("body,line", [
    ("# size_ms=10\nminute,rate\n0,1.0\n1,-2\n", 4),
    ("# size_ms=10\nminute,rate\n0,abc\n", 3),
    ("minute,rates\n0,1\n", 1),
    ("# size_ms=10\nminute,rate\n", 3),
    ("# size_ms=10\nminute,rate\n0,100,5\n1,200,7\n", 3),
    ("# size_ms=10\nminute,rate\n0,100\n1,200,7\n", 4),
    ("# size_ms=10\nminute,rate\n0,100\n\n1,-2\n", 5),
])
def test_rate_csv_errors_name_the_line(tmp_path, body, line):
    path = tmp_path / "bad.csv"
    path.write_text(body)
    with pytest.raises(IngestionError) as err:
        ingest_rate_csv(path)
    assert err.value.line == line
    assert str(err.value).startswith(f"line {line}:")


def test_rate_csv_without_size(tmp_path):
    path = tmp_path / "nosize.csv"
    path.write_text("minute,rate\n0,1.0\n")
    with pytest.raises(IngestionError):
        ingest_rate_csv(path)
    assert ingest_rate_csv(path, base_size=0.05).base_size == 0.05


def test_unsorted_arrivals_rejected(tmp_path):
    path = tmp_path / "unsorted.csv"
    path.write_text("arrival_s,size_s\n1.0,0.01\n0.5,0.01\n")
    with pytest.raises(IngestionError) as err:
        ingest_arrival_csv(path)
    assert err.value.line == 3


def test_short_arrival_row_rejected(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("arrival_s,size_s\n0.0,0.01\n0.5\n")
    with pytest.raises(IngestionError) as err:
        ingest_arrival_csv(path)
    assert err.value.line == 3
