# tests/test_fastpath.py
import time

import numpy as np
import pytest

from tests.conftest import constant_poisson, make_trace
from core import fastpath
from core.baselines import CpuDynamic
from core.model import Request, RequestColumns, WorkerClass
from core.simengine import SimConfig, Simulation, run, uses_fast_path
from core.spork import SporkScheduler
from core.tracegen import ArrivalTrace, synthetic_trace

numba = pytest.importorskip("numba")


def engine_report(trace, config):
    return Simulation(trace, config, CpuDynamic()).run()


def assert_same_report(fast, slow):
    for bucket in ("busy_j", "idle_j", "spin_up_j", "spin_down_j"):
        assert fast.energy.part(bucket) == pytest.approx(slow.energy.part(bucket), rel=1e-12, abs=1e-12)
    assert fast.cost_usd == pytest.approx(slow.cost_usd, rel=1e-12, abs=1e-15)
    assert fast.requests_on_cpu == slow.requests_on_cpu
    assert fast.cpu_spin_ups == slow.cpu_spin_ups
    assert fast.peak_cpus == slow.peak_cpus
    assert fast.deadline_misses == slow.deadline_misses
    assert fast.sim_end_s == slow.sim_end_s
    assert fast.efficiency_pct == pytest.approx(slow.efficiency_pct, rel=1e-12)
    assert fast.relative_cost == pytest.approx(slow.relative_cost, rel=1e-12)


def mixed_batches():
    # same-time batches with different sizes exercise the deadline ordering
    sizes = [0.05, 0.01, 0.02, 0.01, 0.03, 0.01]
    arrivals = [0.0, 0.0, 0.0, 0.004, 0.004, 0.5]
    reqs = [Request.make(i, a, s) for i, (a, s) in enumerate(zip(arrivals, sizes))]
    return ArrivalTrace(reqs, 1.0)


@pytest.mark.parametrize("trace", [
    make_trace([0.0]),
    make_trace([0.0, 0.017]),
    make_trace([0.0, 0.0199, 0.0199, 0.03]),
    mixed_batches(),
    constant_poisson(300, 10.0, 0.01),
    constant_poisson(40, 20.0, 0.1, seed=5),
], ids=["one", "two", "batch", "mixed", "poisson-short", "poisson-medium"])
def test_kernel_matches_event_engine(trace):
    config = SimConfig()
    assert_same_report(fastpath.cpu_dynamic_report(trace, config), engine_report(trace, config))


def test_kernel_matches_event_engine_on_bursty_trace():
    _, trace = synthetic_trace("short", 0.7, hours=60.0 / 3600.0, avg_workers=8.0, seed=4, slot_length=5.0)
    config = SimConfig()
    assert_same_report(fastpath.cpu_dynamic_report(trace, config), engine_report(trace, config))


def test_kernel_honours_idle_timeout():
    trace = constant_poisson(50, 10.0, 0.01)
    config = SimConfig(idle_timeout={WorkerClass.CPU: 0.05})
    fast = fastpath.cpu_dynamic_report(trace, config)
    assert_same_report(fast, engine_report(trace, config))
    # a longer keep-alive than the 5 ms default never needs more spin-ups
    assert fast.cpu_spin_ups <= fastpath.cpu_dynamic_report(trace, SimConfig()).cpu_spin_ups


def test_empty_trace():
    report = fastpath.cpu_dynamic_report(ArrivalTrace([], 5.0), SimConfig())
    assert report.requests_total == 0 and report.energy_total_j == 0.0
    assert report.efficiency_pct == 100.0


def test_kernel_hash_is_deterministic():
    trace = constant_poisson(200, 5.0, 0.01)
    a = fastpath.cpu_dynamic_report(trace, SimConfig())
    b = fastpath.cpu_dynamic_report(trace, SimConfig())
    assert a.event_hash == b.event_hash and len(a.event_hash) == 64
    other = constant_poisson(200, 5.0, 0.01, seed=9)
    assert fastpath.cpu_dynamic_report(other, SimConfig()).event_hash != a.event_hash


def test_run_picks_the_kernel_only_when_it_applies(tmp_path):
    assert uses_fast_path(SimConfig(), CpuDynamic())
    assert not uses_fast_path(SimConfig(fast_path=False), CpuDynamic())
    assert not uses_fast_path(SimConfig(keep_events=True), CpuDynamic())
    assert not uses_fast_path(SimConfig(event_log=str(tmp_path / "ev.csv")), CpuDynamic())
    assert not uses_fast_path(SimConfig(), SporkScheduler())


def test_dispatch_order_batches_by_deadline():
    arrival = np.array([0.0, 0.0, 0.0, 1.0])
    deadline = np.array([0.5, 0.1, 0.1, 1.1])
    assert fastpath.dispatch_order(arrival, deadline).tolist() == [1, 2, 0, 3]


def test_kernel_throughput():
    fastpath.cpu_dynamic_report(make_trace([0.0, 0.01]), SimConfig())  # compile
    # about 300k requests on ~100 busy CPUs
    trace = ArrivalTrace(RequestColumns(np.sort(np.random.default_rng(1).uniform(0.0, 100.0, 300_000)), 0.033),
                         100.0, 0.033)
    t0 = time.perf_counter()
    report = run(trace, SimConfig(), CpuDynamic())
    elapsed = time.perf_counter() - t0
    assert report.requests_total == 300_000 and report.deadline_misses == 0
    assert elapsed < 10.0
