# tests/test_spork.py
import numpy as np
import pytest

from tests.conftest import bursty_trace, constant_poisson
from core.baselines import MarkIdeal
from core.errors import ParameterError
from core.model import Request, Worker, WorkerClass, WorkerClassParams
from core.simengine import SimConfig, run
from core.spork import (
    HistogramMap,
    LifetimeMap,
    Predictor,
    SporkMode,
    SporkObjective,
    SporkScheduler,
    breakeven_threshold,
    cost_scores,
    energy_scores,
    needed_fpgas,
    predict_fpgas,
)
from core.tracegen import ArrivalTrace


def test_energy_breakeven(cpu, fpga):
    t_b = breakeven_threshold(cpu, fpga, 10.0, SporkMode.ENERGY)
    assert t_b == pytest.approx(200.0 / 135.0, abs=1e-9)
    assert round(t_b, 4) == 1.4815


def test_cost_breakeven(cpu, fpga):
    t_b = breakeven_threshold(cpu, fpga, 10.0, SporkMode.COST)
    assert t_b == pytest.approx(10 * 0.982 / (2 * 0.668), abs=1e-9)
    assert round(t_b, 4) == 7.3503


def test_zero_fpga_idle_power_gives_zero_threshold(cpu):
    fpga = WorkerClassParams(WorkerClass.FPGA, 10.0, 0.1, 50.0, 0.0, 0.982, 2.0)
    assert breakeven_threshold(cpu, fpga, 10.0, SporkMode.ENERGY) == 0.0


def test_cpu_never_less_efficient_is_an_error(fpga):
    frugal = WorkerClassParams(WorkerClass.CPU, 0.005, 0.005, 10.0, 5.0, 0.668, 1.0)
    with pytest.raises(ParameterError):
        breakeven_threshold(frugal, fpga, 10.0, SporkMode.ENERGY)


def test_weighted_breakeven_endpoints_and_midpoint(cpu, fpga):
    energy = breakeven_threshold(cpu, fpga, 10.0, SporkMode.ENERGY)
    cost = breakeven_threshold(cpu, fpga, 10.0, SporkMode.COST)
    assert breakeven_threshold(cpu, fpga, 10.0, SporkObjective(SporkMode.WEIGHTED, 1.0)) == energy
    assert breakeven_threshold(cpu, fpga, 10.0, SporkObjective(SporkMode.WEIGHTED, 0.0)) == cost
    mid = breakeven_threshold(cpu, fpga, 10.0, SporkObjective(SporkMode.WEIGHTED, 0.5))
    assert energy < mid < cost


@pytest.mark.parametrize("fpga_s,cpu_s,t_b,expected", [
    (0.0, 0.0, 1.4815, 0),
    (18.0, 14.0, 1.4815, 3),
    (20.5, 0.0, 1.4815, 2),
    (20.0, 0.0, 0.0, 2),
])
def test_needed_fpgas(fpga_s, cpu_s, t_b, expected):
    assert needed_fpgas(fpga_s, cpu_s, 2.0, 10.0, t_b) == expected


def test_histogram_frequencies():
    h = HistogramMap()
    h.add(2, 5)
    assert h.frequencies(2) == {5: 1.0}
    h.add(2, 3)
    assert h.frequencies(2) == {3: 0.5, 5: 0.5}
    assert sum(h.frequencies(2).values()) == pytest.approx(1.0, abs=1e-9)
    assert 7 not in h


def test_lifetime_map_defaults_to_one_interval():
    lm = LifetimeMap()
    assert lm.epochs(4, 10.0) == 1
    lm.observe(4, 20.0)
    lm.observe(4, 40.0)
    assert lm.mean(4) == 30.0
    assert lm.epochs(4, 10.0) == 3


def test_histogram_miss_keeps_previous_count(cpu, fpga):
    assert predict_fpgas(HistogramMap(), LifetimeMap(), 7, 0, cpu, fpga, 10.0) == 7


def two_point_histogram():
    h = HistogramMap()
    h.add(2, 2)
    h.add(2, 4)
    return h


def test_energy_scores_and_prediction(cpu, fpga):
    scores = energy_scores({2: 0.5, 4: 0.5}, np.arange(2, 5), cpu, fpga, 10.0) / 10.0
    assert scores.tolist() == pytest.approx([400.0, 285.0, 170.0])
    assert predict_fpgas(two_point_histogram(), LifetimeMap(), 2, 4, cpu, fpga, 10.0) == 4


def test_cost_scores_and_prediction(cpu, fpga):
    scores = cost_scores({2: 0.5, 4: 0.5}, np.arange(2, 5), cpu, fpga, 10.0) * 3600 / 10.0
    assert scores.tolist() == pytest.approx([3.3, 3.614, 3.928])
    objective = SporkObjective(SporkMode.COST)
    assert predict_fpgas(two_point_histogram(), LifetimeMap(), 2, 4, cpu, fpga, 10.0, objective) == 2


def test_spin_up_term_is_amortized_over_lifetime(cpu, fpga):
    p = Predictor(cpu, fpga, 10.0, SporkObjective())
    lm = LifetimeMap()
    assert p.spin_up_term(3, 1, lm) == pytest.approx(2 * 500.0)
    lm.observe(1, 35.0)
    assert p.spin_up_term(3, 1, lm) == pytest.approx(500.0 / 4 + 500.0)
    assert p.spin_up_term(1, 3, lm) == 0.0


def test_prediction_within_histogram_range(cpu, fpga):
    rng = np.random.default_rng(5)
    for _ in range(20):
        h = HistogramMap()
        values = rng.integers(0, 12, size=6)
        for v in values:
            h.add(1, int(v))
        n = predict_fpgas(h, LifetimeMap(), 1, int(rng.integers(0, 12)), cpu, fpga, 10.0)
        assert values.min() <= n <= values.max()


def test_power_scaling_keeps_energy_argmin(cpu, fpga):
    def scaled(p, k):
        return WorkerClassParams(p.class_tag, p.spin_up_latency, p.spin_down_latency,
                                 p.busy_power * k, p.idle_power * k, p.price_per_hour, p.speedup)

    rng = np.random.default_rng(11)
    for _ in range(20):
        h = HistogramMap()
        for v in rng.integers(0, 9, size=5):
            h.add(0, int(v))
        n_curr = int(rng.integers(0, 9))
        base = predict_fpgas(h, LifetimeMap(), 0, n_curr, cpu, fpga, 10.0)
        assert predict_fpgas(h, LifetimeMap(), 0, n_curr, scaled(cpu, 3.0), scaled(fpga, 3.0), 10.0) == base


def test_request_start_accounting(fpga, cpu):
    s = SporkScheduler()
    s.on_request_start(Worker(0, fpga, 0.0), Request.make(0, 0.0, 0.01), 0.0)
    s.on_request_start(Worker(1, cpu, 0.0), Request.make(1, 0.0, 0.01), 0.0)
    assert s.state.fpga_s == pytest.approx(0.005)
    assert s.state.cpu_s == pytest.approx(0.01)


class FakeSim:
    def __init__(self, allocated):
        self.n = allocated
        self.requests = []

    def allocated(self, cls):
        return self.n

    def allocate_worker(self, cls, count, at_time=None, pinned=False):
        self.requests.append((cls, count))
        return []


def bound_scheduler(**kwargs):
    s = SporkScheduler(SporkObjective(**kwargs))
    s.bind(ArrivalTrace([Request.make(0, 0.0, 0.01)], 100.0, 0.01), SimConfig())
    return s


def test_tick_allocates_the_difference():
    s = bound_scheduler()
    s.target = lambda index, n_prev, n_curr: 5
    sim = FakeSim(allocated=4)
    s.on_tick(sim, 1)
    assert sim.requests == [(WorkerClass.FPGA, 1)]
    s.target = lambda index, n_prev, n_curr: 2
    sim = FakeSim(allocated=5)
    s.on_tick(sim, 2)
    assert sim.requests == []


def test_cold_start_and_history_warmup():
    s = bound_scheduler()
    sim = FakeSim(allocated=0)
    s.on_tick(sim, 0)
    assert sim.requests == [] and s.state.needed == []
    for index in (1, 2):
        s.state.fpga_s = 25.0
        s.on_tick(sim, index)
    assert 3 not in s.histograms and s.state.needed == [3, 3]
    s.state.fpga_s = 25.0
    s.on_tick(sim, 3)
    assert s.histograms.frequencies(3) == {3: 1.0}
    assert s.state.fpga_s == 0.0 and s.state.cpu_s == 0.0


def test_energy_variant_equals_weighted_alpha_one():
    trace = constant_poisson(50, 60.0, 0.1)
    a = run(trace, SimConfig(), SporkScheduler(SporkObjective(SporkMode.ENERGY)))
    b = run(trace, SimConfig(), SporkScheduler(SporkObjective(SporkMode.WEIGHTED, alpha=1.0)))
    c = run(trace, SimConfig(), SporkScheduler(SporkObjective(SporkMode.COST)))
    d = run(trace, SimConfig(), SporkScheduler(SporkObjective(SporkMode.WEIGHTED, alpha=0.0)))
    assert a.event_hash == b.event_hash
    assert c.event_hash == d.event_hash


def test_spork_meets_every_deadline():
    trace = constant_poisson(50, 60.0, 0.1)
    for mode in SporkMode:
        for ideal in (False, True):
            report = run(trace, SimConfig(), SporkScheduler(SporkObjective(mode, 0.5, ideal)))
            assert report.deadline_misses == 0
    ideal = run(trace, SimConfig(), SporkScheduler(SporkObjective(ideal_prediction=True)))
    assert ideal.requests_on_fpga > 0


@pytest.fixture(scope="module")
def variant_reports():
    trace = bursty_trace()
    reports = {mode: run(trace, SimConfig(), SporkScheduler(SporkObjective(mode, 0.5))) for mode in SporkMode}
    reports["mark"] = run(trace, SimConfig(), MarkIdeal())
    return reports


def test_variants_order_efficiency_and_cost(variant_reports):
    e, b, c = (variant_reports[m] for m in (SporkMode.ENERGY, SporkMode.WEIGHTED, SporkMode.COST))
    assert e.efficiency_pct >= b.efficiency_pct - 0.5 >= c.efficiency_pct - 1.0
    assert c.relative_cost <= b.relative_cost * 1.01 <= e.relative_cost * 1.02
    assert e.efficiency_pct > c.efficiency_pct
    assert c.relative_cost < e.relative_cost
    for report in variant_reports.values():
        assert report.deadline_misses == 0


def test_cost_variant_beats_mark_ideal(variant_reports):
    c, mark = variant_reports[SporkMode.COST], variant_reports["mark"]
    assert c.efficiency_pct > mark.efficiency_pct
    assert c.relative_cost <= 1.05 * mark.relative_cost
