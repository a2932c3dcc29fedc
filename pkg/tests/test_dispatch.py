# tests/test_dispatch.py
from core.dispatch import (
    Dispatcher,
    DispatchPolicy,
    Fallback,
    can_meet_deadline,
    dispatch_pending,
    find_available_worker,
)
from core.model import Request, Worker, WorkerClass, WorkerState
from core.simengine import Scheduler, SimConfig, Simulation, run
from core.spork import SporkMode, SporkObjective, SporkScheduler
from tests.conftest import bursty_trace, make_trace

BOTH = (WorkerClass.FPGA, WorkerClass.CPU)


def ready_worker(id, params, state=WorkerState.IDLE, committed_until=None, idle_since=-1.0):
    w = Worker(id, params, alloc_start=-100.0)
    w.state = state
    w.idle_since = idle_since
    w.last_change = 0.0
    if committed_until is not None:
        w.committed_until = committed_until
    return w


def idle_sim(counts, now=0.0, trace=None):
    """Simulation with idle, ready workers: counts = [(class, n), ...]."""
    sim = Simulation(trace or make_trace([]), SimConfig(), Scheduler())
    sim.now = -100.0
    for cls, n in counts:
        sim.allocate_worker(cls, n)
    for w in sim.workers.values():
        w.state = WorkerState.IDLE
        w.idle_since = now
        w.last_change = now
    sim.now = now
    return sim


def test_can_meet_deadline_examples(cpu, fpga):
    r = Request.make(0, 0.0, 0.01)
    assert can_meet_deadline(ready_worker(0, cpu), r, 0.0)
    spinning = Worker(1, fpga, alloc_start=0.0)
    assert not can_meet_deadline(spinning, r, 0.0)


def test_deadline_boundary_is_inclusive(fpga):
    r = Request.make(0, 0.0, 0.5)  # deadline 5.0, 0.25 s on an FPGA
    busy = ready_worker(0, fpga, WorkerState.BUSY, committed_until=4.75)
    assert can_meet_deadline(busy, r, 0.0)
    busy.committed_until = 4.76
    assert not can_meet_deadline(busy, r, 0.0)


def test_fpga_preferred_over_cpu(cpu, fpga):
    workers = [ready_worker(0, cpu), ready_worker(1, fpga)]
    w = find_available_worker(Request.make(0, 0.0, 0.01), workers, 0.0, BOTH)
    assert w.id == 1


def test_busiest_fpga_first(fpga):
    workers = [ready_worker(0, fpga, WorkerState.BUSY, committed_until=1.0),
               ready_worker(1, fpga, WorkerState.BUSY, committed_until=3.0)]
    w = find_available_worker(Request.make(0, 0.0, 1.0), workers, 0.0, BOTH)
    assert w.id == 1


def test_most_recently_idle_first(cpu):
    workers = [ready_worker(0, cpu, idle_since=-5.0), ready_worker(1, cpu, idle_since=-1.0)]
    w = find_available_worker(Request.make(0, 0.0, 0.01), workers, 0.0, BOTH)
    assert w.id == 1


def test_none_feasible(fpga):
    workers = [Worker(0, fpga, alloc_start=0.0)]
    assert find_available_worker(Request.make(0, 0.0, 0.01), workers, 0.0, BOTH) is None


def test_index_packing_merges_classes(cpu, fpga):
    workers = [ready_worker(0, fpga), ready_worker(1, cpu, WorkerState.BUSY, committed_until=0.05)]
    w = find_available_worker(Request.make(0, 0.0, 0.01), workers, 0.0, BOTH, DispatchPolicy.INDEX_PACKING)
    assert w.id == 1
    w = find_available_worker(Request.make(0, 0.0, 0.01), workers, 0.0, BOTH, DispatchPolicy.EFFICIENT_FIRST)
    assert w.id == 0


def test_two_requests_packed_on_one_fpga():
    sim = idle_sim([(WorkerClass.FPGA, 2), (WorkerClass.CPU, 1)])
    reqs = [Request.make(0, 0.0, 0.01), Request.make(1, 0.0, 0.01)]
    placed = dispatch_pending(reqs, sim, Dispatcher(DispatchPolicy.EFFICIENT_FIRST, BOTH, Fallback.CPU_SPINUP))
    assert {w for _, w in placed} == {0}


def test_round_robin_rotation():
    sim = idle_sim([(WorkerClass.CPU, 2)])
    reqs = [Request.make(i, 0.0, 0.01) for i in range(3)]
    placed = dispatch_pending(reqs, sim, Dispatcher(DispatchPolicy.ROUND_ROBIN, BOTH, Fallback.CPU_SPINUP))
    assert [w for _, w in placed] == [0, 1, 0]


def test_no_workers_spins_up_cpu_with_request_queued():
    r = Request.make(0, 0.0, 0.01)
    sim = idle_sim([])
    dispatch_pending([r], sim, Dispatcher(DispatchPolicy.EFFICIENT_FIRST, BOTH, Fallback.CPU_SPINUP))
    (w,) = sim.workers.values()
    assert w.cls == WorkerClass.CPU and w.state == WorkerState.SPINNING_UP
    assert w.queue == [r]


def test_deadline_order_is_stable():
    sim = idle_sim([(WorkerClass.CPU, 4)])
    reqs = [Request.make(0, 0.0, 0.05), Request.make(1, 0.0, 0.01), Request.make(2, 0.0, 0.01)]
    placed = dispatch_pending(reqs, sim, Dispatcher(DispatchPolicy.EFFICIENT_FIRST, BOTH, Fallback.CPU_SPINUP))
    assert [r for r, _ in placed] == [1, 2, 0]


def test_fixed_pool_queues_on_earliest_fpga():
    sim = idle_sim([(WorkerClass.FPGA, 2)])
    dispatcher = Dispatcher(DispatchPolicy.EFFICIENT_FIRST, (WorkerClass.FPGA,), Fallback.EARLIEST)
    # each request needs its own FPGA to finish in time
    reqs = [Request.make(i, 0.0, 2.0, deadline_mult=0.5) for i in range(3)]
    placed = dispatch_pending(reqs, sim, dispatcher)
    assert [w for _, w in placed] == [0, 1, 0]
    assert len(sim.workers) == 2


def test_dynamic_pool_spins_up_when_sooner():
    sim = idle_sim([(WorkerClass.FPGA, 1)])
    w0 = sim.workers[0]
    dispatcher = Dispatcher(DispatchPolicy.EFFICIENT_FIRST, (WorkerClass.FPGA,), Fallback.FPGA_SPINUP)
    w0.state = WorkerState.BUSY
    w0.committed_until = 30.0
    dispatch_pending([Request.make(0, 0.0, 0.01)], sim, dispatcher)
    assert len(sim.workers) == 2 and sim.workers[1].cls == WorkerClass.FPGA
    w0.committed_until = 5.0
    dispatch_pending([Request.make(1, 0.0, 0.01)], sim, dispatcher)
    assert len(sim.workers) == 2


def test_index_packing_picks_busiest_across_classes_lowest_id_on_ties(cpu, fpga):
    r = Request.make(0, 0.0, 0.01)
    workers = [ready_worker(2, fpga, WorkerState.BUSY, committed_until=0.05),
               ready_worker(1, cpu, WorkerState.BUSY, committed_until=0.05),
               ready_worker(0, fpga)]
    assert find_available_worker(r, workers, 0.0, BOTH, DispatchPolicy.INDEX_PACKING).id == 1
    workers[0].committed_until = 0.06
    assert find_available_worker(r, workers, 0.0, BOTH, DispatchPolicy.INDEX_PACKING).id == 2


def test_efficient_first_beats_packing_and_rotation_on_bursty_load():
    trace = bursty_trace()
    efficiency = {}
    for policy in DispatchPolicy:
        scheduler = SporkScheduler(SporkObjective(SporkMode.ENERGY))
        scheduler.policy = policy
        report = run(trace, SimConfig(), scheduler)
        assert report.deadline_misses == 0
        efficiency[policy] = report.efficiency_pct
    assert efficiency[DispatchPolicy.EFFICIENT_FIRST] >= efficiency[DispatchPolicy.INDEX_PACKING] - 1.0
    assert efficiency[DispatchPolicy.EFFICIENT_FIRST] > efficiency[DispatchPolicy.ROUND_ROBIN] + 3.0
