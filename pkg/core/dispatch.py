# core/dispatch.py
"""
Request dispatch: pick a live worker that still meets the request's deadline,
otherwise fall back to spinning one up.
"""
from __future__ import annotations

from enum import Enum
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from core.model import Request, Worker, WorkerClass, WorkerState


class DispatchPolicy(str, Enum):
    EFFICIENT_FIRST = "efficient-first"
    INDEX_PACKING = "index-packing"
    ROUND_ROBIN = "round-robin"


class Fallback(str, Enum):
    CPU_SPINUP = "cpu-spinup"     # hybrid and CPU-only schedulers
    EARLIEST = "earliest"         # fixed FPGA pool: queue on the earliest free FPGA
    FPGA_SPINUP = "fpga-spinup"   # earliest FPGA, or a new one if that starts sooner


def start_time(w: Worker, now: float) -> float:
    return max(now, w.ready_at, w.committed_until)


def can_meet_deadline(w: Worker, r: Request, now: float) -> bool:
    return start_time(w, now) + w.params.service_time(r.base_size) <= r.deadline


def _load_key(now: float) -> Callable[[Worker], Tuple[float, int]]:
    return lambda w: (-w.load(now), w.id)


def _first_feasible(r: Request, workers: Iterable[Worker], now: float,
                    key: Callable[[Worker], tuple]) -> Optional[Worker]:
    """The worker with the smallest key among those that meet r's deadline.

    Equivalent to sorting by key and taking the first feasible worker, in one pass.
    """
    best, best_key = None, None
    for w in workers:
        if can_meet_deadline(w, r, now):
            k = key(w)
            if best is None or k < best_key:
                best, best_key = w, k
    return best


def _efficient_first(r: Request, workers: Sequence[Worker], classes: Sequence[WorkerClass],
                     now: float) -> Optional[Worker]:
    groups: Dict[Tuple[WorkerClass, WorkerState], List[Worker]] = {}
    for w in workers:
        groups.setdefault((w.cls, w.state), []).append(w)
    order = (
        (WorkerState.BUSY, _load_key(now)),
        (WorkerState.IDLE, lambda w: (-w.idle_since, w.id)),
        (WorkerState.SPINNING_UP, lambda w: (-w.queued_load, w.id)),
    )
    for cls in classes:
        for state, key in order:
            w = _first_feasible(r, groups.get((cls, state), ()), now, key)
            if w is not None:
                return w
    return None


def find_available_worker(r: Request, workers: Iterable[Worker], now: float,
                          classes: Sequence[WorkerClass] = (WorkerClass.FPGA, WorkerClass.CPU),
                          policy: DispatchPolicy = DispatchPolicy.EFFICIENT_FIRST,
                          rr_next_id: int = 0) -> Optional[Worker]:
    """First worker in policy order that can still meet r's deadline, else None."""
    live = [w for w in workers if w.alive and w.cls in classes]
    if policy == DispatchPolicy.EFFICIENT_FIRST:
        return _efficient_first(r, live, classes, now)
    if policy == DispatchPolicy.INDEX_PACKING:
        return _first_feasible(r, live, now, _load_key(now))
    # round robin: ids from rr_next_id upward, then wrap around
    return _first_feasible(r, live, now, lambda w: (w.id < rr_next_id, w.id))


class Dispatcher:
    def __init__(self, policy: DispatchPolicy, classes: Tuple[WorkerClass, ...], fallback: Fallback):
        self.policy = DispatchPolicy(policy)
        self.classes = tuple(classes)
        self.fallback = Fallback(fallback)
        self.rr_next_id = 0

    def choose(self, r: Request, sim) -> Worker:
        live = sim.live_workers(self.classes)
        w = find_available_worker(r, live, sim.now, self.classes, self.policy, self.rr_next_id)
        if w is None:
            w = self._fallback(r, live, sim)
        if self.policy == DispatchPolicy.ROUND_ROBIN:
            self.rr_next_id = w.id + 1
        return w

    def _fallback(self, r: Request, live: List[Worker], sim) -> Worker:
        if self.fallback == Fallback.CPU_SPINUP:
            return sim.allocate_worker(WorkerClass.CPU, 1)[0]
        earliest = min(live, key=lambda w: (start_time(w, sim.now), w.id), default=None)
        if earliest is None:
            return sim.allocate_worker(self.classes[0], 1)[0]
        if self.fallback == Fallback.FPGA_SPINUP:
            fresh_start = sim.now + sim.config.fpga.spin_up_latency
            if fresh_start < start_time(earliest, sim.now):
                return sim.allocate_worker(WorkerClass.FPGA, 1)[0]
        return earliest


def dispatch_pending(requests: Sequence[Request], sim, dispatcher: Dispatcher) -> List[Tuple[int, int]]:
    """Assign a same-time batch in deadline order. Returns (request id, worker id) pairs."""
    placed = []
    for r in sorted(requests, key=lambda q: q.deadline):
        w = dispatcher.choose(r, sim)
        sim.assign(w, r)
        placed.append((r.id, w.id))
    return placed
