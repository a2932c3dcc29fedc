# core/simengine.py
"""
Deterministic discrete-event core.

Events are ordered by (time, kind priority, sequence). Workers move through
SpinningUp -> {Idle, Busy} -> ... -> SpinningDown -> Dead; every transition
accrues the energy of the state being left, and death charges occupancy cost.
Schedulers plug in through the `Scheduler` hooks below.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

from core import fastpath
from core.dispatch import Dispatcher, DispatchPolicy, Fallback, dispatch_pending
from core.errors import ContractViolation, ParameterError
from core.log import get_logger
from core.model import (
    DEFAULT_DEADLINE_MULT,
    RawLedgers,
    Request,
    SimReport,
    Worker,
    WorkerClass,
    WorkerClassParams,
    WorkerState,
    finalize_report,
)
from core.tracegen import ArrivalTrace

logger = get_logger(__name__)


class EventKind(IntEnum):
    # value doubles as the same-timestamp priority
    REQUEST_COMPLETE = 0
    SPIN_DOWN_COMPLETE = 1
    SPIN_UP_COMPLETE = 2
    INTERVAL_TICK = 3
    REQUEST_ARRIVAL = 4
    IDLE_TIMEOUT = 5


_ALLOWED = {
    (WorkerState.SPINNING_UP, WorkerState.IDLE),
    (WorkerState.SPINNING_UP, WorkerState.BUSY),
    (WorkerState.IDLE, WorkerState.BUSY),
    (WorkerState.IDLE, WorkerState.SPINNING_DOWN),
    (WorkerState.BUSY, WorkerState.IDLE),
    (WorkerState.SPINNING_DOWN, WorkerState.DEAD),
}


@dataclass
class SimConfig:
    cpu: WorkerClassParams = field(default_factory=WorkerClassParams.cpu_default)
    fpga: WorkerClassParams = field(default_factory=WorkerClassParams.fpga_default)
    interval_length: Optional[float] = None
    idle_timeout: Dict[WorkerClass, Optional[float]] = field(default_factory=dict)
    deadline_mult: float = DEFAULT_DEADLINE_MULT
    seed: int = 0
    reference_fpga: Optional[WorkerClassParams] = None
    event_log: Optional[str] = None
    keep_events: bool = False
    fast_path: bool = True

    def __post_init__(self):
        if self.interval_length is not None and self.interval_length < self.fpga.spin_up_latency:
            raise ParameterError(
                f"interval {self.interval_length}s is shorter than the FPGA spin-up "
                f"{self.fpga.spin_up_latency}s"
            )
        if self.interval_length is not None and self.interval_length <= 0:
            raise ParameterError("interval length must be > 0")

    @property
    def T_s(self) -> float:
        if self.interval_length is not None:
            return self.interval_length
        return self.fpga.spin_up_latency if self.fpga.spin_up_latency > 0 else 1.0

    def params(self, cls: WorkerClass) -> WorkerClassParams:
        return self.cpu if cls == WorkerClass.CPU else self.fpga

    def timeout(self, cls: WorkerClass) -> float:
        t = self.idle_timeout.get(cls)
        return self.params(cls).spin_up_latency if t is None else t

    @property
    def reference(self) -> WorkerClassParams:
        return self.reference_fpga or WorkerClassParams.fpga_default()


class Scheduler:
    """Allocator / dispatcher hooks the engine calls. Subclasses override what they need."""

    name = "scheduler"
    classes: Tuple[WorkerClass, ...] = (WorkerClass.FPGA, WorkerClass.CPU)
    policy = DispatchPolicy.EFFICIENT_FIRST
    fallback = Fallback.CPU_SPINUP
    periodic = True
    # set by schedulers that core.fastpath can run without the event engine
    compiled = False

    def bind(self, trace: ArrivalTrace, config: SimConfig) -> None:
        self.trace = trace
        self.config = config

    def initial_workers(self) -> List[Tuple[WorkerClass, int, float, bool]]:
        """(class, count, alloc_start, pinned) allocations made before t = 0."""
        return []

    def on_tick(self, sim: "Simulation", index: int) -> None:
        pass

    def on_arrivals(self, requests: Sequence[Request], now: float) -> None:
        pass

    def on_request_start(self, worker: Worker, request: Request, now: float) -> None:
        pass

    def on_worker_dead(self, worker: Worker, now: float) -> None:
        pass

    def make_dispatcher(self) -> Dispatcher:
        return Dispatcher(self.policy, self.classes, self.fallback)


class Simulation:
    def __init__(self, trace: ArrivalTrace, config: SimConfig, scheduler: Scheduler):
        self.trace = trace
        self.config = config
        self.scheduler = scheduler
        self.now = -math.inf
        self.workers: Dict[int, Worker] = {}
        self.current: Dict[int, Request] = {}
        self.raw = RawLedgers()
        self.alive_count = {c: 0 for c in WorkerClass}
        self._live: Dict[WorkerClass, Dict[int, Worker]] = {c: {} for c in WorkerClass}
        self.events: List[Tuple[float, str, int]] = []
        self._heap: list = []
        self._seq = 0
        self._next_arrival = 0
        self._hash = hashlib.sha256()
        self._log = None
        scheduler.bind(trace, config)
        self.dispatcher = scheduler.make_dispatcher()

    # -----------------------
    # Event queue
    # -----------------------
    def _push(self, time: float, kind: EventKind, subject: int, token: int = 0) -> None:
        heapq.heappush(self._heap, (time, int(kind), self._seq, subject, token))
        self._seq += 1

    def _push_next_arrival(self) -> None:
        if self._next_arrival < len(self.trace.requests):
            r = self.trace.requests[self._next_arrival]
            self._push(r.arrival, EventKind.REQUEST_ARRIVAL, self._next_arrival)

    def _record(self, time: float, kind: EventKind, subject: int) -> None:
        line = f"{time!r},{kind.name},{subject}\n"
        self._hash.update(line.encode("ascii"))
        if self._log is not None:
            self._log.write(line)
        if self.config.keep_events:
            self.events.append((time, kind.name, subject))

    # -----------------------
    # Worker lifecycle
    # -----------------------
    def _transition(self, w: Worker, state: WorkerState) -> None:
        if (w.state, state) not in _ALLOWED:
            raise ContractViolation(f"worker {w.id}: illegal transition {w.state.value} -> {state.value}")
        joules = w.power() * (self.now - w.last_change)
        self.raw.energy.accrue(w.cls, w.state, joules)
        w.energy_j += joules
        w.state = state
        w.last_change = self.now
        if state == WorkerState.SPINNING_DOWN:
            self._live[w.cls].pop(w.id, None)

    def allocate_worker(self, cls: WorkerClass, count: int, at_time: Optional[float] = None,
                        pinned: bool = False) -> List[Worker]:
        if count < 0:
            raise ContractViolation(f"scheduler requested {count} {cls.value} workers")
        start = self.now if at_time is None else at_time
        params = self.config.params(cls)
        new = []
        for _ in range(count):
            w = Worker(len(self.workers), params, start, alloc_context=self.alive_count[cls], pinned=pinned)
            self.workers[w.id] = w
            self._live[cls][w.id] = w
            self.alive_count[cls] += 1
            self.raw.live_workers += 1
            self.raw.spin_ups[cls] += 1
            self.raw.peak[cls] = max(self.raw.peak[cls], self.alive_count[cls])
            self._push(w.ready_at, EventKind.SPIN_UP_COMPLETE, w.id)
            new.append(w)
        return new

    def live_workers(self, classes: Optional[Sequence[WorkerClass]] = None) -> List[Worker]:
        """Allocated or spinning-up workers, without walking the dead ones."""
        return [w for c in (classes or tuple(WorkerClass)) for w in self._live[c].values() if w.alive]

    def allocated(self, cls: WorkerClass) -> int:
        """Workers of a class that are allocated or spinning up."""
        return self.alive_count[cls]

    def assign(self, w: Worker, r: Request) -> None:
        if not w.alive:
            raise ContractViolation(f"request {r.id} dispatched to {w.state.value} worker {w.id}")
        service = w.params.service_time(r.base_size)
        w.committed_until = max(self.now, w.ready_at, w.committed_until) + service
        if w.state == WorkerState.IDLE:
            w.timer_token += 1
            self._transition(w, WorkerState.BUSY)
            self._start(w, r)
        else:
            w.queue.append(r)
            w.queued_load += service

    def _start(self, w: Worker, r: Request) -> None:
        self.current[w.id] = r
        self.raw.requests_on[w.cls] += 1
        self.scheduler.on_request_start(w, r, self.now)
        self._push(self.now + w.params.service_time(r.base_size), EventKind.REQUEST_COMPLETE, w.id)

    def _start_next_or_idle(self, w: Worker) -> None:
        if w.queue:
            r = w.queue.pop(0)
            w.queued_load = max(w.queued_load - w.params.service_time(r.base_size), 0.0) if w.queue else 0.0
            if w.state != WorkerState.BUSY:
                self._transition(w, WorkerState.BUSY)
            self._start(w, r)
            return
        self._transition(w, WorkerState.IDLE)
        w.idle_since = self.now
        w.timer_token += 1
        if w.pinned:
            when = max(self.now, self.trace.horizon)
        else:
            when = self.now + self.config.timeout(w.cls)
        self._push(when, EventKind.IDLE_TIMEOUT, w.id, w.timer_token)

    # -----------------------
    # Main loop
    # -----------------------
    def run(self) -> SimReport:
        for cls, count, start, pinned in self.scheduler.initial_workers():
            self.now = start
            self.allocate_worker(cls, count, at_time=start, pinned=pinned)
        if self.scheduler.periodic and self.trace.requests:
            self._push(0.0, EventKind.INTERVAL_TICK, 0)
        self._push_next_arrival()

        if self.config.event_log:
            self._log = open(self.config.event_log, "w", encoding="utf-8", newline="\n")
            self._log.write("time_s,kind,subject\n")
        try:
            while self._heap:
                time, kind, _, subject, token = heapq.heappop(self._heap)
                self.now = time
                self._dispatch_event(EventKind(kind), subject, token)
        finally:
            if self._log is not None:
                self._log.close()

        self.raw.end_time = max(self.now, 0.0)
        self.raw.event_hash = self._hash.hexdigest()
        ref = self.config.reference
        report = finalize_report(self.raw, self.trace.requests, ref)
        logger.debug("%s: %d requests, eff=%.2f%%, rel_cost=%.3f, misses=%d",
                     self.scheduler.name, report.requests_total, report.efficiency_pct,
                     report.relative_cost, report.deadline_misses)
        return report

    def _dispatch_event(self, kind: EventKind, subject: int, token: int) -> None:
        if kind == EventKind.REQUEST_ARRIVAL:
            self._on_arrival(subject)
            return
        if kind == EventKind.INTERVAL_TICK:
            self._record(self.now, kind, subject)
            self.scheduler.on_tick(self, subject)
            nxt = (subject + 1) * self.config.T_s
            if nxt < self.trace.horizon:
                self._push(nxt, EventKind.INTERVAL_TICK, subject + 1)
            return

        w = self.workers[subject]
        if kind == EventKind.IDLE_TIMEOUT:
            if token != w.timer_token or w.state != WorkerState.IDLE:
                return  # cancelled by a later assignment
            self._record(self.now, kind, subject)
            self._transition(w, WorkerState.SPINNING_DOWN)
            self.alive_count[w.cls] -= 1
            self._push(self.now + w.params.spin_down_latency, EventKind.SPIN_DOWN_COMPLETE, w.id)
            return

        self._record(self.now, kind, subject)
        if kind == EventKind.SPIN_UP_COMPLETE:
            self._start_next_or_idle(w)
        elif kind == EventKind.REQUEST_COMPLETE:
            r = self.current.pop(w.id)
            self.raw.completed += 1
            if self.now > r.deadline:
                self.raw.deadline_misses += 1
            self._start_next_or_idle(w)
        elif kind == EventKind.SPIN_DOWN_COMPLETE:
            self._transition(w, WorkerState.DEAD)
            w.died_at = self.now
            self.raw.cost.charge(w, self.now)
            self.raw.live_workers -= 1
            self.scheduler.on_worker_dead(w, self.now)

    def _on_arrival(self, index: int) -> None:
        reqs = self.trace.requests
        batch = [reqs[index]]
        j = index + 1
        while j < len(reqs) and reqs[j].arrival == reqs[index].arrival:
            batch.append(reqs[j])
            j += 1
        self._next_arrival = j
        for r in batch:
            self._record(self.now, EventKind.REQUEST_ARRIVAL, r.id)
        self.scheduler.on_arrivals(batch, self.now)
        dispatch_pending(batch, self, self.dispatcher)
        self._push_next_arrival()


def uses_fast_path(config: SimConfig, scheduler: Scheduler) -> bool:
    return (config.fast_path and scheduler.compiled and fastpath.available()
            and not config.event_log and not config.keep_events
            and scheduler.classes == (WorkerClass.CPU,)
            and scheduler.policy == DispatchPolicy.EFFICIENT_FIRST
            and scheduler.fallback == Fallback.CPU_SPINUP)


def run(trace: ArrivalTrace, config: SimConfig, scheduler: Scheduler) -> SimReport:
    if uses_fast_path(config, scheduler):
        scheduler.bind(trace, config)
        return fastpath.cpu_dynamic_report(trace, config)
    return Simulation(trace, config, scheduler).run()
