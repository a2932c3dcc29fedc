# core/model.py
"""
Domain types shared by every module: worker parameters, requests, simulated
workers, the energy/cost ledgers and the final report.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, overload

import numpy as np

from core.errors import NotDrainedError, ParameterError

SECONDS_PER_HOUR = 3600.0
DEFAULT_DEADLINE_MULT = 10.0


class WorkerClass(str, Enum):
    CPU = "cpu"
    FPGA = "fpga"


class WorkerState(str, Enum):
    SPINNING_UP = "SpinningUp"
    IDLE = "Idle"
    BUSY = "Busy"
    SPINNING_DOWN = "SpinningDown"
    DEAD = "Dead"


@dataclass(frozen=True)
class WorkerClassParams:
    class_tag: WorkerClass
    spin_up_latency: float
    spin_down_latency: float
    busy_power: float
    idle_power: float
    price_per_hour: float
    speedup: float = 1.0

    def __post_init__(self):
        if self.spin_up_latency < 0 or self.spin_down_latency < 0:
            raise ParameterError(f"{self.class_tag.value}: latencies must be >= 0")
        if not (self.busy_power >= self.idle_power >= 0):
            raise ParameterError(f"{self.class_tag.value}: need busy_power >= idle_power >= 0")
        if self.price_per_hour < 0:
            raise ParameterError(f"{self.class_tag.value}: price_per_hour must be >= 0")
        if self.speedup <= 0:
            raise ParameterError(f"{self.class_tag.value}: speedup must be > 0")

    @classmethod
    def cpu_default(cls) -> "WorkerClassParams":
        return cls(WorkerClass.CPU, 0.005, 0.005, 150.0, 30.0, 0.668, 1.0)

    @classmethod
    def fpga_default(cls) -> "WorkerClassParams":
        return cls(WorkerClass.FPGA, 10.0, 0.1, 50.0, 20.0, 0.982, 2.0)

    def service_time(self, base_size: float) -> float:
        return base_size / self.speedup

    @property
    def price_per_second(self) -> float:
        return self.price_per_hour / SECONDS_PER_HOUR


@dataclass(frozen=True)
class Request:
    id: int
    arrival: float
    base_size: float
    deadline: float

    @classmethod
    def make(cls, id: int, arrival: float, base_size: float,
             deadline_mult: float = DEFAULT_DEADLINE_MULT) -> "Request":
        return cls(id, arrival, base_size, arrival + deadline_mult * base_size)


class RequestColumns(Sequence[Request]):
    """Requests held as numpy columns; `Request` objects are built on access.

    Request i has id i. Deadlines are computed once, with the same arithmetic
    as `Request.make`.
    """

    def __init__(self, arrival: np.ndarray, base_size: np.ndarray,
                 deadline_mult: float = DEFAULT_DEADLINE_MULT):
        self.arrival = np.ascontiguousarray(arrival, dtype=float)
        self.base_size = np.ascontiguousarray(np.broadcast_to(base_size, self.arrival.shape), dtype=float)
        self.deadline = self.arrival + deadline_mult * self.base_size

    def __len__(self) -> int:
        return len(self.arrival)

    @overload
    def __getitem__(self, i: int) -> Request: ...

    @overload
    def __getitem__(self, i: slice) -> List[Request]: ...

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        return Request(i, float(self.arrival[i]), float(self.base_size[i]), float(self.deadline[i]))

    def __iter__(self):
        for i, (a, s, d) in enumerate(zip(self.arrival.tolist(), self.base_size.tolist(), self.deadline.tolist())):
            yield Request(i, a, s, d)


def request_columns(requests: Sequence[Request]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(arrival, base_size, deadline) arrays in request order."""
    if isinstance(requests, RequestColumns):
        return requests.arrival, requests.base_size, requests.deadline
    n = len(requests)
    arrival = np.fromiter((r.arrival for r in requests), dtype=float, count=n)
    size = np.fromiter((r.base_size for r in requests), dtype=float, count=n)
    deadline = np.fromiter((r.deadline for r in requests), dtype=float, count=n)
    return arrival, size, deadline


@dataclass
class Worker:
    id: int
    params: WorkerClassParams
    alloc_start: float
    alloc_context: int = 0
    state: WorkerState = WorkerState.SPINNING_UP
    ready_at: float = 0.0
    idle_since: float = 0.0
    queue: List[Request] = field(default_factory=list)
    committed_until: float = 0.0
    queued_load: float = 0.0
    died_at: Optional[float] = None
    # energy accounting
    last_change: float = 0.0
    energy_j: float = 0.0
    timer_token: int = 0
    pinned: bool = False

    def __post_init__(self):
        self.ready_at = self.alloc_start + self.params.spin_up_latency
        self.committed_until = self.ready_at
        self.last_change = self.alloc_start

    @property
    def cls(self) -> WorkerClass:
        return self.params.class_tag

    @property
    def alive(self) -> bool:
        return self.state not in (WorkerState.SPINNING_DOWN, WorkerState.DEAD)

    def load(self, now: float) -> float:
        """Remaining assigned service time in seconds."""
        if self.state == WorkerState.BUSY:
            return max(self.committed_until - now, 0.0)
        if self.state == WorkerState.SPINNING_UP:
            return self.queued_load
        return 0.0

    def power(self) -> float:
        if self.state == WorkerState.IDLE:
            return self.params.idle_power
        if self.state == WorkerState.DEAD:
            return 0.0
        # spin-up and spin-down draw busy power
        return self.params.busy_power


def _per_class() -> Dict[WorkerClass, float]:
    return {WorkerClass.CPU: 0.0, WorkerClass.FPGA: 0.0}


@dataclass
class EnergyLedger:
    busy_j: Dict[WorkerClass, float] = field(default_factory=_per_class)
    idle_j: Dict[WorkerClass, float] = field(default_factory=_per_class)
    spin_up_j: Dict[WorkerClass, float] = field(default_factory=_per_class)
    spin_down_j: Dict[WorkerClass, float] = field(default_factory=_per_class)

    _BUCKETS = {
        WorkerState.BUSY: "busy_j",
        WorkerState.IDLE: "idle_j",
        WorkerState.SPINNING_UP: "spin_up_j",
        WorkerState.SPINNING_DOWN: "spin_down_j",
    }

    def accrue(self, cls: WorkerClass, state: WorkerState, joules: float) -> None:
        bucket = self._BUCKETS.get(state)
        if bucket is None:
            return
        getattr(self, bucket)[cls] += joules

    def class_total(self, cls: WorkerClass) -> float:
        return self.busy_j[cls] + self.idle_j[cls] + self.spin_up_j[cls] + self.spin_down_j[cls]

    @property
    def total(self) -> float:
        return sum(self.class_total(c) for c in WorkerClass)

    def part(self, bucket: str) -> float:
        return sum(getattr(self, bucket).values())


@dataclass
class CostLedger:
    occupancy_dollars: Dict[WorkerClass, float] = field(default_factory=_per_class)

    def charge(self, worker: Worker, end: float) -> float:
        dollars = worker.params.price_per_hour * (end - worker.alloc_start) / SECONDS_PER_HOUR
        self.occupancy_dollars[worker.cls] += dollars
        return dollars

    @property
    def total(self) -> float:
        return sum(self.occupancy_dollars.values())


@dataclass
class RawLedgers:
    """What a simulation hands to finalize_report."""
    energy: EnergyLedger = field(default_factory=EnergyLedger)
    cost: CostLedger = field(default_factory=CostLedger)
    requests_on: Dict[WorkerClass, int] = field(default_factory=lambda: {c: 0 for c in WorkerClass})
    completed: int = 0
    deadline_misses: int = 0
    spin_ups: Dict[WorkerClass, int] = field(default_factory=lambda: {c: 0 for c in WorkerClass})
    peak: Dict[WorkerClass, int] = field(default_factory=lambda: {c: 0 for c in WorkerClass})
    live_workers: int = 0
    end_time: float = 0.0
    event_hash: str = ""


@dataclass
class SimReport:
    energy: EnergyLedger
    cost: CostLedger
    requests_total: int
    requests_on_fpga: int
    requests_on_cpu: int
    deadline_misses: int
    fpga_spin_ups: int
    cpu_spin_ups: int
    peak_fpgas: int
    peak_cpus: int
    efficiency_pct: float
    relative_cost: float
    ideal_energy_j: float = 0.0
    ideal_cost_usd: float = 0.0
    sim_end_s: float = 0.0
    event_hash: str = ""

    @property
    def energy_total_j(self) -> float:
        return self.energy.total

    @property
    def cost_usd(self) -> float:
        return self.cost.total

    @property
    def cpu_request_pct(self) -> float:
        return 100.0 * self.requests_on_cpu / self.requests_total if self.requests_total else 0.0

    @property
    def idle_energy_pct(self) -> float:
        total = self.energy.total
        return 100.0 * self.energy.part("idle_j") / total if total else 0.0

    def row(self) -> Dict[str, float]:
        return {
            "efficiency_pct": self.efficiency_pct,
            "relative_cost": self.relative_cost,
            "deadline_misses": self.deadline_misses,
            "fpga_spinups": self.fpga_spin_ups,
            "cpu_spinups": self.cpu_spin_ups,
            "energy_busy_j": self.energy.part("busy_j"),
            "energy_idle_j": self.energy.part("idle_j"),
            "energy_spin_j": self.energy.part("spin_up_j") + self.energy.part("spin_down_j"),
            "cost_usd": self.cost.total,
        }


def ideal_reference(requests: Sequence[Request], fpga: WorkerClassParams) -> Tuple[float, float]:
    """Energy and cost of an FPGA-only platform that pays for busy time only."""
    _, sizes, _ = request_columns(requests)
    bad = np.flatnonzero(sizes <= 0)
    if len(bad):
        raise ParameterError(f"request {requests[int(bad[0])].id}: base_size must be > 0")
    busy_s = float(np.sum(sizes / fpga.speedup))
    return busy_s * fpga.busy_power, busy_s * fpga.price_per_second


def finalize_report(raw: RawLedgers, requests: List[Request], fpga: WorkerClassParams) -> SimReport:
    if raw.completed != len(requests) or raw.live_workers != 0:
        raise NotDrainedError(
            f"simulation not drained: {raw.completed}/{len(requests)} requests completed, "
            f"{raw.live_workers} workers still alive"
        )
    ideal_e, ideal_c = ideal_reference(requests, fpga)
    actual_e, actual_c = raw.energy.total, raw.cost.total
    # An empty trace is 100% efficient at zero cost.
    efficiency = 100.0 * ideal_e / actual_e if actual_e > 0 else (100.0 if ideal_e == 0 else math.inf)
    rel_cost = actual_c / ideal_c if ideal_c > 0 else (1.0 if actual_c == 0 else math.inf)
    return SimReport(
        energy=raw.energy,
        cost=raw.cost,
        requests_total=len(requests),
        requests_on_fpga=raw.requests_on[WorkerClass.FPGA],
        requests_on_cpu=raw.requests_on[WorkerClass.CPU],
        deadline_misses=raw.deadline_misses,
        fpga_spin_ups=raw.spin_ups[WorkerClass.FPGA],
        cpu_spin_ups=raw.spin_ups[WorkerClass.CPU],
        peak_fpgas=raw.peak[WorkerClass.FPGA],
        peak_cpus=raw.peak[WorkerClass.CPU],
        efficiency_pct=efficiency,
        relative_cost=rel_cost,
        ideal_energy_j=ideal_e,
        ideal_cost_usd=ideal_c,
        sim_end_s=raw.end_time,
        event_hash=raw.event_hash,
    )
