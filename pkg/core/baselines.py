# core/baselines.py
"""
Comparison schedulers: CPU-dynamic, FPGA-static, FPGA-dynamic and MArk-ideal.

The two FPGA-only baselines are provisioned by simulation: FPGA-static searches
the smallest always-on pool with zero deadline misses, FPGA-dynamic the
smallest headroom multiplier.
"""
from __future__ import annotations

from typing import Callable, Dict, Sequence, Tuple

import numpy as np

from core.dispatch import DispatchPolicy, Fallback
from core.errors import ProvisioningError
from core.log import get_logger
from core.model import Request, WorkerClass
from core.simengine import Scheduler, SimConfig, run
from core.spork import SporkMode, breakeven_threshold, interval_demand, needed_fpgas
from core.tracegen import ArrivalTrace

logger = get_logger(__name__)


class CpuDynamic(Scheduler):
    name = "cpu-dynamic"
    classes = (WorkerClass.CPU,)
    fallback = Fallback.CPU_SPINUP
    periodic = False
    compiled = True


class FpgaStatic(Scheduler):
    """N always-on FPGAs, ready at t = 0, released once the trace is over."""

    name = "fpga-static"
    classes = (WorkerClass.FPGA,)
    fallback = Fallback.EARLIEST
    periodic = False

    def __init__(self, n: int):
        self.n = n

    def initial_workers(self):
        if self.n == 0:
            return []
        return [(WorkerClass.FPGA, self.n, -self.config.fpga.spin_up_latency, True)]


class FpgaDynamic(Scheduler):
    """Needed FPGAs for the demand seen last interval, plus k x delta_max headroom."""

    name = "fpga-dynamic"
    classes = (WorkerClass.FPGA,)
    fallback = Fallback.FPGA_SPINUP
    periodic = True

    def __init__(self, k: int):
        self.k = k
        self.observed = 0.0

    def bind(self, trace, config) -> None:
        super().bind(trace, config)
        self.T_s = config.T_s
        demand = interval_demand(trace.requests, config.fpga, self.T_s, trace.horizon)
        self.delta_max = headroom_delta(demand, self.T_s)
        self.headroom = self.k * self.delta_max
        self.first = needed_fpgas(demand[0], 0.0, config.fpga.speedup, self.T_s, 0.0)

    def initial_workers(self):
        # warm start: interval 0 is served by a pool sized from perfect knowledge
        n = self.first + self.headroom if self.trace.requests else 0
        return [(WorkerClass.FPGA, n, -self.config.fpga.spin_up_latency, False)] if n else []

    def on_arrivals(self, requests: Sequence[Request], now: float) -> None:
        self.observed += sum(self.config.fpga.service_time(r.base_size) for r in requests)

    def on_tick(self, sim, index: int) -> None:
        if index == 0:
            return
        target = needed_fpgas(self.observed, 0.0, self.config.fpga.speedup, self.T_s, 0.0) + self.headroom
        self.observed = 0.0
        new = max(target - sim.allocated(WorkerClass.FPGA), 0)
        if new:
            sim.allocate_worker(WorkerClass.FPGA, new)


class MarkIdeal(Scheduler):
    """Cost-threshold allocation with two intervals of perfect foresight, round-robin dispatch."""

    name = "mark-ideal"
    classes = (WorkerClass.FPGA, WorkerClass.CPU)
    policy = DispatchPolicy.ROUND_ROBIN
    fallback = Fallback.CPU_SPINUP
    periodic = True

    def bind(self, trace, config) -> None:
        super().bind(trace, config)
        self.T_s = config.T_s
        self.T_b = breakeven_threshold(config.cpu, config.fpga, self.T_s, SporkMode.COST)
        self.demand = interval_demand(trace.requests, config.fpga, self.T_s, trace.horizon)

    def _needed(self, index: int) -> int:
        i = min(index, len(self.demand) - 1)
        return needed_fpgas(self.demand[i], 0.0, self.config.fpga.speedup, self.T_s, self.T_b)

    def on_tick(self, sim, index: int) -> None:
        target = min(self._needed(index + 1), self._needed(index + 2))
        new = max(target - sim.allocated(WorkerClass.FPGA), 0)
        if new:
            sim.allocate_worker(WorkerClass.FPGA, new)


def headroom_delta(demand: np.ndarray, T_s: float) -> int:
    """Largest interval-to-interval rise in needed FPGAs (ceil of demand / T_s)."""
    needed = np.ceil(np.asarray(demand, dtype=float) / T_s - 1e-12)
    if needed.size < 2:
        return 0
    return int(max(np.diff(needed).max(), 0))


def _misses(trace: ArrivalTrace, config: SimConfig, scheduler: Scheduler) -> int:
    return run(trace, config, scheduler).deadline_misses


def fpga_static_provision(trace: ArrivalTrace, config: SimConfig, n_max: int = 4096,
                          feasible: Callable[[int], bool] | None = None) -> Tuple[FpgaStatic, int]:
    """Smallest always-on pool with zero deadline misses, by doubling then bisection."""
    if not trace.requests:
        return FpgaStatic(0), 0
    tried: Dict[int, bool] = {}

    def ok(n: int) -> bool:
        if n not in tried:
            tried[n] = feasible(n) if feasible else _misses(trace, config, FpgaStatic(n)) == 0
            logger.debug("fpga-static N=%d -> %s", n, "ok" if tried[n] else "misses")
        return tried[n]

    hi = 1
    while not ok(hi):
        if hi >= n_max:
            raise ProvisioningError(f"fpga-static: no pool of <= {n_max} FPGAs meets every deadline")
        hi = min(hi * 2, n_max)
    lo = hi // 2  # largest known-infeasible (0 is infeasible for a non-empty trace)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    if hi > 1 and ok(hi - 1):
        raise ProvisioningError(f"fpga-static: feasibility is not monotone at N={hi}")
    logger.info("fpga-static provisioned N=%d after %d simulations", hi, len(tried))
    return FpgaStatic(hi), hi


def fpga_dynamic(trace: ArrivalTrace, config: SimConfig, k_max: int = 20) -> Tuple[FpgaDynamic, int]:
    """Smallest headroom multiplier k in 0..k_max with zero deadline misses."""
    for k in range(k_max + 1):
        misses = _misses(trace, config, FpgaDynamic(k))
        logger.debug("fpga-dynamic k=%d -> %d misses", k, misses)
        if misses == 0:
            logger.info("fpga-dynamic provisioned k=%d", k)
            return FpgaDynamic(k), k
    raise ProvisioningError(f"fpga-dynamic: no headroom multiplier <= {k_max} meets every deadline")


def cpu_dynamic() -> CpuDynamic:
    return CpuDynamic()


def mark_ideal() -> MarkIdeal:
    return MarkIdeal()
