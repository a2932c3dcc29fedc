# core/spork.py
"""
Spork: per-interval FPGA allocator with a conditional-histogram predictor.

Every T_s the allocator turns the FPGA/CPU service time started during the
previous interval into a needed-FPGA count, files it in a histogram keyed by
the count from two intervals earlier, and allocates for the candidate count
with the lowest expected energy, cost, or weighted blend of the two.
Requests are dispatched efficient-first with reactive CPU spin-up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import ParameterError
from core.model import SECONDS_PER_HOUR, Request, Worker, WorkerClass, WorkerClassParams, request_columns
from core.simengine import Scheduler

from core.log import get_logger

logger = get_logger(__name__)


class SporkMode(str, Enum):
    ENERGY = "energy"
    COST = "cost"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class SporkObjective:
    mode: SporkMode = SporkMode.ENERGY
    alpha: float = 0.5
    ideal_prediction: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", SporkMode(self.mode))
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"spork alpha must be in [0, 1], got {self.alpha}")

    @property
    def weight(self) -> float:
        """Share of the objective given to energy."""
        if self.mode == SporkMode.ENERGY:
            return 1.0
        if self.mode == SporkMode.COST:
            return 0.0
        return self.alpha


def normalizers(fpga: WorkerClassParams, T_s: float) -> Tuple[float, float]:
    """(joules, dollars) of one busy FPGA-interval."""
    return fpga.busy_power * T_s, fpga.price_per_hour * T_s / SECONDS_PER_HOUR


def breakeven_threshold(cpu: WorkerClassParams, fpga: WorkerClassParams, T_s: float,
                        objective: SporkObjective | SporkMode | str = SporkMode.ENERGY) -> float:
    """Residual FPGA-seconds per interval above which one more FPGA pays off."""
    if not isinstance(objective, SporkObjective):
        objective = SporkObjective(SporkMode(objective))
    S = fpga.speedup
    energy_den = cpu.busy_power - (fpga.busy_power - fpga.idle_power) / S
    alpha = objective.weight
    if alpha > 0 and energy_den <= 0:
        raise ParameterError(
            "FPGA is never less efficient than a CPU with these parameters "
            f"(B_c - (B_f - I_f)/S = {energy_den:.6g}); round FPGA counts up instead"
        )

    if alpha == 1.0:
        t_b = T_s * fpga.idle_power / energy_den
    elif alpha == 0.0:
        cost_den = S * cpu.price_per_hour
        t_b = T_s if cost_den <= 0 else T_s * fpga.price_per_hour / cost_den
    else:
        rho_e, rho_c = normalizers(fpga, T_s)
        den = (alpha * energy_den / rho_e
               + (1 - alpha) * S * cpu.price_per_hour / SECONDS_PER_HOUR / rho_c)
        num = (alpha * T_s * fpga.idle_power / rho_e
               + (1 - alpha) * T_s * fpga.price_per_hour / SECONDS_PER_HOUR / rho_c)
        t_b = num / den
    return min(max(t_b, 0.0), T_s)


def needed_fpgas(fpga_s: float, cpu_s: float, speedup: float, T_s: float, T_b: float) -> int:
    lam = fpga_s + cpu_s / speedup
    n = int(lam // T_s)
    if lam - n * T_s > T_b:
        n += 1
    return n


class HistogramMap:
    """Histograms of needed counts, keyed by the count two intervals earlier."""

    def __init__(self):
        self._counts: Dict[int, Dict[int, int]] = {}
        self.version: Dict[int, int] = {}

    def __contains__(self, key: int) -> bool:
        return key in self._counts

    def add(self, key: int, value: int) -> None:
        bins = self._counts.setdefault(key, {})
        bins[value] = bins.get(value, 0) + 1
        self.version[key] = self.version.get(key, 0) + 1

    def frequencies(self, key: int) -> Dict[int, float]:
        bins = self._counts.get(key, {})
        total = sum(bins.values())
        return {v: c / total for v, c in sorted(bins.items())}


class LifetimeMap:
    """Running mean FPGA lifetime, keyed by how many FPGAs existed at request time."""

    def __init__(self):
        self._mean: Dict[int, float] = {}
        self._n: Dict[int, int] = {}

    def observe(self, context: int, lifetime: float) -> None:
        n = self._n.get(context, 0) + 1
        mean = self._mean.get(context, 0.0)
        self._mean[context] = mean + (lifetime - mean) / n
        self._n[context] = n

    def mean(self, context: int) -> Optional[float]:
        return self._mean.get(context)

    def epochs(self, context: int, T_s: float) -> int:
        mean = self._mean.get(context)
        if mean is None or mean <= 0:
            return 1
        return max(1, math.ceil(mean / T_s))


def energy_scores(freqs: Dict[int, float], candidates: np.ndarray,
                  cpu: WorkerClassParams, fpga: WorkerClassParams, T_s: float) -> np.ndarray:
    """Expected joules per interval for each candidate count (no spin-up term)."""
    n = np.array(list(freqs.keys()), dtype=float)[None, :]
    p = np.array(list(freqs.values()), dtype=float)[None, :]
    nh = candidates.astype(float)[:, None]
    over = (nh - n) * fpga.idle_power + n * fpga.busy_power
    under = nh * fpga.busy_power + (n - nh) * fpga.speedup * cpu.busy_power
    per = np.where(nh >= n, over, under)
    return (per * p).sum(axis=1) * T_s


def cost_scores(freqs: Dict[int, float], candidates: np.ndarray,
                cpu: WorkerClassParams, fpga: WorkerClassParams, T_s: float) -> np.ndarray:
    """Expected dollars per interval for each candidate count (no spin-up term)."""
    cf = fpga.price_per_hour * T_s / SECONDS_PER_HOUR
    cc = cpu.price_per_hour * T_s / SECONDS_PER_HOUR
    n = np.array(list(freqs.keys()), dtype=float)[None, :]
    p = np.array(list(freqs.values()), dtype=float)[None, :]
    nh = candidates.astype(float)[:, None]
    per = nh * cf + np.maximum(n - nh, 0.0) * fpga.speedup * cc
    return (per * p).sum(axis=1)


class Predictor:
    """Scores candidate FPGA counts; histogram terms are cached until that key changes."""

    def __init__(self, cpu: WorkerClassParams, fpga: WorkerClassParams, T_s: float,
                 objective: SporkObjective):
        self.cpu, self.fpga, self.T_s = cpu, fpga, T_s
        self.objective = objective
        self.rho_e, self.rho_c = normalizers(fpga, T_s)
        self._cache: Dict[int, Tuple[int, np.ndarray, np.ndarray]] = {}

    def _blend(self, energy: np.ndarray, cost: np.ndarray) -> np.ndarray:
        a = self.objective.weight
        if a == 1.0:
            return energy
        if a == 0.0:
            return cost
        return a * energy / self.rho_e + (1 - a) * cost / self.rho_c

    def _histogram_scores(self, hist: HistogramMap, key: int) -> Tuple[np.ndarray, np.ndarray]:
        version = hist.version.get(key, 0)
        hit = self._cache.get(key)
        if hit is not None and hit[0] == version:
            return hit[1], hit[2]
        freqs = hist.frequencies(key)
        candidates = np.arange(min(freqs), max(freqs) + 1)
        scores = self._blend(energy_scores(freqs, candidates, self.cpu, self.fpga, self.T_s),
                             cost_scores(freqs, candidates, self.cpu, self.fpga, self.T_s))
        self._cache[key] = (version, candidates, scores)
        return candidates, scores

    def spin_up_term(self, candidate: int, n_curr: int, lifetimes: LifetimeMap) -> float:
        if candidate <= n_curr:
            return 0.0
        e_one = self.fpga.busy_power * self.fpga.spin_up_latency
        c_one = self.fpga.price_per_second * self.fpga.spin_up_latency
        energy = cost = 0.0
        for ctx in range(n_curr, candidate):
            epochs = lifetimes.epochs(ctx, self.T_s)
            energy += e_one / epochs
            cost += c_one / epochs
        return float(self._blend(np.array(energy), np.array(cost)))

    def predict(self, hist: HistogramMap, lifetimes: LifetimeMap, n_prev: int, n_curr: int,
                include_spin_up: bool = True) -> int:
        if n_prev not in hist:
            return n_prev
        candidates, scores = self._histogram_scores(hist, n_prev)
        best, best_score = int(candidates[0]), math.inf
        for cand, base in zip(candidates.tolist(), scores.tolist()):
            score = base + (self.spin_up_term(cand, n_curr, lifetimes) if include_spin_up else 0.0)
            if score < best_score:
                best, best_score = cand, score
        return best


def predict_fpgas(hist: HistogramMap, lifetimes: LifetimeMap, n_prev: int, n_curr: int,
                  cpu: WorkerClassParams, fpga: WorkerClassParams, T_s: float,
                  objective: SporkObjective = SporkObjective()) -> int:
    return Predictor(cpu, fpga, T_s, objective).predict(hist, lifetimes, n_prev, n_curr)


@dataclass
class AllocatorState:
    needed: List[int] = field(default_factory=list)
    fpga_s: float = 0.0
    cpu_s: float = 0.0
    allocations: List[int] = field(default_factory=list)


def interval_demand(requests: Sequence[Request], fpga: WorkerClassParams, T_s: float, horizon: float) -> np.ndarray:
    """FPGA-seconds of work arriving in each interval, from full trace knowledge."""
    n = max(int(math.ceil(horizon / T_s)), 1) + 2
    demand = np.zeros(n)
    if len(requests):
        arr, base, _ = request_columns(requests)
        size = base / fpga.speedup
        idx = np.minimum((arr // T_s).astype(int), n - 1)
        np.add.at(demand, idx, size)
    return demand


class SporkScheduler(Scheduler):
    periodic = True

    def __init__(self, objective: SporkObjective = SporkObjective(), name: Optional[str] = None):
        self.objective = objective
        self.name = name or {
            SporkMode.ENERGY: "sporkE", SporkMode.COST: "sporkC", SporkMode.WEIGHTED: "sporkB",
        }[objective.mode] + ("-ideal" if objective.ideal_prediction else "")
        self.state = AllocatorState()
        self.histograms = HistogramMap()
        self.lifetimes = LifetimeMap()

    def bind(self, trace, config) -> None:
        super().bind(trace, config)
        self.T_s = config.T_s
        self.T_b = breakeven_threshold(config.cpu, config.fpga, self.T_s, self.objective)
        self.predictor = Predictor(config.cpu, config.fpga, self.T_s, self.objective)
        self.demand = (interval_demand(trace.requests, config.fpga, self.T_s, trace.horizon)
                       if self.objective.ideal_prediction else None)
        logger.debug("%s: T_s=%.4gs T_b=%.4gs", self.name, self.T_s, self.T_b)

    def on_request_start(self, worker: Worker, request: Request, now: float) -> None:
        service = worker.params.service_time(request.base_size)
        if worker.cls == WorkerClass.FPGA:
            self.state.fpga_s += service
        else:
            self.state.cpu_s += service

    def on_worker_dead(self, worker: Worker, now: float) -> None:
        if worker.cls == WorkerClass.FPGA:
            self.lifetimes.observe(worker.alloc_context, now - worker.alloc_start)

    def target(self, index: int, n_prev: int, n_curr: int) -> int:
        if self.objective.ideal_prediction:
            nxt = min(index + 1, len(self.demand) - 1)
            return needed_fpgas(self.demand[nxt], 0.0, self.config.fpga.speedup, self.T_s, self.T_b)
        return self.predictor.predict(self.histograms, self.lifetimes, n_prev, n_curr)

    def on_tick(self, sim, index: int) -> None:
        st = self.state
        n_prev = 0
        if index >= 1:
            n_prev = needed_fpgas(st.fpga_s, st.cpu_s, self.config.fpga.speedup, self.T_s, self.T_b)
            st.needed.append(n_prev)
            if len(st.needed) >= 3:
                self.histograms.add(st.needed[-3], st.needed[-1])
        n_curr = sim.allocated(WorkerClass.FPGA)
        n_next = self.target(index, n_prev, n_curr)
        new = max(n_next - n_curr, 0)
        if new:
            sim.allocate_worker(WorkerClass.FPGA, new)
        st.allocations.append(new)
        st.fpga_s = st.cpu_s = 0.0
