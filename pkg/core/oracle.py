# core/oracle.py
"""
Rate-based MILP oracle over scheduling intervals.

The exact solver is a dynamic program over integer FPGA allocations Y^f; the
busy fractions and the CPU allocation follow in closed form for each Y^f.
Instances outside the exact envelope can be written out with
core.lp_format.emit_lp and handed to an external solver.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.errors import EnvelopeError, InfeasibleError, ParameterError
from core.log import get_logger
from core.model import SECONDS_PER_HOUR, WorkerClass, WorkerClassParams
from core.tracegen import ArrivalTrace, RateTrace, expected_count

logger = get_logger(__name__)

MAX_FPGAS = 12
MAX_INTERVALS = 48
_TOL = 1e-9


@dataclass(frozen=True)
class MilpInstance:
    X: np.ndarray
    a_c: float
    a_f: float
    eb_c: float
    eb_f: float
    ei_c: float
    ei_f: float
    r_c: float
    r_f: float
    c_c: float = 0.0
    c_f: float = 0.0
    d_c: float = 0.0
    d_f: float = 0.0
    n_c: float = math.inf
    n_f: int = MAX_FPGAS
    spinup: int = 1
    w_e: float = 1.0
    w_c: float = 0.0
    rate_mode: str = "eq"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        object.__setattr__(self, "X", X)
        if np.any(X < 0) or not np.all(np.isfinite(X)):
            raise ParameterError("oracle demand X must be finite and >= 0")
        if self.r_c <= 0 or self.r_f <= 0:
            raise ParameterError("oracle rates r^c, r^f must be > 0")
        energies = (self.a_c, self.a_f, self.eb_c, self.eb_f, self.ei_c, self.ei_f,
                    self.c_c, self.c_f, self.d_c, self.d_f, self.w_e, self.w_c)
        if min(energies) < 0 or self.n_c < 0 or self.n_f < 0 or self.spinup < 0:
            raise ParameterError("oracle parameters must be >= 0")
        if self.rate_mode not in ("eq", "ge"):
            raise ParameterError(f"rate_mode must be 'eq' or 'ge', got {self.rate_mode!r}")

    @property
    def T(self) -> int:
        return int(self.X.shape[-1])

    def weighted(self, alpha: float) -> "MilpInstance":
        """Blend energy and cost, each normalized by one busy FPGA-interval."""
        if not 0.0 <= alpha <= 1.0:
            raise ParameterError(f"alpha must be in [0, 1], got {alpha}")
        w_e = alpha / self.eb_f if self.eb_f > 0 else alpha
        w_c = (1.0 - alpha) / self.c_f if self.c_f > 0 else (1.0 - alpha)
        return replace(self, w_e=w_e, w_c=w_c)


@dataclass
class MilpSolution:
    yf: np.ndarray
    yc: np.ndarray
    bf: np.ndarray
    bc: np.ndarray
    energy: Dict[str, float]
    cost_usd: float
    w_e: float
    w_c: float

    @property
    def energy_j(self) -> float:
        return sum(self.energy.values())

    def breakdown(self) -> Dict[str, float]:
        terms = {k: self.w_e * v for k, v in self.energy.items()}
        terms["cost"] = self.w_c * self.cost_usd
        return terms

    @property
    def objective(self) -> float:
        return sum(self.breakdown().values())


def instance_from_params(X: Sequence[float], cpu: WorkerClassParams, fpga: WorkerClassParams,
                         interval_s: float, base_size: float, **overrides) -> MilpInstance:
    """Per-interval energies, rates and prices from worker parameters."""
    if interval_s <= 0 or base_size <= 0:
        raise ParameterError("interval and request size must be > 0")
    r_c = interval_s * cpu.speedup / base_size
    fields = dict(
        X=np.asarray(X, dtype=float),
        a_c=cpu.busy_power * cpu.spin_up_latency,
        a_f=fpga.busy_power * fpga.spin_up_latency,
        eb_c=cpu.busy_power * interval_s,
        eb_f=fpga.busy_power * interval_s,
        ei_c=cpu.idle_power * interval_s,
        ei_f=fpga.idle_power * interval_s,
        r_c=r_c,
        r_f=r_c * fpga.speedup / cpu.speedup,
        c_c=cpu.price_per_hour * interval_s / SECONDS_PER_HOUR,
        c_f=fpga.price_per_hour * interval_s / SECONDS_PER_HOUR,
        spinup=max(0, math.ceil(fpga.spin_up_latency / interval_s - _TOL)),
    )
    fields.update(overrides)
    return MilpInstance(**fields)


def motivation_instance(X: Sequence[float], interval_s: float = 10.0, base_size: float = 0.01,
                        **overrides) -> MilpInstance:
    return instance_from_params(X, WorkerClassParams.cpu_default(), WorkerClassParams.fpga_default(),
                                interval_s, base_size, **overrides)


def demand_from_arrivals(trace: ArrivalTrace, interval_s: float) -> np.ndarray:
    T = max(1, math.ceil(trace.horizon / interval_s - _TOL))
    X = np.zeros(T)
    if len(trace):
        arrival, _, _ = trace.columns()
        idx = (arrival // interval_s).astype(int)
        np.add.at(X, np.minimum(idx, T - 1), 1.0)
    return X


def demand_from_rates(rates: RateTrace, interval_s: float) -> np.ndarray:
    T = max(1, math.ceil(rates.duration / interval_s - _TOL))
    edges = [expected_count(rates, min(k * interval_s, rates.duration)) if k else 0.0 for k in range(T + 1)]
    return np.maximum(np.diff(edges), 0.0)


def restrict_homogeneous(instance: MilpInstance, cls: WorkerClass | str) -> MilpInstance:
    """Keep only `cls` workers by zeroing the other class's ceiling."""
    cls = WorkerClass(cls)
    return replace(instance, n_c=0.0) if cls == WorkerClass.FPGA else replace(instance, n_f=0)


# -----------------------
# Evaluation of a fixed Y^f sequence
# -----------------------
def _inner(inst: MilpInstance, t: int, yf: int) -> Tuple[float, float]:
    """Optimal (B^f, B^c) for interval t given Y^f."""
    x = inst.X[t]
    bf = min(float(yf), x / inst.r_f)
    if inst.rate_mode == "ge" and inst.w_e * (inst.eb_f - inst.ei_f) < 0:
        bf = float(yf)
    bc = max(x - inst.r_f * bf, 0.0) / inst.r_c
    return bf, bc


def _window_ok(inst: MilpInstance, yf: Sequence[int]) -> bool:
    S = inst.spinup
    prev = [0] + list(yf)
    deltas = [max(prev[i + 1] - prev[i], 0) for i in range(len(yf))]
    for t in range(S, len(yf)):
        if sum(deltas[t - S:t + 1]) > yf[t]:
            return False
    return True


def evaluate_schedule(inst: MilpInstance, yf: Sequence[int],
                      busy_f: Optional[Sequence[float]] = None) -> Optional[MilpSolution]:
    """Energy/cost of a Y^f sequence; None if infeasible.

    B^f defaults to the closed-form FPGA-first fill. An explicit `busy_f` must keep
    0 <= B^f_t <= Y^f_t; the CPUs take whatever demand the FPGAs leave.
    """
    T = inst.T
    if len(yf) != T or any(y < 0 or y > inst.n_f for y in yf) or not _window_ok(inst, yf):
        return None
    if busy_f is not None and (len(busy_f) != T or any(b < -_TOL or b > y + _TOL for b, y in zip(busy_f, yf))):
        return None
    bf = np.zeros(T)
    bc = np.zeros(T)
    for t in range(T):
        if busy_f is None:
            bf[t], bc[t] = _inner(inst, t, yf[t])
        else:
            bf[t] = min(max(float(busy_f[t]), 0.0), float(yf[t]))
            if inst.rate_mode == "eq" and inst.r_f * bf[t] > inst.X[t] * (1 + _TOL) + _TOL:
                return None
            bc[t] = max(inst.X[t] - inst.r_f * bf[t], 0.0) / inst.r_c
        if bc[t] > inst.n_c + _TOL:
            return None
    yf_arr = np.asarray(yf, dtype=float)
    yc = bc.copy()
    pad_f = np.concatenate([[0.0], yf_arr, [0.0]])
    pad_c = np.concatenate([[0.0], yc, [0.0]])
    up_f, down_f = np.maximum(np.diff(pad_f), 0), np.maximum(-np.diff(pad_f), 0)
    up_c, down_c = np.maximum(np.diff(pad_c), 0), np.maximum(-np.diff(pad_c), 0)
    energy = {
        "alloc_j": float(inst.a_f * up_f.sum() + inst.a_c * up_c.sum()),
        "dealloc_j": float(inst.d_f * down_f.sum() + inst.d_c * down_c.sum()),
        "busy_j": float(inst.eb_f * bf.sum() + inst.eb_c * bc.sum()),
        "idle_j": float(inst.ei_f * (yf_arr - bf).sum() + inst.ei_c * (yc - bc).sum()),
    }
    cost = float(inst.c_f * yf_arr.sum() + inst.c_c * yc.sum())
    return MilpSolution(yf_arr.astype(int), yc, bf, bc, energy, cost, inst.w_e, inst.w_c)


# -----------------------
# Exact solver
# -----------------------
def check_envelope(inst: MilpInstance) -> None:
    if inst.X.ndim != 1:
        raise EnvelopeError("the exact solver handles one application; use --emit-lp for several")
    if inst.n_f > MAX_FPGAS or inst.T > MAX_INTERVALS or inst.spinup not in (0, 1):
        raise EnvelopeError(
            f"instance outside the exact solver's range (N_f={inst.n_f} <= {MAX_FPGAS}, "
            f"T={inst.T} <= {MAX_INTERVALS}, spin-up={inst.spinup} in {{0, 1}}); "
            "write it with --emit-lp and use an external solver"
        )
    keep_idle = inst.w_e * inst.ei_c + inst.w_c * inst.c_c
    if keep_idle < inst.w_e * (inst.a_c + inst.d_c):
        raise EnvelopeError(
            "keeping a CPU idle for one interval is cheaper than releasing and re-allocating it; "
            "the closed-form CPU allocation is not exact here, use --emit-lp"
        )
    if inst.n_f > 0 and inst.n_c > 0:
        # a request moved from a held FPGA to a CPU must not lower the objective
        fpga_marginal = inst.w_e * (inst.eb_f - inst.ei_f) / inst.r_f
        cpu_marginal = (inst.w_e * (inst.eb_c - inst.a_c - inst.d_c) + inst.w_c * inst.c_c) / inst.r_c
        if fpga_marginal > cpu_marginal + _TOL * max(1.0, abs(cpu_marginal)):
            raise EnvelopeError(
                f"a request costs {fpga_marginal:.6g} on an allocated FPGA but only {cpu_marginal:.6g} "
                "on a CPU; filling FPGAs first is not optimal here, use --emit-lp"
            )


def check_capacity(inst: MilpInstance) -> None:
    cap = inst.r_f * inst.n_f + inst.r_c * inst.n_c
    for t, x in enumerate(inst.X):
        if x > cap * (1 + _TOL):
            raise InfeasibleError(
                f"interval {t}: demand {x:.6g} exceeds capacity {cap:.6g} requests/interval", interval=t
            )


def solve_exact(inst: MilpInstance) -> MilpSolution:
    """Minimum-objective schedule; among ties the lexicographically smallest Y^f wins."""
    check_envelope(inst)
    check_capacity(inst)
    T, S, N = inst.T, inst.spinup, inst.n_f
    if T == 0:
        return evaluate_schedule(inst, [])

    inner = [[_inner(inst, t, y) for y in range(N + 1)] for t in range(T)]
    we, wc = inst.w_e, inst.w_c

    def bc_of(t: int, y: int) -> float:
        return 0.0 if t < 0 or t >= T else inner[t][y][1]

    def step(t: int, prev: int, cur: int) -> float:
        """Objective of interval t plus the transition into it."""
        if t == T:
            bf = bc = 0.0
        else:
            bf, bc = inner[t][cur]
            if bc > inst.n_c + _TOL:
                return math.inf
        pbc = bc_of(t - 1, prev)
        e = (inst.a_f * max(cur - prev, 0) + inst.d_f * max(prev - cur, 0)
             + inst.a_c * max(bc - pbc, 0.0) + inst.d_c * max(pbc - bc, 0.0)
             + inst.eb_f * bf + inst.ei_f * (cur - bf) + inst.eb_c * bc)
        return we * e + wc * (inst.c_f * cur + inst.c_c * bc)

    states = list(itertools.product(range(N + 1), repeat=S + 1))
    value: Dict[Tuple[int, ...], float] = {s: step(T, s[-1], 0) for s in states}
    choice: List[Dict[Tuple[int, ...], int]] = [dict() for _ in range(T)]
    for t in range(T - 1, -1, -1):
        nxt: Dict[Tuple[int, ...], float] = {}
        for s in states:
            best, best_y = math.inf, -1
            for y in range(N + 1):
                if t >= S and S > 0:
                    window = list(s) + [y]
                    rise = sum(max(window[i + 1] - window[i], 0) for i in range(len(window) - 1))
                    if rise > y:
                        continue
                v = step(t, s[-1], y)
                if v == math.inf:
                    continue
                v += value[s[1:] + (y,)]
                if v < best - _TOL * max(1.0, abs(best) if best < math.inf else 1.0):
                    best, best_y = v, y
            nxt[s] = best
            choice[t][s] = best_y
        value = nxt

    start = (0,) * (S + 1)
    if value[start] == math.inf:
        raise InfeasibleError("no allocation sequence satisfies every constraint")
    seq, s = [], start
    for t in range(T):
        y = choice[t][s]
        seq.append(y)
        s = s[1:] + (y,)
    sol = evaluate_schedule(inst, seq)
    logger.debug("oracle: T=%d objective=%.6g Y^f=%s", T, sol.objective, seq)
    return sol


def _busy_candidates(inst: MilpInstance, t: int, yf: int, grid: int) -> List[float]:
    top = min(float(yf), inst.X[t] / inst.r_f)
    values = {k * top / grid for k in range(grid + 1)}
    values.add(_inner(inst, t, yf)[0])
    return sorted(values)


def solve_brute_force(inst: MilpInstance, grid: int = 4) -> Optional[MilpSolution]:
    """Exhaustive search over every Y^f sequence and a B^f grid per interval; only for tiny instances.

    B^f_t ranges over `grid` equal steps of [0, min(Y^f_t, X_t / r^f)] plus the
    FPGA-first value, independent of the exact solver's inner rule.
    """
    if grid < 1:
        raise ParameterError(f"grid must be >= 1, got {grid}")
    best = None
    for seq in itertools.product(range(inst.n_f + 1), repeat=inst.T):
        yf = list(seq)
        if not _window_ok(inst, yf):
            continue
        per_t = [_busy_candidates(inst, t, y, grid) for t, y in enumerate(yf)]
        for busy in itertools.product(*per_t):
            sol = evaluate_schedule(inst, yf, busy)
            if sol is not None and (best is None or sol.objective < best.objective - _TOL * max(1.0, best.objective)):
                best = sol
    return best


@dataclass
class ParetoPoint:
    alpha: float
    energy_j: float
    cost_usd: float
    solution: MilpSolution = field(repr=False)


def pareto_sweep(inst: MilpInstance, alphas: Sequence[float]) -> List[ParetoPoint]:
    points = []
    for a in sorted(float(x) for x in alphas):
        sol = solve_exact(inst.weighted(a))
        points.append(ParetoPoint(a, sol.energy_j, sol.cost_usd, sol))
        logger.info("pareto alpha=%.3g: energy=%.6g J cost=$%.6g", a, sol.energy_j, sol.cost_usd)
    return points


def compare_platforms(inst: MilpInstance, alphas: Sequence[float]) -> List[Dict[str, object]]:
    """Hybrid vs FPGA-only vs CPU-only pareto points; an infeasible platform is skipped."""
    rows: List[Dict[str, object]] = []
    for platform, variant in (("hybrid", inst),
                              ("fpga-only", restrict_homogeneous(inst, WorkerClass.FPGA)),
                              ("cpu-only", restrict_homogeneous(inst, WorkerClass.CPU))):
        try:
            points = pareto_sweep(variant, alphas)
        except InfeasibleError as exc:
            logger.warning("%s platform infeasible: %s", platform, exc)
            continue
        for p in points:
            rows.append({"platform": platform, "alpha": p.alpha,
                         "energy_j": p.energy_j, "cost_usd": p.cost_usd,
                         "objective": p.solution.objective})
    return rows
