# core/fastpath.py
"""
Compiled event loop for CPU-dynamic runs.

A homogeneous CPU pool with efficient-first dispatch and reactive spin-up is
the one scheduler whose hot loop is pure bookkeeping, so it runs here as a
numba kernel over the trace columns. Event order (time, kind priority, push
sequence), floating-point accrual order and dispatch keys are the ones
core.simengine uses; the reports agree with the engine's. The event hash is a
64-bit FNV-1a digest of (time, kind, subject) instead of the engine's text
log, so it is stable across runs but differs from an engine run's hash.
"""
from __future__ import annotations

import hashlib
import heapq
import math
from typing import TYPE_CHECKING

import numpy as np

from core.log import get_logger
from core.model import RawLedgers, SimReport, WorkerClass, WorkerState, finalize_report

try:
    from numba import njit
except ImportError:  # the event engine handles every run
    njit = None

if TYPE_CHECKING:
    from core.simengine import SimConfig
    from core.tracegen import ArrivalTrace

logger = get_logger(__name__)

# event kinds, same values and priorities as simengine.EventKind
_COMPLETE, _SPIN_DOWN, _SPIN_UP, _ARRIVAL, _TIMEOUT = 0, 1, 2, 4, 5
# worker states
_UP, _IDLE, _BUSY, _DOWN, _DEAD = 0, 1, 2, 3, 4

_FNV_OFFSET = 14695981039346656037
_FNV_PRIME = 1099511628211


def available() -> bool:
    return njit is not None


def _grown(a, cap):
    out = np.empty(cap, a.dtype)
    out[:len(a)] = a
    return out


def _mix(h, bits):
    return (h ^ bits) * np.uint64(_FNV_PRIME)


def _cpu_dynamic_kernel(arrival, service, deadline, order,
                        spin_up, spin_down, busy_p, idle_p, price_h, timeout):
    n = len(arrival)
    cap = 64
    state = np.zeros(cap, np.int64)
    ready_at = np.zeros(cap)
    committed = np.zeros(cap)
    queued_load = np.zeros(cap)
    idle_since = np.zeros(cap)
    last_change = np.zeros(cap)
    alloc_start = np.zeros(cap)
    token = np.zeros(cap, np.int64)
    current = np.full(cap, -1, np.int64)
    q_head = np.full(cap, -1, np.int64)
    q_tail = np.full(cap, -1, np.int64)
    q_len = np.zeros(cap, np.int64)
    live_pos = np.full(cap, -1, np.int64)
    live = np.zeros(cap, np.int64)
    q_next = np.full(max(n, 1), -1, np.int64)
    n_workers = 0
    n_live = 0

    # ledgers: busy, idle, spin-up, spin-down joules
    acc = np.zeros(4)
    cost = 0.0
    starts = completed = misses = spin_ups = peak = alive = live_workers = 0
    n_events = 0
    h = np.uint64(_FNV_OFFSET)
    fbuf = np.zeros(1)
    ubuf = fbuf.view(np.uint64)

    heap = [(0.0, 0, 0, 0, 0)]
    heap.pop()
    seq = 0
    if n > 0:
        heapq.heappush(heap, (arrival[0], _ARRIVAL, seq, 0, 0))
        seq += 1
    now = -math.inf

    while len(heap) > 0:
        time, kind, _, subject, tok = heapq.heappop(heap)
        now = time

        if kind == _ARRIVAL:
            i = subject
            j = i + 1
            while j < n and arrival[j] == arrival[i]:
                j += 1
            for k in range(i, j):
                fbuf[0] = now
                h = _mix(_mix(_mix(h, ubuf[0]), np.uint64(kind)), np.uint64(k))
                n_events += 1
            for p in range(i, j):
                q = order[p]
                svc = service[q]
                dl = deadline[q]
                best_b = best_i = best_s = -1
                key_b = key_i = key_s = 0.0
                for m in range(n_live):
                    w = live[m]
                    start = max(now, ready_at[w], committed[w])
                    if start + svc > dl:
                        continue
                    st = state[w]
                    if st == _BUSY:
                        load = max(committed[w] - now, 0.0)
                        if best_b < 0 or load > key_b or (load == key_b and w < best_b):
                            best_b, key_b = w, load
                    elif st == _IDLE:
                        if best_i < 0 or idle_since[w] > key_i or (idle_since[w] == key_i and w < best_i):
                            best_i, key_i = w, idle_since[w]
                    elif st == _UP:
                        if best_s < 0 or queued_load[w] > key_s or (queued_load[w] == key_s and w < best_s):
                            best_s, key_s = w, queued_load[w]
                w = best_b if best_b >= 0 else (best_i if best_i >= 0 else best_s)
                if w < 0:
                    # reactive spin-up with the request queued on the new worker
                    if n_workers == cap:
                        cap *= 2
                        state = _grown(state, cap)
                        ready_at = _grown(ready_at, cap)
                        committed = _grown(committed, cap)
                        queued_load = _grown(queued_load, cap)
                        idle_since = _grown(idle_since, cap)
                        last_change = _grown(last_change, cap)
                        alloc_start = _grown(alloc_start, cap)
                        token = _grown(token, cap)
                        current = _grown(current, cap)
                        q_head = _grown(q_head, cap)
                        q_tail = _grown(q_tail, cap)
                        q_len = _grown(q_len, cap)
                        live_pos = _grown(live_pos, cap)
                        live = _grown(live, cap)
                    w = n_workers
                    n_workers += 1
                    state[w] = _UP
                    alloc_start[w] = now
                    ready_at[w] = now + spin_up
                    committed[w] = ready_at[w]
                    queued_load[w] = 0.0
                    idle_since[w] = 0.0
                    last_change[w] = now
                    token[w] = 0
                    current[w] = -1
                    q_head[w] = -1
                    q_tail[w] = -1
                    q_len[w] = 0
                    live[n_live] = w
                    live_pos[w] = n_live
                    n_live += 1
                    alive += 1
                    live_workers += 1
                    spin_ups += 1
                    peak = max(peak, alive)
                    heapq.heappush(heap, (ready_at[w], _SPIN_UP, seq, w, 0))
                    seq += 1
                committed[w] = max(now, ready_at[w], committed[w]) + svc
                if state[w] == _IDLE:
                    token[w] += 1
                    acc[1] += idle_p * (now - last_change[w])
                    state[w] = _BUSY
                    last_change[w] = now
                    current[w] = q
                    starts += 1
                    heapq.heappush(heap, (now + svc, _COMPLETE, seq, w, 0))
                    seq += 1
                else:
                    if q_len[w] == 0:
                        q_head[w] = q
                    else:
                        q_next[q_tail[w]] = q
                    q_tail[w] = q
                    q_next[q] = -1
                    q_len[w] += 1
                    queued_load[w] += svc
            if j < n:
                heapq.heappush(heap, (arrival[j], _ARRIVAL, seq, j, 0))
                seq += 1
            continue

        w = subject
        if kind == _TIMEOUT:
            if tok != token[w] or state[w] != _IDLE:
                continue
            fbuf[0] = now
            h = _mix(_mix(_mix(h, ubuf[0]), np.uint64(kind)), np.uint64(w))
            n_events += 1
            acc[1] += idle_p * (now - last_change[w])
            state[w] = _DOWN
            last_change[w] = now
            m = live_pos[w]
            n_live -= 1
            moved = live[n_live]
            live[m] = moved
            live_pos[moved] = m
            live_pos[w] = -1
            alive -= 1
            heapq.heappush(heap, (now + spin_down, _SPIN_DOWN, seq, w, 0))
            seq += 1
            continue

        fbuf[0] = now
        h = _mix(_mix(_mix(h, ubuf[0]), np.uint64(kind)), np.uint64(w))
        n_events += 1
        if kind == _SPIN_DOWN:
            acc[3] += busy_p * (now - last_change[w])
            state[w] = _DEAD
            last_change[w] = now
            cost += price_h * (now - alloc_start[w]) / 3600.0
            live_workers -= 1
            continue
        if kind == _COMPLETE:
            q = current[w]
            current[w] = -1
            completed += 1
            if now > deadline[q]:
                misses += 1
        # spin-up complete or request complete: next queued request, else idle
        if q_len[w] > 0:
            q = q_head[w]
            q_head[w] = q_next[q]
            q_len[w] -= 1
            if q_len[w] > 0:
                queued_load[w] = max(queued_load[w] - service[q], 0.0)
            else:
                queued_load[w] = 0.0
                q_tail[w] = -1
            if state[w] != _BUSY:
                acc[2] += busy_p * (now - last_change[w])
                state[w] = _BUSY
                last_change[w] = now
            current[w] = q
            starts += 1
            heapq.heappush(heap, (now + service[q], _COMPLETE, seq, w, 0))
            seq += 1
        else:
            if state[w] == _BUSY:
                acc[0] += busy_p * (now - last_change[w])
            else:
                acc[2] += busy_p * (now - last_change[w])
            state[w] = _IDLE
            last_change[w] = now
            idle_since[w] = now
            token[w] += 1
            heapq.heappush(heap, (now + timeout, _TIMEOUT, seq, w, token[w]))
            seq += 1

    stats = np.array([starts, completed, misses, spin_ups, peak, live_workers, n_events], np.int64)
    return acc, cost, stats, max(now, 0.0), h


if njit is not None:
    _grown = njit(cache=True)(_grown)
    _mix = njit(cache=True)(_mix)
    _cpu_dynamic_kernel = njit(cache=True)(_cpu_dynamic_kernel)


def dispatch_order(arrival: np.ndarray, deadline: np.ndarray) -> np.ndarray:
    """Request indices by (arrival, deadline, index): same-time batches in deadline order."""
    return np.lexsort((np.arange(len(arrival)), deadline, arrival)).astype(np.int64)


def cpu_dynamic_report(trace: "ArrivalTrace", config: "SimConfig") -> SimReport:
    cpu = config.cpu
    arrival, base, deadline = trace.columns()
    service = base / cpu.speedup
    acc, cost, stats, end_time, digest = _cpu_dynamic_kernel(
        arrival, service, deadline, dispatch_order(arrival, deadline),
        cpu.spin_up_latency, cpu.spin_down_latency, cpu.busy_power, cpu.idle_power,
        cpu.price_per_hour, config.timeout(WorkerClass.CPU),
    )
    starts, completed, misses, spin_ups, peak, live_workers, n_events = (int(v) for v in stats)

    raw = RawLedgers()
    for state, joules in zip((WorkerState.BUSY, WorkerState.IDLE, WorkerState.SPINNING_UP,
                              WorkerState.SPINNING_DOWN), acc.tolist()):
        raw.energy.accrue(WorkerClass.CPU, state, joules)
    raw.cost.occupancy_dollars[WorkerClass.CPU] = float(cost)
    raw.requests_on[WorkerClass.CPU] = starts
    raw.completed = completed
    raw.deadline_misses = misses
    raw.spin_ups[WorkerClass.CPU] = spin_ups
    raw.peak[WorkerClass.CPU] = peak
    raw.live_workers = live_workers
    raw.end_time = float(end_time)
    raw.event_hash = hashlib.sha256(f"cpu-kernel:{int(digest):016x}:{n_events}".encode("ascii")).hexdigest()
    report = finalize_report(raw, trace.requests, config.reference)
    logger.debug("cpu-dynamic (compiled): %d requests, %d events, eff=%.2f%%, rel_cost=%.3f",
                 report.requests_total, n_events, report.efficiency_pct, report.relative_cost)
    return report
