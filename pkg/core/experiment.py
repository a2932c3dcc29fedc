# core/experiment.py
"""
Experiment plumbing behind the CLI: the key=value configuration, the scheduler
registry, single runs, parameter sweeps and CSV output.
"""
from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config.settings import HYSSIM_DEFAULTS_FILE, HYSSIM_SWEEP_WORKERS
from core.baselines import CpuDynamic, MarkIdeal, fpga_dynamic, fpga_static_provision
from core.dispatch import DispatchPolicy
from core.errors import ConfigError, HyssimError
from core.log import get_logger
from core.model import SimReport, WorkerClass, WorkerClassParams
from core.oracle import MilpInstance, demand_from_arrivals, demand_from_rates, instance_from_params
from core.simengine import Scheduler, SimConfig, run
from core.spork import SporkMode, SporkObjective, SporkScheduler
from core.tracegen import (
    ArrivalTrace,
    RateTrace,
    ingest_arrival_csv,
    ingest_rate_csv,
    poisson_arrivals,
    sniff_trace_kind,
    synthetic_trace,
)

logger = get_logger(__name__)

AUTO = "auto"
REPORT_COLUMNS = ["efficiency_pct", "relative_cost", "deadline_misses", "fpga_spinups", "cpu_spinups",
                  "energy_busy_j", "energy_idle_j", "energy_spin_j", "cost_usd"]
EXTENDED_COLUMNS = ["cpu_request_pct", "idle_energy_pct", "energy_total_j", "sim_end_s"]
FLOAT_FORMAT = "%.6g"

SPORK_VARIANTS = {
    "sporkE": SporkMode.ENERGY,
    "sporkC": SporkMode.COST,
    "sporkB": SporkMode.WEIGHTED,
}
SCHEDULERS = (
    list(SPORK_VARIANTS) + [f"{n}-ideal" for n in SPORK_VARIANTS]
    + ["spork", "baseline", "cpu-dynamic", "fpga-static", "fpga-dynamic", "mark-ideal"]
)
BASELINES = ("cpu-dynamic", "fpga-static", "fpga-dynamic", "mark-ideal")


# -----------------------
# key=value configuration
# -----------------------
def _read_kv(path) -> List[Tuple[int, str, str]]:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            entries.append((lineno, key.strip(), value.strip()))
    return entries


def _kind_of(literal: str) -> str:
    if literal.lower() in ("true", "false"):
        return "bool"
    if literal == AUTO:
        return "auto"
    for kind, cast in (("int", int), ("float", float)):
        try:
            cast(literal)
            return kind
        except ValueError:
            pass
    return "str"


def _coerce(key: str, kind: str, text: str) -> Any:
    text = text.strip()
    try:
        if kind == "bool":
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "auto":
            # numeric keys are checked where they are read; dispatch.policy is text
            return AUTO if text == AUTO else _maybe_float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from None


def _maybe_float(text: str) -> Any:
    try:
        return float(text)
    except ValueError:
        return text


class ExperimentConfig:
    """Flat typed configuration. The defaults file defines the key set."""

    def __init__(self, defaults_file=None):
        self.defaults_file = defaults_file or HYSSIM_DEFAULTS_FILE
        self.kinds: Dict[str, str] = {}
        self.values: Dict[str, Any] = {}
        for _, key, literal in _read_kv(self.defaults_file):
            self.kinds[key] = _kind_of(literal)
            self.values[key] = _coerce(key, self.kinds[key], literal)

    @classmethod
    def load(cls, config_file=None, overrides: Optional[Dict[str, str]] = None,
             defaults_file=None) -> "ExperimentConfig":
        cfg = cls(defaults_file)
        if config_file:
            for lineno, key, value in _read_kv(config_file):
                try:
                    cfg.set(key, value)
                except ConfigError as exc:
                    raise ConfigError(f"{config_file}:{lineno}: {exc}") from None
        for key, value in (overrides or {}).items():
            cfg.set(key, value)
        return cfg

    def set(self, key: str, value: Any) -> None:
        if key not in self.kinds:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, self.kinds[key], str(value)) if isinstance(value, str) else value

    def copy(self, **updates) -> "ExperimentConfig":
        other = object.__new__(ExperimentConfig)
        other.defaults_file = self.defaults_file
        other.kinds = dict(self.kinds)
        other.values = dict(self.values)
        for key, value in updates.items():
            other.set(key, value)
        return other

    def __getitem__(self, key: str) -> Any:
        if key not in self.values:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values[key]

    def header_lines(self) -> List[str]:
        return [f"# {k}={_fmt(v)}" for k, v in self.values.items()]

    def number(self, key: str) -> Optional[float]:
        """Numeric value of an `auto`-able key; None for auto."""
        v = self[key]
        if v == AUTO:
            return None
        if isinstance(v, str):
            raise ConfigError(f"{key}: expected a number or 'auto', got {v!r}")
        return float(v)

    # --- builders ---
    def worker_params(self, cls: WorkerClass) -> WorkerClassParams:
        p = cls.value
        return WorkerClassParams(cls, float(self[f"{p}.spin_up_s"]), float(self[f"{p}.spin_down_s"]),
                                 float(self[f"{p}.busy_w"]), float(self[f"{p}.idle_w"]),
                                 float(self[f"{p}.price_hr"]), float(self[f"{p}.speedup"]))

    def sim_config(self, seed: Optional[int] = None) -> SimConfig:
        auto = self.number
        reference = self["report.reference"]
        if reference not in ("default", "configured"):
            raise ConfigError(f"report.reference must be 'default' or 'configured', got {reference!r}")
        fpga = self.worker_params(WorkerClass.FPGA)
        return SimConfig(
            cpu=self.worker_params(WorkerClass.CPU),
            fpga=fpga,
            interval_length=auto("sim.interval_s"),
            idle_timeout={WorkerClass.CPU: auto("sim.idle_timeout_cpu_s"),
                          WorkerClass.FPGA: auto("sim.idle_timeout_fpga_s")},
            deadline_mult=float(self["sim.deadline_mult"]),
            seed=int(self["seed"] if seed is None else seed),
            reference_fpga=fpga if reference == "configured" else WorkerClassParams.fpga_default(),
            event_log=self["sim.event_log"] or None,
            fast_path=bool(self["sim.fast_path"]),
        )

    def size_s(self) -> Optional[float]:
        v = self.number("trace.size_ms")
        return None if v is None else v / 1000.0

    def sweep_workers(self) -> int:
        v = self.number("sweep.workers")
        return HYSSIM_SWEEP_WORKERS if v is None else max(1, int(v))


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


# -----------------------
# Traces
# -----------------------
def synthetic_from_config(cfg: ExperimentConfig, seed: int) -> Tuple[RateTrace, ArrivalTrace]:
    return synthetic_trace(cfg["trace.bucket"], float(cfg["trace.burstiness"]), float(cfg["trace.hours"]),
                           float(cfg["trace.avg_workers"]), seed, float(cfg["trace.slot_s"]),
                           cfg.size_s(), float(cfg["sim.deadline_mult"]))


def load_trace(path, cfg: ExperimentConfig, seed: int) -> ArrivalTrace:
    """Arrival CSVs are used as-is; rate CSVs are expanded to Poisson arrivals with `seed`."""
    deadline_mult = float(cfg["sim.deadline_mult"])
    if sniff_trace_kind(path) == "arrival":
        return ingest_arrival_csv(path, deadline_mult)
    rates = ingest_rate_csv(path, cfg.size_s(), float(cfg["trace.slot_s"]))
    return poisson_arrivals(rates, rates.duration, seed, deadline_mult)


def repetition_seeds(seed: int, repetitions: int) -> List[int]:
    # synthetic_trace draws from seed, seed+1 and seed+2
    return [seed + 10 * r for r in range(repetitions)]


# -----------------------
# Scheduler registry
# -----------------------
def resolve_scheduler_name(name: str, cfg: ExperimentConfig) -> str:
    if name == "spork":
        mode = SporkMode(cfg["spork.mode"])
        base = {SporkMode.ENERGY: "sporkE", SporkMode.COST: "sporkC", SporkMode.WEIGHTED: "sporkB"}[mode]
        return base + ("-ideal" if cfg["spork.ideal"] else "")
    if name == "baseline":
        name = cfg["baseline.kind"]
        if name not in BASELINES:
            raise ConfigError(f"baseline.kind must be one of {', '.join(BASELINES)}, got {name!r}")
    if name not in SCHEDULERS:
        raise ConfigError(f"unknown scheduler {name!r}; choose from {', '.join(SCHEDULERS)}")
    return name


def build_scheduler(name: str, trace: ArrivalTrace, cfg: ExperimentConfig, sim: SimConfig) -> Scheduler:
    name = resolve_scheduler_name(name, cfg)
    base = name.replace("-ideal", "")
    if base in SPORK_VARIANTS:
        objective = SporkObjective(SPORK_VARIANTS[base], float(cfg["spork.alpha"]), name.endswith("-ideal"))
        scheduler: Scheduler = SporkScheduler(objective, name)
    elif name == "cpu-dynamic":
        scheduler = CpuDynamic()
    elif name == "fpga-static":
        scheduler, _ = fpga_static_provision(trace, sim, int(cfg["baseline.n_max"]))
    elif name == "fpga-dynamic":
        scheduler, _ = fpga_dynamic(trace, sim, int(cfg["baseline.k_max"]))
    else:
        scheduler = MarkIdeal()

    policy = cfg["dispatch.policy"]
    if policy != AUTO:
        try:
            scheduler.policy = DispatchPolicy(policy)
        except ValueError:
            raise ConfigError(f"unknown dispatch.policy {policy!r}") from None
    return scheduler


def run_one(trace: ArrivalTrace, cfg: ExperimentConfig, scheduler_name: str,
            seed: Optional[int] = None) -> SimReport:
    sim = cfg.sim_config(seed)
    scheduler = build_scheduler(scheduler_name, trace, cfg, sim)
    logger.info("running %s on %d requests", scheduler.name, len(trace))
    return run(trace, sim, scheduler)


def report_row(report: SimReport, scheduler: str, seed: int, extended: bool = False) -> Dict[str, Any]:
    row: Dict[str, Any] = {"scheduler": scheduler, "seed": seed}
    row.update(report.row())
    if extended:
        row.update({
            "cpu_request_pct": report.cpu_request_pct,
            "idle_energy_pct": report.idle_energy_pct,
            "energy_total_j": report.energy_total_j,
            "sim_end_s": report.sim_end_s,
            "event_hash": report.event_hash,
        })
    return row


# -----------------------
# Sweeps
# -----------------------
@dataclass(frozen=True)
class SweepTask:
    index: int
    point: Tuple[Tuple[str, str], ...]
    scheduler: str
    seed: int


def parse_axes(specs: Iterable[str]) -> Dict[str, List[str]]:
    axes: Dict[str, List[str]] = {}
    for spec in specs:
        if "=" not in spec:
            raise ConfigError(f"sweep axis must look like key=v1,v2,..., got {spec!r}")
        key, values = spec.split("=", 1)
        vals = [v.strip() for v in values.split(",") if v.strip()]
        if not vals:
            raise ConfigError(f"sweep axis {key!r} has no values")
        axes[key.strip()] = vals
    return axes


def sweep_tasks(axes: Dict[str, List[str]], schedulers: Sequence[str], seeds: Sequence[int]) -> List[SweepTask]:
    keys = list(axes)
    tasks = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        point = tuple(zip(keys, combo))
        for name in schedulers:
            for seed in seeds:
                tasks.append(SweepTask(len(tasks), point, name, seed))
    return tasks


def _run_task(task: SweepTask, cfg: ExperimentConfig, trace_path: Optional[str]) -> Dict[str, Any]:
    local = cfg.copy(**dict(task.point))
    if trace_path:
        trace = load_trace(trace_path, local, task.seed)
    else:
        _, trace = synthetic_from_config(local, task.seed)
    report = run_one(trace, local, task.scheduler, task.seed)
    row = dict(task.point)
    row.update(report_row(report, task.scheduler, task.seed))
    row.update({k: getattr(report, k) for k in EXTENDED_COLUMNS})
    return row


def run_sweep(cfg: ExperimentConfig, axes: Dict[str, List[str]], schedulers: Sequence[str],
              seeds: Sequence[int], trace_path: Optional[str] = None,
              workers: Optional[int] = None) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Rows in task order plus a `seed=mean` row per (point, scheduler); failures land in `errors`."""
    for key in axes:
        cfg[key]  # unknown axis keys fail before any work starts
    tasks = sweep_tasks(axes, schedulers, seeds)
    workers = workers or cfg.sweep_workers()
    rows: Dict[int, Dict[str, Any]] = {}
    errors: Dict[str, str] = {}

    def key_of(t: SweepTask) -> str:
        point = ",".join(f"{k}={v}" for k, v in t.point)
        return f"{point}{';' if point else ''}{t.scheduler};seed={t.seed}"

    logger.info("sweep: %d tasks on %d workers", len(tasks), workers)
    if workers <= 1:
        for t in tqdm(tasks, desc="sweep", unit="run"):
            try:
                rows[t.index] = _run_task(t, cfg, trace_path)
            except HyssimError as exc:
                errors[key_of(t)] = str(exc)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_task, t, cfg, trace_path): t for t in tasks}
            for fut in tqdm(as_completed(futures), total=len(futures), desc="sweep", unit="run"):
                t = futures[fut]
                try:
                    rows[t.index] = fut.result()
                except HyssimError as exc:
                    errors[key_of(t)] = str(exc)

    for key, msg in errors.items():
        logger.warning("sweep task %s failed: %s", key, msg)

    ordered = [rows[i] for i in sorted(rows)]
    df = pd.DataFrame(ordered, columns=list(axes) + ["scheduler", "seed"] + REPORT_COLUMNS + EXTENDED_COLUMNS)
    return with_means(df, list(axes), len(seeds)), errors


def with_means(df: pd.DataFrame, axis_keys: List[str], repetitions: int) -> pd.DataFrame:
    """Append the mean of every complete (point, scheduler) group."""
    if df.empty:
        return df
    group_keys = axis_keys + ["scheduler"]
    metrics = REPORT_COLUMNS + EXTENDED_COLUMNS
    means = []
    for key, group in df.groupby(group_keys, sort=False):
        if len(group) != repetitions:
            continue
        row = dict(zip(group_keys, key if isinstance(key, tuple) else (key,)))
        row["seed"] = "mean"
        row.update(group[metrics].astype(float).mean().to_dict())
        means.append(row)
    out = df.copy()
    out["seed"] = out["seed"].astype(object)
    return pd.concat([out, pd.DataFrame(means, columns=df.columns)], ignore_index=True)


# -----------------------
# Oracle
# -----------------------
def oracle_instance(trace_path, cfg: ExperimentConfig, interval_s: Optional[float] = None) -> MilpInstance:
    interval = float(interval_s if interval_s is not None else cfg["oracle.interval_s"])
    if sniff_trace_kind(trace_path) == "arrival":
        trace = ingest_arrival_csv(trace_path, float(cfg["sim.deadline_mult"]))
        X = demand_from_arrivals(trace, interval)
        _, sizes, _ = trace.columns()
        base = trace.base_size or (float(np.median(sizes)) if len(sizes) else cfg.size_s() or 0.01)
    else:
        rates = ingest_rate_csv(trace_path, cfg.size_s(), float(cfg["trace.slot_s"]))
        X = demand_from_rates(rates, interval)
        base = rates.base_size
    return instance_from_params(
        X, cfg.worker_params(WorkerClass.CPU), cfg.worker_params(WorkerClass.FPGA), interval, base,
        n_f=int(cfg["oracle.n_f"]), n_c=float(cfg["oracle.n_c"]),
        spinup=int(cfg["oracle.spinup_intervals"]),
        d_c=float(cfg["oracle.dealloc_cpu_j"]), d_f=float(cfg["oracle.dealloc_fpga_j"]),
        rate_mode=str(cfg["oracle.rate_mode"]),
    )


# -----------------------
# CSV output
# -----------------------
def write_csv(df: pd.DataFrame, path, comments: Sequence[str] = (), append: bool = False) -> None:
    """UTF-8, LF, `#` comment header, 6 significant digits. Appends rows only if the file exists."""
    exists = append and os.path.exists(path) and os.path.getsize(path) > 0
    with open(path, "a" if exists else "w", encoding="utf-8", newline="\n") as fh:
        if not exists:
            for line in comments:
                fh.write(line if line.startswith("#") else f"# {line}")
                fh.write("\n")
        df.to_csv(fh, index=False, header=not exists, float_format=FLOAT_FORMAT, lineterminator="\n")
