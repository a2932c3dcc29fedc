# core/tracegen.py
"""
Workload generation: b-model rate traces, rate scaling, time-varying Poisson
arrivals, request-size buckets, and CSV ingestion / writing.
"""
from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.errors import IngestionError, ParameterError
from core.log import get_logger
from core.model import DEFAULT_DEADLINE_MULT, Request, RequestColumns, request_columns

logger = get_logger(__name__)
_trapezoid = getattr(np, "trapezoid", None) or np.trapz

DEFAULT_SLOT_S = 60.0
_SIZE_COMMENT = re.compile(r"^#\s*size_ms\s*=\s*([^\s]+)\s*$")


class SizeBucket(str, Enum):
    SHORT = "short"
    MEDIUM = "medium"
    LONG = "long"


BUCKET_BOUNDS = {
    SizeBucket.SHORT: (0.01, 0.1),
    SizeBucket.MEDIUM: (0.1, 1.0),
    SizeBucket.LONG: (1.0, 10.0),
}


@dataclass
class RateTrace:
    rates: np.ndarray
    base_size: float
    slot_length: float = DEFAULT_SLOT_S

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float)
        if self.rates.ndim != 1 or len(self.rates) < 1:
            raise ParameterError("rate trace needs at least one slot")
        if np.any(self.rates < 0) or not np.all(np.isfinite(self.rates)):
            raise ParameterError("rates must be finite and >= 0")
        if self.slot_length <= 0:
            raise ParameterError("slot_length must be > 0")

    @property
    def num_slots(self) -> int:
        return len(self.rates)

    @property
    def duration(self) -> float:
        return self.num_slots * self.slot_length

    @property
    def volumes(self) -> np.ndarray:
        return self.rates * self.slot_length


@dataclass
class ArrivalTrace:
    requests: Sequence[Request]
    horizon: float
    base_size: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.requests)

    def columns(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(arrival, base_size, deadline) arrays."""
        return request_columns(self.requests)


# -----------------------
# Generators
# -----------------------
def bmodel_volumes(total_volume: float, num_slots: int, bias: float, seed: int) -> np.ndarray:
    if num_slots < 1 or num_slots & (num_slots - 1):
        raise ParameterError(f"num_slots must be a power of two, got {num_slots}")
    if not (0.5 <= bias < 1.0):
        raise ParameterError(f"bias must be in [0.5, 1), got {bias}")
    if total_volume < 0:
        raise ParameterError("total_volume must be >= 0")
    rng = np.random.default_rng(seed)
    vols = np.array([float(total_volume)])
    while len(vols) < num_slots:
        heavy_left = rng.random(len(vols)) < 0.5
        left = vols * np.where(heavy_left, bias, 1.0 - bias)
        right = vols - left
        vols = np.column_stack([left, right]).ravel()
    return vols


def bmodel_rates(total_volume: float, num_slots: int, bias: float, seed: int,
                 slot_length: float = DEFAULT_SLOT_S, base_size: float = 0.01) -> RateTrace:
    vols = bmodel_volumes(total_volume, num_slots, bias, seed)
    return RateTrace(vols / slot_length, base_size, slot_length)


def scale_to_workers(rates: RateTrace, avg_workers: float, base_size: Optional[float] = None) -> RateTrace:
    """Rescale so that mean(rate) x base_size = avg_workers."""
    size = rates.base_size if base_size is None else base_size
    if avg_workers <= 0:
        raise ParameterError("avg_workers must be > 0")
    if size <= 0:
        raise ParameterError("base_size must be > 0")
    mean = float(np.mean(rates.rates))
    if mean <= 0:
        raise ParameterError("cannot scale a trace whose mean rate is zero")
    return RateTrace(rates.rates * (avg_workers / (mean * size)), size, rates.slot_length)


def _rate_at(rates: RateTrace, t: np.ndarray) -> np.ndarray:
    # values anchored at slot midpoints; np.interp holds the end values constant
    mids = (np.arange(rates.num_slots) + 0.5) * rates.slot_length
    return np.interp(t, mids, rates.rates)


def expected_count(rates: RateTrace, horizon: float, samples_per_slot: int = 64) -> float:
    """Integral of the interpolated rate over [0, horizon); the interpolant is
    piecewise linear between grid points, so the trapezoid rule is exact."""
    knots = np.union1d(
        np.linspace(0.0, horizon, max(2, samples_per_slot * rates.num_slots)),
        np.clip((np.arange(rates.num_slots) + 0.5) * rates.slot_length, 0.0, horizon),
    )
    return float(_trapezoid(_rate_at(rates, knots), knots))


def poisson_arrivals(rates: RateTrace, horizon: Optional[float] = None, seed: int = 0,
                     deadline_mult: float = DEFAULT_DEADLINE_MULT) -> ArrivalTrace:
    """Non-homogeneous Poisson arrivals by thinning against each slot's peak rate."""
    horizon = rates.duration if horizon is None else horizon
    if horizon > rates.duration + 1e-9:
        raise ParameterError(f"horizon {horizon}s exceeds trace duration {rates.duration}s")
    rng = np.random.default_rng(seed)
    accepted = []
    L = rates.slot_length
    for k in range(rates.num_slots):
        lo, hi = k * L, min((k + 1) * L, horizon)
        if hi <= lo:
            break
        # the interpolant is linear on [lo, mid] and [mid, hi]: its max sits on a vertex
        peak = float(np.max(_rate_at(rates, np.array([lo, min(lo + 0.5 * L, hi), hi]))))
        if peak <= 0:
            continue
        n = rng.poisson(peak * (hi - lo))
        if n == 0:
            continue
        t = rng.uniform(lo, hi, size=n)
        keep = rng.random(n) * peak <= _rate_at(rates, t)
        accepted.append(t[keep])
    times = np.unique(np.concatenate(accepted)) if accepted else np.empty(0)
    times = times[(times >= 0) & (times < horizon)]
    return ArrivalTrace(RequestColumns(times, rates.base_size, deadline_mult), horizon, rates.base_size)


def sample_request_size(bucket: SizeBucket | str, seed: int) -> float:
    """Log-uniform size (seconds) inside the bucket."""
    lo, hi = BUCKET_BOUNDS[SizeBucket(bucket)]
    rng = np.random.default_rng(seed)
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def next_power_of_two(n: int) -> int:
    return 1 if n <= 1 else 1 << (int(n) - 1).bit_length()


def synthetic_trace(bucket: SizeBucket | str = SizeBucket.SHORT, burstiness: float = 0.6,
                    hours: float = 2.0, avg_workers: float = 100.0, seed: int = 0,
                    slot_length: float = DEFAULT_SLOT_S, size: Optional[float] = None,
                    deadline_mult: float = DEFAULT_DEADLINE_MULT):
    """Three-step synthetic workload: size, b-model rates, Poisson arrivals."""
    base = sample_request_size(bucket, seed) if size is None else size
    slots = max(1, int(round(hours * 3600.0 / slot_length)))
    gen = bmodel_rates(1.0, next_power_of_two(slots), burstiness, seed + 1, slot_length, base)
    rates = scale_to_workers(RateTrace(gen.rates[:slots], base, slot_length), avg_workers, base)
    arrivals = poisson_arrivals(rates, rates.duration, seed + 2, deadline_mult)
    logger.debug("synthetic trace: b=%.2f size=%.4fs slots=%d requests=%d",
                 burstiness, base, slots, len(arrivals))
    return rates, arrivals


# -----------------------
# CSV ingestion / output
# -----------------------
def _split_comments(text: str):
    lines = text.split("\n")
    comments = []
    while lines and lines[0].startswith("#"):
        comments.append(lines.pop(0))
    return comments, "\n".join(lines)


def _read_table(path, columns, allow_empty=False):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IngestionError(f"cannot read {path}: {e}") from e
    comments, body = _split_comments(text)
    numbered = [(len(comments) + 1 + i, line) for i, line in enumerate(body.split("\n")) if line.strip()]
    if not numbered:
        raise IngestionError("missing header", len(comments) + 1)
    header_line = numbered[0][0]
    # 1-based file line of every data row, blank lines skipped
    rows = [n for n, _ in numbered[1:]]
    for n, line in numbered:
        fields = line.count(",") + 1
        if fields != len(columns):
            raise IngestionError(f"expected {len(columns)} fields, got {fields}", n)
    try:
        df = pd.read_csv(io.StringIO(body), dtype=str, skip_blank_lines=True, index_col=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestionError(f"unreadable CSV: {e}", header_line) from e
    if list(df.columns) != columns:
        raise IngestionError(f"expected header {','.join(columns)}, got {','.join(df.columns)}", header_line)
    if df.empty and not allow_empty:
        raise IngestionError("no data rows", header_line + 1)
    out = {}
    for col in columns:
        values = pd.to_numeric(df[col].str.strip(), errors="coerce")
        bad = values.isna() | ~np.isfinite(values.fillna(0.0))
        if bad.any():
            idx = int(np.flatnonzero(bad.to_numpy())[0])
            raise IngestionError(f"non-numeric {col} {df[col].iloc[idx]!r}", rows[idx])
        out[col] = values.to_numpy(dtype=float)
    return comments, out, rows


def ingest_rate_csv(path, base_size: Optional[float] = None, slot_length: float = DEFAULT_SLOT_S) -> RateTrace:
    """Rate CSV: header `minute,rate`; size from the argument or a `# size_ms=` comment."""
    comments, cols, rows = _read_table(path, ["minute", "rate"])
    rates = cols["rate"]
    neg = np.flatnonzero(rates < 0)
    if len(neg):
        raise IngestionError(f"negative rate {rates[neg[0]]}", rows[int(neg[0])])
    if base_size is None:
        for c in comments:
            m = _SIZE_COMMENT.match(c)
            if m:
                try:
                    base_size = float(m.group(1)) / 1000.0
                except ValueError:
                    raise IngestionError(f"bad size_ms comment {c!r}", comments.index(c) + 1)
    if base_size is None or base_size <= 0:
        raise IngestionError("request size missing: pass it explicitly or add '# size_ms=<float>'")
    return RateTrace(rates, base_size, slot_length)


def ingest_arrival_csv(path, deadline_mult: float = DEFAULT_DEADLINE_MULT,
                       horizon: Optional[float] = None) -> ArrivalTrace:
    """Arrival CSV: header `arrival_s,size_s`, one row per request."""
    _, cols, rows = _read_table(path, ["arrival_s", "size_s"], allow_empty=True)
    arrivals, sizes = cols["arrival_s"], cols["size_s"]
    bad = np.flatnonzero((arrivals < 0) | (sizes <= 0))
    unsorted = np.flatnonzero(np.diff(arrivals) < 0) + 1
    first_bad = int(bad[0]) if len(bad) else len(arrivals)
    first_unsorted = int(unsorted[0]) if len(unsorted) else len(arrivals)
    if first_bad <= first_unsorted and first_bad < len(arrivals):
        raise IngestionError("arrival must be >= 0 and size > 0", rows[first_bad])
    if first_unsorted < len(arrivals):
        raise IngestionError("arrivals must be sorted", rows[first_unsorted])
    requests = RequestColumns(arrivals, sizes, deadline_mult)
    end = float(arrivals[-1]) if len(arrivals) else 0.0
    h = horizon if horizon is not None else float(np.nextafter(end, np.inf))
    single = float(sizes[0]) if len(sizes) and np.all(sizes == sizes[0]) else None
    return ArrivalTrace(requests, h, single)


def write_rate_csv(rates: RateTrace, path, comments: Optional[List[str]] = None) -> None:
    df = pd.DataFrame({"minute": np.arange(rates.num_slots), "rate": rates.rates})
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for c in comments or []:
            f.write(f"# {c}\n")
        f.write(f"# size_ms={rates.base_size * 1000.0:.6g}\n")
        df.to_csv(f, index=False, float_format="%.6f", lineterminator="\n")


def write_arrival_csv(trace: ArrivalTrace, path, comments: Optional[List[str]] = None) -> None:
    arrival, size, _ = trace.columns()
    df = pd.DataFrame({"arrival_s": arrival, "size_s": size})
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for c in comments or []:
            f.write(f"# {c}\n")
        df.to_csv(f, index=False, float_format="%.9f", lineterminator="\n")


def sniff_trace_kind(path) -> str:
    """'rate' or 'arrival', from the first non-comment line."""
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.startswith("#") or not line.strip():
                continue
            head = line.strip().replace(" ", "")
            if head == "minute,rate":
                return "rate"
            if head == "arrival_s,size_s":
                return "arrival"
            break
    raise IngestionError(f"{path}: unrecognized trace header")
