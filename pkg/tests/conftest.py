# tests/conftest.py
import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure project root is importable
PROJ_ROOT = Path(__file__).resolve().parents[1]
if str(PROJ_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJ_ROOT))

from core.model import Request, WorkerClassParams  # noqa: E402
from core.tracegen import ArrivalTrace, RateTrace, poisson_arrivals, synthetic_trace  # noqa: E402


@pytest.fixture
def cpu():
    return WorkerClassParams.cpu_default()


@pytest.fixture
def fpga():
    return WorkerClassParams.fpga_default()


def make_trace(arrivals, size=0.01, horizon=None, deadline_mult=10.0):
    reqs = [Request.make(i, float(a), size, deadline_mult) for i, a in enumerate(arrivals)]
    end = horizon if horizon is not None else (float(np.nextafter(reqs[-1].arrival, np.inf)) if reqs else 0.0)
    return ArrivalTrace(reqs, end, size)


def constant_poisson(rate, seconds, size, seed=3):
    return poisson_arrivals(RateTrace(np.array([rate]), size, seconds), seconds, seed)


@pytest.fixture
def trace_factory():
    return make_trace


def bursty_trace(burstiness=0.7, minutes=6.0, avg_workers=5.0, seed=1, size=0.1):
    """A few minutes of b-model arrivals on 30 s slots at a fixed request size."""
    _, arrivals = synthetic_trace("short", burstiness, hours=minutes / 60.0, avg_workers=avg_workers,
                                  seed=seed, slot_length=30.0, size=size)
    return arrivals
