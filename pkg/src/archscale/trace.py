"""Per-minute invocation traces: CSV ingestion, synthetic generators, windowing."""

from __future__ import annotations

import csv
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .archetypes import Archetype

logger = logging.getLogger(__name__)

TRACE_HEADER = ("function_id", "minute_index", "invocations")
DEFAULT_MIN_INVOCATIONS = 1000


class TraceFormatError(ValueError):
    """Malformed trace file; message carries the offending line number."""


@dataclass(frozen=True)
class TraceRecord:
    function_id: str
    minute_index: int
    invocations: int

    def __post_init__(self):
        if self.minute_index < 0:
            raise ValueError("minute_index must be >= 0")
        if self.invocations < 0:
            raise ValueError("invocations must be >= 0")


@dataclass(frozen=True)
class WorkloadTrace:
    """Dense per-minute invocation counts of one function."""

    function_id: str
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or len(counts) < 1:
            raise ValueError("trace must hold at least one minute")
        if np.any(counts < 0):
            raise ValueError("trace counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class Window:
    function_id: str
    start_minute: int
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic archetype trace.

    ``amplitude`` is a multiple of ``base_rate`` for SPIKE bursts and an
    absolute requests/min swing for PERIODIC. ``burst_gap_minutes`` is the
    mean spacing between SPIKE bursts; half of it is a refractory gap, so
    bursts never cluster and long burst-free stretches are rare.
    """

    archetype: Archetype
    duration_minutes: int
    base_rate: float
    amplitude: float = 0.0
    period_minutes: float = 60.0
    slope: float = 0.0
    noise_std: float = 0.0
    rng_seed: int = 0
    burst_gap_minutes: float = 24.0
    function_id: str = ""
    window_len: int = field(default=60, repr=False)

    def __post_init__(self):
        try:
            arch = Archetype.parse(self.archetype)
        except ValueError as exc:
            raise ValueError(f"unknown archetype tag {self.archetype!r}") from exc
        object.__setattr__(self, "archetype", arch)
        if self.duration_minutes < self.window_len:
            raise ValueError("duration_minutes must be >= window_len")
        if self.base_rate < 0 or self.noise_std < 0:
            raise ValueError("base_rate and noise_std must be >= 0")
        if arch is Archetype.PERIODIC and self.period_minutes <= 0:
            raise ValueError("period_minutes must be > 0")
        if arch is Archetype.SPIKE and self.burst_gap_minutes < 2:
            raise ValueError("burst_gap_minutes must be >= 2")


def load_trace_csv(path: str | Path, min_invocations: int = DEFAULT_MIN_INVOCATIONS
                   ) -> list[WorkloadTrace]:
    """Read ``function_id,minute_index,invocations`` rows into dense traces.

    Missing minutes are zero-filled. Functions whose total invocations fall
    below ``min_invocations`` are dropped. Output is ordered by function_id.
    """
    per_fn: dict[str, dict[int, int]] = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(f"line 1: expected header {','.join(TRACE_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise TraceFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
            fn, minute_s, inv_s = (c.strip() for c in row)
            try:
                minute, inv = int(minute_s), int(inv_s)
            except ValueError:
                raise TraceFormatError(f"line {lineno}: non-integer field") from None
            if inv < 0:
                raise ValueError(f"line {lineno}: negative invocation count {inv}")
            if minute < 0:
                raise TraceFormatError(f"line {lineno}: negative minute_index")
            if minute in per_fn[fn]:
                raise TraceFormatError(f"line {lineno}: duplicate minute {minute} for {fn}")
            per_fn[fn][minute] = inv

    traces = []
    for fn in sorted(per_fn):
        rows = per_fn[fn]
        counts = np.zeros(max(rows) + 1, dtype=np.int64)
        for minute, inv in rows.items():
            counts[minute] = inv
        if counts.sum() < min_invocations:
            logger.debug("dropping %s: %d invocations", fn, counts.sum())
            continue
        traces.append(WorkloadTrace(fn, counts))
    return traces


def write_trace_csv(traces: Iterable[WorkloadTrace], path: str | Path,
                    keep_zeros: bool = False) -> None:
    """Write traces in the ingestion format; zero minutes are omitted by default."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for tr in traces:
            for minute, inv in enumerate(tr.counts.tolist()):
                if inv or keep_zeros:
                    w.writerow((tr.function_id, minute, inv))


def slide_windows(trace: WorkloadTrace, window_len: int = 60, stride: int = 10
                  ) -> list[Window]:
    """Cut overlapping windows at offsets 0, stride, 2*stride, ..."""
    if window_len < 2:
        raise ValueError("window_len must be >= 2")
    if not 1 <= stride <= window_len:
        raise ValueError("stride must satisfy 1 <= stride <= window_len")
    n = len(trace.counts)
    if n < window_len:
        return []
    starts = range(0, n - window_len + 1, stride)
    return [Window(trace.function_id, s, trace.counts[s:s + window_len]) for s in starts]


def _spike_bursts(rng: np.random.Generator, duration: int, mean_gap: float) -> np.ndarray:
    refractory = mean_gap / 2.0
    starts = []
    t = rng.uniform(0, mean_gap)
    while t < duration:
        starts.append(int(t))
        t += refractory + rng.exponential(mean_gap - refractory)
    return np.array(starts, dtype=np.int64)


def generate_synthetic(spec: SyntheticSpec) -> WorkloadTrace:
    """Generate a deterministic synthetic trace for one archetype."""
    rng = np.random.default_rng(spec.rng_seed)
    n = spec.duration_minutes
    t = np.arange(n, dtype=float)
    base = np.full(n, float(spec.base_rate))
    arch = spec.archetype

    if arch is Archetype.SPIKE:
        signal = base
        for s in _spike_bursts(rng, n, spec.burst_gap_minutes):
            signal[s] += spec.amplitude * spec.base_rate * rng.uniform(0.8, 1.2)
    elif arch is Archetype.PERIODIC:
        phase = rng.uniform(0, 2 * np.pi)
        signal = base + spec.amplitude * np.sin(2 * np.pi * t / spec.period_minutes + phase)
    elif arch is Archetype.RAMP:
        signal = base + spec.slope * t
    else:
        signal = base

    noise = rng.normal(0.0, spec.noise_std, n) if spec.noise_std > 0 else 0.0
    counts = np.rint(np.clip(signal + noise, 0, None)).astype(np.int64)
    fid = spec.function_id or f"{arch.value.lower()}-{spec.rng_seed}"
    return WorkloadTrace(fid, counts)
