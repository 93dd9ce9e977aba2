"""Deterministic cluster simulator: a single FIFO queue served by ready pods.

Time advances in segments between integer-second events (strategy ticks and
pods becoming ready). Inside a segment the server set is fixed, so requests
are assigned by a compiled kernel that walks the queue in arrival order and
gives each request to the earliest-free pod.
"""

from __future__ import annotations

import hashlib
import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .autoscaler import ClusterObservation, ReplicaBounds
from .trace import WorkloadTrace


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    pod_startup_s: int = 2
    metric_window_s: int = 60
    min_replicas: int = 1
    init_replicas: int = 2
    max_replicas: int = 100
    pod_cpu_millicores: int = 1000
    pod_mem_mb: int = 256
    capacity_rps_per_pod: float = 10.0
    service_time_ms: float = 100.0
    slo_ms: float = 500.0
    max_queue_wait_s: float = 30.0
    rate_window_s: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        positive = ("pod_startup_s", "metric_window_s", "min_replicas", "init_replicas",
                    "max_replicas", "pod_cpu_millicores", "pod_mem_mb", "capacity_rps_per_pod",
                    "service_time_ms", "slo_ms", "max_queue_wait_s", "rate_window_s")
        for name in positive:
            if not getattr(self, name) > 0:
                raise SimulationError(f"{name} must be > 0")
        if int(self.pod_startup_s) != self.pod_startup_s:
            raise SimulationError("pod_startup_s must be a whole number of seconds")
        if not self.min_replicas <= self.init_replicas <= self.max_replicas:
            raise SimulationError("need min_replicas <= init_replicas <= max_replicas")
        if self.capacity_rps_per_pod < 1:
            raise SimulationError("capacity_rps_per_pod must be >= 1")

    @property
    def bounds(self) -> ReplicaBounds:
        return ReplicaBounds(self.min_replicas, self.max_replicas)

    @property
    def occupancy_s(self) -> float:
        return 1.0 / self.capacity_rps_per_pod


@dataclass(frozen=True)
class ScalingEvent:
    timestamp: int
    strategy: str
    before: int
    after: int
    reason: str


@dataclass
class SimulationLog:
    """Everything a run produced. Start/completion are NaN for dropped requests."""

    strategy: str
    config: SimConfig
    minute_counts: np.ndarray
    arrival_s: np.ndarray
    start_s: np.ndarray
    completion_s: np.ndarray
    dropped: np.ndarray
    cold_start_affected: np.ndarray
    ready: np.ndarray
    starting: np.ndarray
    busy_s: np.ndarray
    events: list[ScalingEvent] = field(default_factory=list)
    pod_starts: int = 0

    @property
    def horizon_s(self) -> int:
        return len(self.ready)

    @property
    def n_minutes(self) -> int:
        return len(self.minute_counts)

    @property
    def response_s(self) -> np.ndarray:
        return self.completion_s - self.arrival_s

    @property
    def violated(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            late = self.response_s > self.config.slo_ms / 1000.0 + 1e-9
        return late | self.dropped

    @property
    def completed(self) -> np.ndarray:
        """Served requests that finished inside the horizon."""
        return ~self.dropped & (self.completion_s <= self.horizon_s)

    @property
    def in_flight(self) -> np.ndarray:
        return ~self.dropped & (self.completion_s > self.horizon_s)

    @property
    def n_dropped(self) -> int:
        return int(self.dropped.sum())

    def minute_utilization(self) -> np.ndarray:
        busy = self.busy_s[:self.horizon_s].reshape(-1, 60).sum(axis=1)
        pod_s = self.ready.reshape(-1, 60).sum(axis=1).astype(float)
        out = np.zeros(len(busy))
        np.divide(busy, pod_s, out=out, where=pod_s > 0)
        return np.clip(out, 0.0, 1.0)

    # serialization ----------------------------------------------------------

    def requests_csv(self) -> str:
        out = io.StringIO()
        out.write("arrival_s,completion_s,violated,cold_start_affected\n")
        comp = np.where(self.dropped, -1.0, self.completion_s)
        rows = np.column_stack([self.arrival_s, comp, self.violated.astype(int),
                                self.cold_start_affected.astype(int)])
        np.savetxt(out, rows, fmt=["%.6f", "%.6f", "%d", "%d"], delimiter=",")
        return out.getvalue()

    def replicas_csv(self) -> str:
        out = io.StringIO()
        out.write("second,ready,starting\n")
        rows = np.column_stack([np.arange(self.horizon_s), self.ready, self.starting])
        np.savetxt(out, rows, fmt="%d", delimiter=",")
        return out.getvalue()

    def events_csv(self) -> str:
        lines = ["timestamp,strategy,before,after,reason"]
        lines += [f"{e.timestamp},{e.strategy},{e.before},{e.after},{e.reason}"
                  for e in self.events]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        h = hashlib.sha256()
        for text in (self.requests_csv(), self.replicas_csv(), self.events_csv()):
            h.update(text.encode())
        return h.hexdigest()


def compute_utilization(log: SimulationLog, minute: int) -> float:
    """Busy pod-seconds over ready pod-seconds in one minute (0 if no ready pods)."""
    if not 0 <= minute < log.n_minutes:
        raise IndexError(f"minute {minute} outside [0, {log.n_minutes})")
    return float(log.minute_utilization()[minute])


@dataclass(frozen=True)
class ColdStarts:
    pod_starts: int
    affected_requests: int


def count_cold_starts(log: SimulationLog) -> ColdStarts:
    return ColdStarts(log.pod_starts, int(log.cold_start_affected.sum()))


def arrival_times(counts: np.ndarray) -> np.ndarray:
    """Spread each minute's count evenly: minute m, request i of n at 60m + 60(i+0.5)/n."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0)
    minute = np.repeat(np.arange(len(counts)), counts)
    first = np.cumsum(counts) - counts
    i = np.arange(total) - np.repeat(first, counts)
    n = np.repeat(counts, counts)
    return minute * 60.0 + 60.0 * (i + 0.5) / n


@njit(cache=True)
def _serve(arrival, head, stop, free, n_free, t1, occ, wait_cap, svc,
           start, completion, dropped, cold, busy, starting):
    """Advance the FIFO queue through [.., t1); returns the new queue head."""
    j = head
    while j < stop:
        a = arrival[j]
        k = -1
        fk = np.inf
        for q in range(n_free):
            if free[q] < fk:
                fk = free[q]
                k = q
        s = a if a > fk else fk
        if s > a + wait_cap:
            if a + wait_cap < t1:
                dropped[j] = True
                cold[j] = starting[int(a)] > 0
                j += 1
                continue
            break
        if s >= t1:
            break
        start[j] = s
        completion[j] = s + svc
        free[k] = s + occ
        b = int(s)
        first = min(s + occ, b + 1.0) - s
        busy[b] += first
        if occ > first:
            busy[b + 1] += occ - first
        cold[j] = s > a and starting[int(a)] > 0
        j += 1
    return j


def _observation(t: int, n_ready: int, n_starting: int, history, offset: int, ready, busy,
                 cum_arrivals, head: int, cfg: SimConfig) -> ClusterObservation:
    lo = max(0, t - cfg.metric_window_s)
    pod_s = float(ready[lo:t].sum())
    util = float(busy[lo:t].sum()) / pod_s if pod_s > 0 else 0.0
    rlo = max(0, t - cfg.rate_window_s)
    rate = (cum_arrivals[t] - cum_arrivals[rlo]) / max(t - rlo, 1)
    return ClusterObservation(
        timestamp=float(t), ready_replicas=n_ready, starting_replicas=n_starting,
        avg_cpu_utilization=util, request_history=history[:offset + t // 60],
        current_rps=float(rate), queue_length=int(max(cum_arrivals[t] - head, 0)))


def run_simulation(trace, strategy, config: SimConfig = SimConfig(),
                   horizon_minutes: Optional[int] = None,
                   history_prefix=None) -> SimulationLog:
    """Replay a per-minute trace against ``strategy`` and log everything.

    ``trace`` is a WorkloadTrace or a sequence of per-minute counts. The
    strategy must expose ``name``, ``decision_interval_s`` and ``decide``.
    ``history_prefix`` holds per-minute counts observed before the replay
    starts (monitoring data a deployed scaler would already have); strategies
    see it at the front of ``request_history`` but it is never replayed.
    After the horizon the queue is drained with the final pod set so every
    request ends up completed, dropped, or in flight past the horizon.
    """
    counts = np.asarray(trace.counts if isinstance(trace, WorkloadTrace) else trace,
                        dtype=np.int64)
    if horizon_minutes is not None:
        counts = counts[:horizon_minutes]
    if counts.ndim != 1 or len(counts) == 0:
        raise SimulationError("trace is empty")
    if np.any(counts < 0):
        raise SimulationError("trace has negative counts")
    prefix = np.zeros(0, dtype=np.int64) if history_prefix is None else \
        np.asarray(history_prefix, dtype=np.int64)
    if prefix.ndim != 1 or np.any(prefix < 0):
        raise SimulationError("history_prefix must be a 1-D sequence of non-negative counts")
    history = np.concatenate([prefix, counts])
    interval = int(strategy.decision_interval_s)
    if interval < 1:
        raise SimulationError("decision_interval_s must be >= 1")

    cfg = config
    T = len(counts) * 60
    arrival = arrival_times(counts)
    n = len(arrival)
    per_second = np.bincount(arrival.astype(np.int64), minlength=T)[:T]
    cum_arrivals = np.concatenate([[0], np.cumsum(per_second)])

    start = np.full(n, np.nan)
    completion = np.full(n, np.nan)
    dropped = np.zeros(n, dtype=np.bool_)
    cold = np.zeros(n, dtype=np.bool_)
    busy = np.zeros(T + 2)
    ready = np.zeros(T, dtype=np.int64)
    starting = np.zeros(T + 1, dtype=np.int64)

    free = np.zeros(cfg.max_replicas + 1)
    n_free = cfg.init_replicas
    pending: list[int] = []  # ready_at times of STARTING pods, creation order
    occ, svc = cfg.occupancy_s, cfg.service_time_ms / 1000.0
    wait_cap = cfg.max_queue_wait_s
    events: list[ScalingEvent] = []
    pod_starts = 0
    head = 0
    t = 0
    next_tick = interval

    while t < T:
        t1 = min(next_tick, T, min(pending) if pending else T)
        ready[t:t1] = n_free
        starting[t:t1] = len(pending)
        stop = int(cum_arrivals[t1])
        head = _serve(arrival, head, stop, free, n_free, float(t1), occ, wait_cap, svc,
                      start, completion, dropped, cold, busy, starting)
        t = t1
        if t >= T:
            break
        now_ready = [r for r in pending if r <= t]
        if now_ready:
            pending = [r for r in pending if r > t]
            free[n_free:n_free + len(now_ready)] = float(t)
            n_free += len(now_ready)
        if t == next_tick:
            next_tick += interval
            obs = _observation(t, n_free, len(pending), history, len(prefix), ready, busy,
                               cum_arrivals, head, cfg)
            decision = strategy.decide(obs)
            before = n_free + len(pending)
            after = cfg.bounds.clamp(decision.desired_replicas)
            if after > before:
                pending += [t + cfg.pod_startup_s] * (after - before)
                pod_starts += after - before
            elif after < before:
                drop = before - after
                cut = min(drop, len(pending))
                pending = pending[:len(pending) - cut]  # newest STARTING pods first
                drop -= cut
                if drop:
                    # idle pods first, then those finishing their request soonest
                    order = np.argsort(free[:n_free], kind="stable")
                    keep = np.sort(order[drop:])
                    free[:len(keep)] = free[keep]
                    n_free = len(keep)
            if after != before:
                events.append(ScalingEvent(t, strategy.name, before, after, decision.reason))

    # drain the queue with the final pod set; starts never exceed arrival + wait cap
    if head < n:
        for r in pending:
            free[n_free] = float(r)
            n_free += 1
        tail_busy = np.zeros(max(len(busy), int(arrival[-1] + wait_cap) + 3))
        tail_busy[:len(busy)] = busy
        _serve(arrival, head, n, free, n_free, np.inf, occ, wait_cap, svc, start, completion,
               dropped, cold, tail_busy, starting)
        busy = tail_busy[:T + 2]

    return SimulationLog(strategy=strategy.name, config=cfg, minute_counts=counts,
                         arrival_s=arrival, start_s=start, completion_s=completion,
                         dropped=dropped, cold_start_affected=cold, ready=ready,
                         starting=starting[:T], busy_s=busy, events=events,
                         pod_starts=pod_starts)
