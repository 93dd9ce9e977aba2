import numpy as np
import pytest
from hypothesis import given, strategies as st

from archscale.autoscaler import (AapaStrategy, HpaStrategy, PredictiveStrategy, ScalingDecision,
                                  weak_label_classifier)
from archscale.simulator import (SimConfig, SimulationError, arrival_times, compute_utilization,
                                 count_cold_starts, run_simulation)
from archscale.trace import WorkloadTrace


class Fixed:
    """Scripted strategy: returns ``plan[t]`` at tick t, otherwise holds."""

    name = "fixed"

    def __init__(self, plan=None, interval=60):
        self.plan = plan or {}
        self.decision_interval_s = interval
        self.seen = []

    def decide(self, obs):
        self.seen.append(obs)
        return ScalingDecision(self.plan.get(int(obs.timestamp), obs.current_replicas), "plan")


def test_arrival_spacing():
    a = arrival_times(np.array([2, 0, 1]))
    assert a.tolist() == [15.0, 45.0, 150.0]
    assert arrival_times(np.zeros(3, dtype=int)).size == 0


def test_empty_load():
    for strat in (HpaStrategy(), Fixed()):
        log = run_simulation([0] * 10, strat)
        assert len(log.arrival_s) == 0 and log.violated.sum() == 0
        assert log.ready.min() >= 1


def test_constant_light_load_under_hpa():
    log = run_simulation([5] * 60, HpaStrategy())
    assert log.violated.sum() == 0
    # min_replicas=1 lets HPA drop the idle second pod once; nothing else happens
    assert [(e.before, e.after) for e in log.events] == [(2, 1)]
    pinned = run_simulation([5] * 60, HpaStrategy(), SimConfig(min_replicas=2))
    assert pinned.events == [] and pinned.violated.sum() == 0


def test_step_load_hits_cold_starts():
    log = run_simulation([1] * 5 + [1200] * 10, HpaStrategy())
    assert count_cold_starts(log).affected_requests > 0
    assert log.pod_starts > 0


def test_utilization_oracle():
    log = run_simulation([300], Fixed(), SimConfig(init_replicas=1))
    assert compute_utilization(log, 0) == pytest.approx(0.5)
    empty = run_simulation([0], Fixed())
    assert compute_utilization(empty, 0) == 0.0
    with pytest.raises(IndexError):
        compute_utilization(log, 1)


def test_saturated_pods():
    # the backlog from minute 0 keeps both pods busy through minute 1
    log = run_simulation([1200, 1200], Fixed(), SimConfig(init_replicas=2))
    assert compute_utilization(log, 1) == pytest.approx(1.0)


def test_single_scale_up_counts_three_starts():
    log = run_simulation([10] * 3, Fixed({60: 5}))
    assert count_cold_starts(log).pod_starts == 3
    assert [(e.timestamp, e.before, e.after) for e in log.events] == [(60, 2, 5)]
    assert log.ready[61] == 2 and log.starting[61] == 3
    assert log.ready[62] == 5 and log.starting[62] == 0


def test_response_times_hand_queue():
    # one pod, six requests in the first minute: 10 s apart, never queued
    log = run_simulation([6], Fixed(), SimConfig(init_replicas=1))
    assert np.allclose(log.response_s, 0.1)
    assert not log.violated.any()


def test_drop_after_wait_cap():
    # 1 pod at 10 rps, 1200 requests in one minute: backlog grows past 30 s
    log = run_simulation([1200], Fixed(), SimConfig(init_replicas=1))
    assert log.n_dropped > 0
    served = ~log.dropped
    assert np.all(log.start_s[served] - log.arrival_s[served] <= 30.0 + 1e-9)


def test_history_prefix_is_visible_not_replayed():
    s = Fixed()
    log = run_simulation([1, 1], s, history_prefix=[7, 8, 9])
    assert len(log.arrival_s) == 2
    assert s.seen[0].request_history.tolist() == [7, 8, 9, 1]


def test_bad_inputs():
    with pytest.raises(SimulationError):
        run_simulation([], Fixed())
    with pytest.raises(SimulationError):
        run_simulation([1, -1], Fixed())
    with pytest.raises(SimulationError):
        SimConfig(min_replicas=3, init_replicas=2)
    with pytest.raises(SimulationError):
        SimConfig(capacity_rps_per_pod=0.5)


def test_workload_trace_input_and_horizon():
    log = run_simulation(WorkloadTrace("f", np.array([3, 4, 5])), Fixed(), horizon_minutes=2)
    assert log.n_minutes == 2 and len(log.arrival_s) == 7


def test_csv_outputs():
    log = run_simulation([30, 600], HpaStrategy())
    req = log.requests_csv().splitlines()
    assert req[0] == "arrival_s,completion_s,violated,cold_start_affected"
    assert len(req) == 1 + 630
    assert len(log.replicas_csv().splitlines()) == 1 + 120
    assert log.events_csv().startswith("timestamp,strategy,before,after,reason")


# -- properties over random traces and configs ---------------------------------------------

traces = st.lists(st.integers(0, 2500), min_size=1, max_size=25)
configs = st.builds(
    lambda startup, cap, svc, lo, extra, hi: SimConfig(
        pod_startup_s=startup, capacity_rps_per_pod=cap, service_time_ms=svc,
        min_replicas=lo, init_replicas=lo + extra, max_replicas=lo + extra + hi),
    st.integers(1, 30), st.sampled_from([1.0, 5.0, 10.0, 20.0]), st.sampled_from([50.0, 100.0]),
    st.integers(1, 3), st.integers(0, 3), st.integers(0, 40))
strategy_names = st.sampled_from(["hpa", "predictive", "aapa"])


def _strategy(name, cfg):
    if name == "hpa":
        return HpaStrategy(bounds=cfg.bounds)
    if name == "predictive":
        return PredictiveStrategy(cfg.capacity_rps_per_pod, bounds=cfg.bounds)
    return AapaStrategy(weak_label_classifier(), bounds=cfg.bounds)


@given(traces, configs, strategy_names)
def test_conservation_bounds_fifo(counts, cfg, name):
    log = run_simulation(counts, _strategy(name, cfg), cfg, history_prefix=[sum(counts)] * 60)
    n = len(log.arrival_s)
    assert n == sum(counts)
    assert log.completed.sum() + log.dropped.sum() + log.in_flight.sum() == n
    total = log.ready + log.starting
    assert total.min() >= cfg.min_replicas and total.max() <= cfg.max_replicas
    served = ~log.dropped
    assert np.all(np.diff(log.start_s[served]) >= -1e-9)
    assert np.all(log.start_s[served] >= log.arrival_s[served] - 1e-9)
    assert np.all(np.isnan(log.completion_s[log.dropped]))
    assert np.all((log.minute_utilization() >= 0) & (log.minute_utilization() <= 1))


@given(traces, configs, strategy_names)
def test_determinism(counts, cfg, name):
    a = run_simulation(counts, _strategy(name, cfg), cfg)
    b = run_simulation(counts, _strategy(name, cfg), cfg)
    assert a.digest() == b.digest()
