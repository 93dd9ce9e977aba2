import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from archscale.archetypes import ARCHETYPES, Archetype
from archscale.autoscaler import (ARCHETYPE_PARAMS, AapaConfig, AapaStrategy, ClusterObservation,
                                  HoltWinters, HoltWintersParams, HpaConfig, HpaStrategy,
                                  PredictiveStrategy, ReplicaBounds, ScalingMode, StrategyParams,
                                  aapa_target, adjust_for_uncertainty, holt_winters_forecast,
                                  hpa_decide, hpa_recommendation, predictive_decide)


def obs(t=60.0, ready=4, starting=0, util=0.5, rps=0.0, queue=0, history=()):
    return ClusterObservation(t, ready, starting, util, np.asarray(history, dtype=float),
                              rps, queue)


# -- base table and confidence adjustment --------------------------------------------

def test_base_table():
    p = ARCHETYPE_PARAMS
    assert (p[Archetype.SPIKE].cpu_target, p[Archetype.SPIKE].cooldown_s) == (0.30, 1200)
    assert (p[Archetype.PERIODIC].cpu_target, p[Archetype.PERIODIC].cooldown_s) == (0.75, 180)
    assert (p[Archetype.RAMP].cpu_target, p[Archetype.RAMP].cooldown_s) == (0.60, 420)
    assert (p[Archetype.STATIONARY].cpu_target, p[Archetype.STATIONARY].cooldown_s) == (0.55, 720)
    assert p[Archetype.SPIKE].mode is ScalingMode.WARM_POOL
    assert p[Archetype.STATIONARY].mode is ScalingMode.CONSERVATIVE


def test_adjust_worked_values():
    a = adjust_for_uncertainty(ARCHETYPE_PARAMS[Archetype.SPIKE], 4, 0.0)
    assert (a.margin, a.cool_adj, a.rep_adj) == (1.5, 1800, 6)
    assert a.cpu_adj == pytest.approx(0.24, abs=1e-12)
    b = adjust_for_uncertainty(ARCHETYPE_PARAMS[Archetype.PERIODIC], 3, 0.5)
    assert (b.margin, b.cool_adj, b.rep_adj) == (1.25, 225, 4)
    assert b.cpu_adj == pytest.approx(0.675, abs=1e-12)


@pytest.mark.parametrize("arch", ARCHETYPES)
def test_adjust_identity_at_full_confidence(arch):
    base = ARCHETYPE_PARAMS[arch]
    a = adjust_for_uncertainty(base, 7, 1.0)
    assert (a.cpu_adj, a.cool_adj, a.rep_adj, a.margin) == (base.cpu_target, base.cooldown_s,
                                                            7, 1.0)


@pytest.mark.parametrize("c", [-0.01, 1.01, float("nan")])
def test_adjust_rejects_bad_confidence(c):
    with pytest.raises(ValueError):
        adjust_for_uncertainty(ARCHETYPE_PARAMS[Archetype.RAMP], 2, c)


@given(st.sampled_from(ARCHETYPES), st.integers(0, 50), st.floats(0, 1), st.floats(0, 1))
def test_adjust_monotone_in_confidence(arch, rep, c1, c2):
    lo, hi = sorted((c1, c2))
    a, b = (adjust_for_uncertainty(ARCHETYPE_PARAMS[arch], rep, c) for c in (lo, hi))
    assert a.cpu_adj <= b.cpu_adj + 1e-12
    assert a.cool_adj >= b.cool_adj - 1e-9
    assert a.rep_adj >= b.rep_adj


def test_strategy_params_validation():
    with pytest.raises(ValueError):
        StrategyParams(1.2, 10, 0, ScalingMode.REACTIVE)
    with pytest.raises(ValueError):
        StrategyParams(0.5, -1, 0, ScalingMode.REACTIVE)


# -- HPA --------------------------------------------------------------------------------

def test_hpa_worked_example():
    assert hpa_recommendation(4, 0.90, 0.70, 0.1, 4) == 6
    assert hpa_decide(obs(ready=4, util=0.9)).desired_replicas == 6


def test_hpa_deadband_fixed_point():
    assert hpa_decide(obs(ready=4, util=0.70)).desired_replicas == 4
    assert hpa_decide(obs(ready=4, util=0.76)).desired_replicas == 4


def test_hpa_stabilization_blocks_early_scale_down():
    recent = [(obs().timestamp - 120, 8)]
    d = hpa_decide(obs(t=60, ready=8, util=0.2), recent=recent)
    assert d.desired_replicas == 8


def test_hpa_scale_down_after_window():
    d = hpa_decide(obs(t=1000, ready=8, util=0.2), recent=[(600, 8)])
    assert d.desired_replicas == math.ceil(8 * 0.2 / 0.7)


def test_hpa_cooldown_between_scale_downs():
    d = hpa_decide(obs(t=1000, ready=8, util=0.2), last_scale_down=900)
    assert d.desired_replicas == 8 and "cooldown" in d.reason


def test_hpa_bounds():
    b = ReplicaBounds(2, 5)
    assert hpa_decide(obs(ready=4, util=3.0), bounds=b).desired_replicas == 5
    assert hpa_decide(obs(ready=4, util=0.01), bounds=b).desired_replicas == 2


@given(st.integers(1, 100), st.floats(0, 3), st.floats(0.05, 1.0))
def test_hpa_rule_property(ready, util, target):
    rec = hpa_recommendation(ready, util, target, 0.1, ready)
    ratio = util / target
    if abs(ratio - 1) <= 0.1:
        assert rec == ready
    else:
        assert rec == math.ceil(ready * ratio - 1e-9)


def test_hpa_strategy_holds_stabilized_max():
    s = HpaStrategy()
    assert s.decide(obs(t=60, ready=4, util=1.4)).desired_replicas == 8
    # load vanishes: the earlier recommendation of 8 pins the count for 300 s
    assert s.decide(obs(t=120, ready=8, util=0.05)).desired_replicas == 8
    assert s.decide(obs(t=360, ready=8, util=0.05)).desired_replicas == 8
    assert s.decide(obs(t=420, ready=8, util=0.05)).desired_replicas == 1


# -- Holt-Winters and predictive -----------------------------------------------------------

def test_hw_constant():
    for h in (1, 15, 90):
        assert holt_winters_forecast([10.0] * 2880, h) == pytest.approx(10.0, abs=1e-6)


def test_hw_linear():
    hist = np.arange(500, dtype=float)
    fc = holt_winters_forecast(hist, 15, HoltWintersParams(season_len=10_000))
    assert fc == pytest.approx(hist[-1] + 15, rel=0.05)


def test_hw_sinusoid_tracks_next_period():
    L = 1440
    t = np.arange(2 * L + 200)
    x = 1000 + 300 * np.sin(2 * np.pi * t / L)
    model = HoltWinters(HoltWintersParams(season_len=L)).extend(x)
    for h in (1, 30, 120):
        truth = 1000 + 300 * np.sin(2 * np.pi * (len(x) - 1 + h) / L)
        assert abs(model.forecast(h) - truth) <= 0.1 * 300


def test_hw_incremental_matches_batch():
    rng = np.random.default_rng(0)
    x = rng.poisson(50, 200).astype(float)
    p = HoltWintersParams(season_len=30)
    inc = HoltWinters(p)
    for v in x:
        inc.update(v)
    assert inc.forecast(7) == holt_winters_forecast(x, 7, p)
    with pytest.raises(ValueError):
        HoltWinters().forecast(1)


def test_predictive_examples():
    assert predictive_decide(obs(), 100.0, 10.0, 0.7).desired_replicas == 15
    assert predictive_decide(obs(), 0.0, 10.0, 0.7).desired_replicas == 1
    assert predictive_decide(obs(), 1e6, 10.0, 0.7).desired_replicas == 100
    with pytest.raises(ValueError):
        predictive_decide(obs(), 1.0, 0.0, 0.7)


def test_predictive_strategy_uses_current_rate():
    s = PredictiveStrategy(10.0)
    d = s.decide(obs(rps=70.0, history=[600.0] * 30))
    assert d.desired_replicas == 10


# -- archetype-aware policy ----------------------------------------------------------------

def test_aapa_spike_warm_pool():
    cfg = AapaConfig()
    # 12 rps needs 4 pods at 30% of 10 rps each; plus 2 warm
    desired, adj, _ = aapa_target(obs(rps=12.0, history=[720.0] * 60), Archetype.SPIKE, 1.0, cfg)
    assert desired == 6 and adj.rep_adj == 6


def test_aapa_stationary_fixed_point():
    cfg = AapaConfig()
    # load equals ready * cap * target: ratio 1, inside the deadband
    o = obs(ready=4, rps=4 * 10 * 0.55)
    desired, _, _ = aapa_target(o, Archetype.STATIONARY, 1.0, cfg)
    assert desired == 4


@given(st.sampled_from(ARCHETYPES), st.floats(0, 500), st.integers(1, 40), st.integers(0, 200))
def test_aapa_low_confidence_never_smaller(arch, rps, ready, queue):
    hist = np.full(90, rps * 60)
    o = obs(ready=ready, rps=rps, queue=queue, history=hist)
    cfg = AapaConfig()
    lo = aapa_target(o, arch, 0.0, cfg, HoltWinters().extend(hist))[0]
    hi = aapa_target(o, arch, 1.0, cfg, HoltWinters().extend(hist))[0]
    assert lo >= hi


def test_aapa_ramp_extrapolates():
    hist = np.arange(60) * 60.0  # +1 rps per minute
    o = obs(rps=59.0, history=hist)
    desired, _, _ = aapa_target(o, Archetype.RAMP, 1.0, AapaConfig())
    assert desired == math.ceil((59 + 7) / (10 * 0.6))


def test_aapa_strategy_classifies_and_holds():
    calls = []

    def classify(window):
        calls.append(len(window))
        return Archetype.PERIODIC, 0.9

    s = AapaStrategy(classify)
    hist = np.full(60, 600.0)
    up = s.decide(obs(t=5, ready=2, rps=10.0, history=hist))
    assert calls == [60] and s.prediction == (Archetype.PERIODIC, 0.9)
    s.decide(obs(t=10, ready=2, rps=10.0, history=hist))
    assert calls == [60]  # cached within the minute
    assert up.desired_replicas > 2
    # an immediate scale-down is held by the adjusted cooldown
    d = s.decide(obs(t=15, ready=up.desired_replicas, rps=0.0, history=hist))
    assert d.desired_replicas == up.desired_replicas
    assert s.cooldown_s() == pytest.approx(180 * 1.05)


def test_aapa_bootstrap_before_full_window():
    s = AapaStrategy(lambda w: pytest.fail("classifier called too early"))
    s.decide(obs(history=[10.0] * 30))
    assert s.prediction == AapaConfig().bootstrap


def test_warm_pool_override():
    cfg = AapaConfig().with_warm_pool(3)
    assert cfg.params[Archetype.SPIKE].warm_pool == 3
    with pytest.raises(ValueError):
        AapaConfig().with_warm_pool(4)
