"""Scaling strategies: reactive HPA, generic Holt-Winters predictive, and the
archetype-aware policy with confidence-scaled parameters.

All strategies share one contract: ``decision_interval_s`` plus
``decide(obs) -> ScalingDecision``. They are small state machines owned by a
single simulation run and must be fed observations in timestamp order.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .archetypes import Archetype
from .features import compute_features

Classify = Callable[[np.ndarray], "tuple[Archetype, float]"]


class ScalingMode(str, Enum):
    WARM_POOL = "WARM_POOL"
    PREDICTIVE = "PREDICTIVE"
    TREND = "TREND"
    CONSERVATIVE = "CONSERVATIVE"
    REACTIVE = "REACTIVE"


@dataclass(frozen=True)
class StrategyParams:
    cpu_target: float
    cooldown_s: float
    warm_pool: int
    mode: ScalingMode

    def __post_init__(self):
        if not 0 < self.cpu_target <= 1:
            raise ValueError("cpu_target must be in (0, 1]")
        if self.cooldown_s < 0 or self.warm_pool < 0:
            raise ValueError("cooldown_s and warm_pool must be >= 0")


# Per-archetype base parameters (target CPU, cooldown, policy family).
ARCHETYPE_PARAMS: dict[Archetype, StrategyParams] = {
    Archetype.SPIKE: StrategyParams(0.30, 20 * 60, 2, ScalingMode.WARM_POOL),
    Archetype.PERIODIC: StrategyParams(0.75, 3 * 60, 0, ScalingMode.PREDICTIVE),
    Archetype.RAMP: StrategyParams(0.60, 7 * 60, 0, ScalingMode.TREND),
    Archetype.STATIONARY: StrategyParams(0.55, 12 * 60, 0, ScalingMode.CONSERVATIVE),
}


@dataclass(frozen=True)
class AdjustedParams:
    cpu_adj: float
    cool_adj: float
    rep_adj: int
    margin: float


def adjust_for_uncertainty(base: StrategyParams, rep_base: int, c: float) -> AdjustedParams:
    """Widen safety margins as classifier confidence ``c`` drops.

    m = 1 + 0.5(1 - c); the CPU target shrinks by up to 20%, the cooldown and
    the replica floor grow by the factor m.
    """
    if not 0.0 <= c <= 1.0 or math.isnan(c):
        raise ValueError(f"confidence must be in [0, 1], got {c}")
    if rep_base < 0:
        raise ValueError("rep_base must be >= 0")
    m = 1.0 + 0.5 * (1.0 - c)
    return AdjustedParams(
        cpu_adj=base.cpu_target * (1.0 - 0.2 * (1.0 - c)),
        cool_adj=base.cooldown_s * m,
        rep_adj=math.ceil(rep_base * m),
        margin=m,
    )


@dataclass(frozen=True)
class ClusterObservation:
    """What a strategy sees at one decision tick.

    ``request_history`` holds per-minute arrival counts of completed minutes;
    ``current_rps`` is the arrival rate over the simulator's short rate
    window; ``avg_cpu_utilization`` is busy time over ready pod time in the
    last metric window (1 minute).
    """

    timestamp: float
    ready_replicas: int
    starting_replicas: int
    avg_cpu_utilization: float
    request_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    current_rps: float = 0.0
    queue_length: int = 0

    @property
    def current_replicas(self) -> int:
        return self.ready_replicas + self.starting_replicas


@dataclass(frozen=True)
class ScalingDecision:
    desired_replicas: int
    reason: str


@dataclass(frozen=True)
class ReplicaBounds:
    min_replicas: int = 1
    max_replicas: int = 100

    def clamp(self, n: int) -> int:
        return int(min(self.max_replicas, max(self.min_replicas, n)))


def _decision(n: int, bounds: ReplicaBounds, reason: str) -> ScalingDecision:
    return ScalingDecision(bounds.clamp(n), reason)


# -- reactive HPA --------------------------------------------------------------

@dataclass(frozen=True)
class HpaConfig:
    target: float = 0.70
    tolerance: float = 0.10
    stabilization_s: float = 300.0
    decision_interval_s: int = 60


def hpa_recommendation(ready: int, utilization: float, target: float, tolerance: float,
                       current: int) -> int:
    """ceil(ready * util / target) outside the tolerance band, else ``current``."""
    ratio = utilization / target
    if abs(ratio - 1.0) <= tolerance:
        return current
    return math.ceil(ready * ratio - 1e-9)


def hpa_decide(obs: ClusterObservation, config: HpaConfig = HpaConfig(),
               recent: Sequence[tuple[float, int]] = (), last_scale_down: float = -math.inf,
               bounds: ReplicaBounds = ReplicaBounds()) -> ScalingDecision:
    """One HPA step.

    ``recent`` holds (timestamp, recommendation) pairs from earlier ticks.
    A scale-down only goes as low as the largest recommendation inside the
    stabilization window, and not within that window of a previous
    scale-down.
    """
    current = obs.current_replicas
    rec = bounds.clamp(hpa_recommendation(max(obs.ready_replicas, 1), obs.avg_cpu_utilization,
                                          config.target, config.tolerance, current))
    if rec >= current:
        return _decision(rec, bounds, "hpa:up" if rec > current else "hpa:hold")
    horizon = obs.timestamp - config.stabilization_s
    window_max = max([r for t, r in recent if t >= horizon] + [rec])
    target = min(current, window_max)
    if target < current and obs.timestamp - last_scale_down < config.stabilization_s:
        return _decision(current, bounds, "hpa:cooldown")
    return _decision(target, bounds, "hpa:down" if target < current else "hpa:stabilized")


class HpaStrategy:
    name = "hpa"

    def __init__(self, config: HpaConfig = HpaConfig(), bounds: ReplicaBounds = ReplicaBounds()):
        self.config = config
        self.bounds = bounds
        self.decision_interval_s = config.decision_interval_s
        self._recent: deque[tuple[float, int]] = deque()
        self._last_down = -math.inf

    def cooldown_s(self) -> float:
        return self.config.stabilization_s

    def decide(self, obs: ClusterObservation) -> ScalingDecision:
        while self._recent and self._recent[0][0] < obs.timestamp - self.config.stabilization_s:
            self._recent.popleft()
        decision = hpa_decide(obs, self.config, self._recent, self._last_down, self.bounds)
        rec = self.bounds.clamp(hpa_recommendation(
            max(obs.ready_replicas, 1), obs.avg_cpu_utilization, self.config.target,
            self.config.tolerance, obs.current_replicas))
        self._recent.append((obs.timestamp, rec))
        if decision.desired_replicas < obs.current_replicas:
            self._last_down = obs.timestamp
        return decision


# -- Holt-Winters ----------------------------------------------------------------

@dataclass(frozen=True)
class HoltWintersParams:
    alpha: float = 0.3
    beta: float = 0.1
    gamma: float = 0.2
    season_len: int = 60


class HoltWinters:
    """Additive triple exponential smoothing, updated one observation at a time.

    Until ``2 * season_len`` points have been seen it runs trend-only Holt
    smoothing; at that point the seasonal model is initialised from the full
    history (detrended season means) and replayed, so the state always equals
    a from-scratch fit on the same history.
    """

    def __init__(self, params: HoltWintersParams = HoltWintersParams()):
        self.p = params
        self.history: list[float] = []
        self.level = 0.0
        self.trend = 0.0
        self.seasonal: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.history)

    def _init_seasonal(self):
        L = self.p.season_len
        x = np.asarray(self.history, dtype=float)
        m1, m2 = x[:L].mean(), x[L:2 * L].mean()
        trend = (m2 - m1) / L
        center = (L - 1) / 2.0
        i = np.arange(L)
        s0 = x[:L] - (m1 + trend * (i - center))
        s1 = x[L:2 * L] - (m1 + trend * (i + L - center))
        self.seasonal = (s0 + s1) / 2.0
        self.level = m1 - trend * (center + 1.0)
        self.trend = trend
        for t, v in enumerate(x):
            self._step_seasonal(t, float(v))

    def _step_seasonal(self, t: int, x: float):
        a, b, g = self.p.alpha, self.p.beta, self.p.gamma
        k = t % self.p.season_len
        s = self.seasonal[k]
        level = a * (x - s) + (1 - a) * (self.level + self.trend)
        self.trend = b * (level - self.level) + (1 - b) * self.trend
        self.level = level
        self.seasonal[k] = g * (x - level) + (1 - g) * s

    def update(self, x: float):
        x = float(x)
        self.history.append(x)
        n = len(self.history)
        if self.seasonal is not None:
            self._step_seasonal(n - 1, x)
        elif n == 2 * self.p.season_len:
            self._init_seasonal()
        elif n == 1:
            self.level, self.trend = x, 0.0
        elif n == 2:
            self.level, self.trend = x, x - self.history[0]
        else:
            a, b = self.p.alpha, self.p.beta
            level = a * x + (1 - a) * (self.level + self.trend)
            self.trend = b * (level - self.level) + (1 - b) * self.trend
            self.level = level

    def extend(self, values) -> "HoltWinters":
        for v in values:
            self.update(v)
        return self

    def forecast(self, h: int) -> float:
        if not self.history:
            raise ValueError("cannot forecast from an empty history")
        value = self.level + h * self.trend
        if self.seasonal is not None:
            value += self.seasonal[(len(self.history) - 1 + h) % self.p.season_len]
        return float(value)


def holt_winters_forecast(history, horizon: int = 15,
                          params: HoltWintersParams = HoltWintersParams()) -> float:
    """Forecast ``horizon`` steps past the end of ``history`` (same units as history)."""
    history = np.asarray(history, dtype=float)
    if history.size == 0:
        raise ValueError("empty history")
    return HoltWinters(params).extend(history).forecast(horizon)


# -- generic predictive baseline ------------------------------------------------

def predictive_decide(obs: ClusterObservation, forecast_rps: float, capacity_per_pod: float,
                      target: float, bounds: ReplicaBounds = ReplicaBounds()) -> ScalingDecision:
    """Size the deployment for the forecast load at the target utilization."""
    if capacity_per_pod <= 0:
        raise ValueError("capacity_per_pod must be > 0")
    want = math.ceil(max(forecast_rps, 0.0) / (capacity_per_pod * target) - 1e-9)
    return _decision(want, bounds, f"predictive:{forecast_rps:.2f}rps")


@dataclass(frozen=True)
class PredictiveConfig:
    target: float = 0.70
    horizon_min: int = 15
    cooldown_s: float = 300.0
    decision_interval_s: int = 60
    hw: HoltWintersParams = HoltWintersParams()


class PredictiveStrategy:
    """Uniform Holt-Winters autoscaler; one model for every workload."""

    name = "predictive"

    def __init__(self, capacity_per_pod: float, config: PredictiveConfig = PredictiveConfig(),
                 bounds: ReplicaBounds = ReplicaBounds()):
        self.capacity = capacity_per_pod
        self.config = config
        self.bounds = bounds
        self.decision_interval_s = config.decision_interval_s
        self.forecaster = HoltWinters(config.hw)
        self._last_down = -math.inf

    def cooldown_s(self) -> float:
        return self.config.cooldown_s

    def decide(self, obs: ClusterObservation) -> ScalingDecision:
        _feed(self.forecaster, obs.request_history)
        if len(self.forecaster) == 0:
            return ScalingDecision(obs.current_replicas, "predictive:warmup")
        # never provision below what is arriving right now
        fc = max(obs.current_rps, self.forecaster.forecast(self.config.horizon_min) / 60.0)
        d = predictive_decide(obs, fc, self.capacity, self.config.target, self.bounds)
        if d.desired_replicas < obs.current_replicas:
            if obs.timestamp - self._last_down < self.config.cooldown_s:
                return ScalingDecision(obs.current_replicas, "predictive:cooldown")
            self._last_down = obs.timestamp
        return d


def _feed(forecaster: HoltWinters, history: np.ndarray):
    for v in history[len(forecaster):]:
        forecaster.update(v)


# -- archetype-aware policy -----------------------------------------------------

@dataclass(frozen=True)
class AapaConfig:
    capacity_per_pod: float = 10.0
    window_len: int = 60
    tolerance: float = 0.10
    trend_fit_min: int = 15
    trend_horizon_min: int = 7
    forecast_horizon_min: int = 15
    backlog_drain_s: float = 10.0
    decision_interval_s: int = 5
    bootstrap: tuple[Archetype, float] = (Archetype.STATIONARY, 0.25)
    params: dict = field(default_factory=lambda: dict(ARCHETYPE_PARAMS))
    hw: HoltWintersParams = HoltWintersParams()

    def with_warm_pool(self, extra: int) -> "AapaConfig":
        if not 1 <= extra <= 3:
            raise ValueError("warm pool must be 1-3 replicas")
        params = dict(self.params)
        params[Archetype.SPIKE] = replace(params[Archetype.SPIKE], warm_pool=extra)
        return replace(self, params=params)


def demand_rps(obs: ClusterObservation, backlog_drain_s: float) -> float:
    """Current arrival rate plus the rate needed to drain the queue."""
    return obs.current_rps + obs.queue_length / backlog_drain_s


def _size(load_rps: float, capacity: float, target: float) -> int:
    return math.ceil(max(load_rps, 0.0) / (capacity * target) - 1e-9)


def _trend_load(history: np.ndarray, fit_min: int, horizon_min: int) -> float:
    recent = np.asarray(history[-fit_min:], dtype=float)
    if len(recent) < 2:
        return float(recent[-1]) / 60.0 if len(recent) else 0.0
    t = np.arange(len(recent), dtype=float)
    slope, intercept = np.polyfit(t, recent, 1)
    return float(intercept + slope * (len(recent) - 1 + horizon_min)) / 60.0


def mode_load(mode: ScalingMode, obs: ClusterObservation, config: AapaConfig,
              forecaster: Optional[HoltWinters]) -> float:
    """Load (requests/s) a mode provisions for, before applying its CPU target."""
    demand = demand_rps(obs, config.backlog_drain_s)
    hist = obs.request_history
    if mode is ScalingMode.WARM_POOL:
        window = hist[-config.window_len:]
        peak = float(np.max(window)) / 60.0 if len(window) else 0.0
        return max(demand, peak)
    if mode is ScalingMode.PREDICTIVE and forecaster is not None and len(forecaster):
        fc = max(forecaster.forecast(h) for h in range(1, config.forecast_horizon_min + 1))
        return max(demand, fc / 60.0)
    if mode is ScalingMode.TREND and len(hist):
        return max(demand, _trend_load(hist, config.trend_fit_min, config.trend_horizon_min))
    return demand


def aapa_target(obs: ClusterObservation, archetype: Archetype, confidence: float,
                config: AapaConfig, forecaster: Optional[HoltWinters] = None,
                bounds: ReplicaBounds = ReplicaBounds()) -> tuple[int, AdjustedParams, str]:
    """Desired replicas for one archetype prediction, before cooldown handling."""
    base = config.params[archetype]
    cap = config.capacity_per_pod
    load = mode_load(base.mode, obs, config, forecaster)

    def sized(target: float) -> int:
        if base.mode is ScalingMode.CONSERVATIVE:
            ready = max(obs.ready_replicas, 1)
            util = load / (ready * cap)
            return hpa_recommendation(ready, util, target, config.tolerance, obs.current_replicas)
        return _size(load, cap, target) + base.warm_pool

    rep_base = bounds.clamp(sized(base.cpu_target))
    adj = adjust_for_uncertainty(base, rep_base, confidence)
    desired = bounds.clamp(max(sized(adj.cpu_adj), adj.rep_adj))
    reason = f"aapa:{archetype.value}/{base.mode.value} c={confidence:.3f}"
    return desired, adj, reason


def weak_label_classifier(th=None) -> Classify:
    """Classify a window with the labeling functions alone (no trained model)."""
    from .weaklabel import LfThresholds, weak_label

    thresholds = th or LfThresholds()

    def classify(window: np.ndarray):
        lab = weak_label(compute_features(window), thresholds)
        return lab.archetype, lab.confidence

    return classify


def bundle_classifier(bundle) -> Classify:
    def classify(window: np.ndarray):
        pred = bundle.predict(compute_features(window))
        return pred.archetype, pred.confidence

    return classify


class AapaStrategy:
    """Archetype-aware autoscaler.

    The trailing window is re-classified once per minute (when a new
    per-minute count arrives) and the result cached between ticks. Until a
    full window exists the bootstrap prediction is used.
    """

    name = "aapa"

    def __init__(self, classify: Optional[Classify] = None, config: AapaConfig = AapaConfig(),
                 bounds: ReplicaBounds = ReplicaBounds()):
        self.classify = classify or weak_label_classifier()
        self.config = config
        self.bounds = bounds
        self.decision_interval_s = config.decision_interval_s
        self.forecaster = HoltWinters(config.hw)
        self.prediction: tuple[Archetype, float] = config.bootstrap
        self._classified_at = -1
        self._last_action = -math.inf
        self._cooldown = config.params[config.bootstrap[0]].cooldown_s
        self.history_log: list[tuple[float, Archetype, float]] = []
        self._recent: deque[tuple[float, int]] = deque()
        # longest cooldown the confidence adjustment can produce (confidence 0)
        self.max_cooldown_s = 1.5 * max(p.cooldown_s for p in config.params.values())

    def cooldown_s(self) -> float:
        return self._cooldown

    def _refresh(self, obs: ClusterObservation):
        hist = obs.request_history
        _feed(self.forecaster, hist)
        n = len(hist)
        if n == self._classified_at:
            return
        self._classified_at = n
        if n >= self.config.window_len:
            arch, conf = self.classify(np.asarray(hist[-self.config.window_len:], dtype=float))
            self.prediction = (arch, float(min(1.0, max(0.0, conf))))
        self.history_log.append((obs.timestamp, *self.prediction))

    def decide(self, obs: ClusterObservation) -> ScalingDecision:
        self._refresh(obs)
        arch, conf = self.prediction
        desired, adj, reason = aapa_target(obs, arch, conf, self.config, self.forecaster,
                                           self.bounds)
        self._cooldown = adj.cool_adj
        current = obs.current_replicas
        now = obs.timestamp
        self._recent.append((now, desired))
        while self._recent and self._recent[0][0] < now - self.max_cooldown_s:
            self._recent.popleft()
        if desired < current:
            if now - self._last_action < adj.cool_adj:
                return ScalingDecision(current, reason + " hold:cooldown")
            # stabilize: never go below any recommendation inside the cooldown
            desired = max(r for t, r in self._recent if t >= now - adj.cool_adj)
            if desired >= current * (1.0 - self.config.tolerance):
                return ScalingDecision(current, reason + " hold:stabilized")
        if desired != current:
            self._last_action = obs.timestamp
        return ScalingDecision(desired, reason)
