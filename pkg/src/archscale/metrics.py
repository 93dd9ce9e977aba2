"""Run metrics, the Resource Efficiency Index, and paired significance tests."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from .simulator import SimulationLog

OSCILLATION_WINDOW_S = 600.0
UNDERUTIL_THRESHOLD = 0.5
EFFICIENT_UTIL = 0.7


@dataclass(frozen=True)
class MetricsReport:
    n_arrivals: int
    n_completed: int
    n_dropped: int
    n_in_flight: int
    slo_violation_rate: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    mean_response_ms: float
    percentiles_available: bool
    cold_starts: int
    cold_start_affected: int
    replica_minutes: float
    demand_replica_minutes: float
    avg_cpu_util: float
    underutil_rate: float
    scaling_events: int
    oscillations: int
    mean_time_between_scaling_s: float
    duration_s: float

    @property
    def oscillations_per_hour(self) -> float:
        return self.oscillations / (self.duration_s / 3600.0) if self.duration_s > 0 else 0.0

    def as_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Smallest value with at least q% of the sample at or below it."""
    n = len(sorted_values)
    if n == 0:
        raise ValueError("empty sample")
    k = max(1, math.ceil(q / 100.0 * n))
    return float(sorted_values[k - 1])


def count_oscillations(events: Sequence, window_s: float = OSCILLATION_WINDOW_S) -> int:
    """Direction reversals between consecutive scaling events less than ``window_s`` apart."""
    n = 0
    for prev, cur in zip(events, events[1:]):
        d_prev = np.sign(prev.after - prev.before)
        d_cur = np.sign(cur.after - cur.before)
        if d_prev * d_cur < 0 and cur.timestamp - prev.timestamp <= window_s:
            n += 1
    return n


def demand_replica_minutes(minute_counts: Sequence[int], capacity_rps_per_pod: float) -> float:
    """Ideal replica integral: each minute needs ceil(load / per-pod capacity per minute)."""
    counts = np.asarray(minute_counts, dtype=float)
    per_min = capacity_rps_per_pod * 60.0
    return float(np.ceil(counts / per_min - 1e-12).clip(min=0).sum())


def compute_metrics(log: SimulationLog) -> MetricsReport:
    n = len(log.arrival_s)
    completed = log.completed
    resp_ms = np.sort(log.response_s[completed]) * 1000.0
    have = len(resp_ms) > 0
    nan = float("nan")
    util = log.minute_utilization()
    events = log.events
    duration = float(log.horizon_s)
    if len(events) >= 2:
        gaps = np.diff([e.timestamp for e in events])
        mtbs = float(np.mean(gaps))
    else:
        mtbs = duration
    return MetricsReport(
        n_arrivals=n,
        n_completed=int(completed.sum()),
        n_dropped=log.n_dropped,
        n_in_flight=int(log.in_flight.sum()),
        slo_violation_rate=float(log.violated.sum() / n) if n else 0.0,
        p50_ms=nearest_rank(resp_ms, 50) if have else nan,
        p95_ms=nearest_rank(resp_ms, 95) if have else nan,
        p99_ms=nearest_rank(resp_ms, 99) if have else nan,
        mean_response_ms=float(resp_ms.mean()) if have else nan,
        percentiles_available=have,
        cold_starts=log.pod_starts,
        cold_start_affected=int(log.cold_start_affected.sum()),
        replica_minutes=float(log.ready.sum()) / 60.0,
        demand_replica_minutes=demand_replica_minutes(log.minute_counts,
                                                      log.config.capacity_rps_per_pod),
        avg_cpu_util=float(util.mean()) if len(util) else 0.0,
        underutil_rate=float(np.mean(util < UNDERUTIL_THRESHOLD)) if len(util) else 0.0,
        scaling_events=len(events),
        oscillations=count_oscillations(events),
        mean_time_between_scaling_s=mtbs,
        duration_s=duration,
    )


# -- REI -----------------------------------------------------------------------

@dataclass(frozen=True)
class ReiWeights:
    alpha: float = 0.5
    beta: float = 0.3
    gamma: float = 0.2

    def __post_init__(self):
        w = (self.alpha, self.beta, self.gamma)
        if any(not math.isfinite(x) or x < 0 for x in w):
            raise ValueError(f"REI weights must be finite and >= 0, got {w}")
        if abs(sum(w) - 1.0) > 1e-9:
            raise ValueError(f"REI weights must sum to 1, got {sum(w):.12g}")

    @classmethod
    def preset(cls, name: str) -> "ReiWeights":
        try:
            return WEIGHT_PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown REI weight preset {name!r}; "
                             f"choose from {sorted(WEIGHT_PRESETS)}") from None


WEIGHT_PRESETS = {
    "default": ReiWeights(0.5, 0.3, 0.2),
    "balanced": ReiWeights(0.4, 0.3, 0.3),
}


@dataclass(frozen=True)
class ReiScore:
    s_slo: float
    s_eff: float
    s_stab: float
    rei: float


def rei_from_components(s_slo: float, s_eff: float, s_stab: float,
                        weights: ReiWeights = ReiWeights()) -> ReiScore:
    for name, v in (("s_slo", s_slo), ("s_eff", s_eff), ("s_stab", s_stab)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    rei = weights.alpha * s_slo + weights.beta * s_eff + weights.gamma * s_stab
    return ReiScore(s_slo, s_eff, s_stab, min(1.0, max(0.0, rei)))


def efficiency_score(avg_cpu_util: float, replica_minutes: float, demand_rm: float) -> float:
    util_part = min(avg_cpu_util / EFFICIENT_UTIL, 1.0)
    cost_part = min(demand_rm / replica_minutes, 1.0) if replica_minutes > 0 else 1.0
    return 0.5 * util_part + 0.5 * cost_part


def stability_score(oscillations_per_hour: float) -> float:
    return 1.0 / (1.0 + oscillations_per_hour)


def compute_rei(report: MetricsReport, demand_rm: Optional[float] = None,
                weights: ReiWeights = ReiWeights()) -> ReiScore:
    """REI of one run; ``demand_rm`` defaults to the report's own demand integral."""
    if demand_rm is None:
        demand_rm = report.demand_replica_minutes
    return rei_from_components(
        1.0 - report.slo_violation_rate,
        efficiency_score(report.avg_cpu_util, report.replica_minutes, demand_rm),
        stability_score(report.oscillations_per_hour),
        weights)


# -- sensitivity ----------------------------------------------------------------

@dataclass(frozen=True)
class SweepPoint:
    perturbed: str  # e.g. "alpha+0.05"
    weights: Optional[ReiWeights]
    scores: dict
    ranking: tuple
    changed: bool
    note: str = ""


def _rank(scores: Mapping[str, float]) -> tuple:
    return tuple(sorted(scores, key=lambda k: (-scores[k], k)))


def sensitivity_sweep(components: Mapping[str, tuple[float, float, float]], delta: float = 0.05,
                      base: ReiWeights = ReiWeights()) -> list[SweepPoint]:
    """Re-rank strategies at each single-weight +/-delta perturbation.

    ``components`` maps strategy name to (s_slo, s_eff, s_stab). Each point
    shifts one weight by +/-delta and renormalises onto the simplex; points
    where the shifted weight goes negative are reported as skipped.
    """
    if not components:
        raise ValueError("need at least one strategy")

    def scores(w: ReiWeights) -> dict:
        return {k: rei_from_components(*c, w).rei for k, c in components.items()}

    base_scores = scores(base)
    base_rank = _rank(base_scores)
    points = [SweepPoint("base", base, base_scores, base_rank, False)]
    names = ("alpha", "beta", "gamma")
    for i, name in enumerate(names):
        for sign in (+1, -1):
            raw = [base.alpha, base.beta, base.gamma]
            raw[i] += sign * delta
            label = f"{name}{'+' if sign > 0 else '-'}{delta:g}"
            if min(raw) < 0:
                points.append(SweepPoint(label, None, {}, (), False, "skipped: negative weight"))
                continue
            total = sum(raw)
            w = ReiWeights(*(x / total for x in raw))
            s = scores(w)
            r = _rank(s)
            points.append(SweepPoint(label, w, s, r, r != base_rank))
    return points


def ranking_changes(points: Sequence[SweepPoint]) -> int:
    return sum(p.changed for p in points)


# -- Wilcoxon signed-rank ---------------------------------------------------------

@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    w_minus: float
    p_value: float
    significant: bool
    n: int
    method: str
    degenerate: bool = False


def _signed_ranks(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-D and of equal length")
    d = a - b
    d = d[d != 0]
    ranks = stats.rankdata(np.abs(d))  # average ranks for ties
    return d, ranks


def exact_null_counts(doubled_ranks: Sequence[int]) -> list[int]:
    """counts[s] = number of sign patterns whose positive doubled-rank sum is s."""
    counts = [1]
    for r in doubled_ranks:
        nxt = counts + [0] * r
        for s, c in enumerate(counts):
            if c:
                nxt[s + r] += c
        counts = nxt
    return counts


def _exact_p(ranks: np.ndarray, w_min: float) -> float:
    doubled = [int(round(2 * r)) for r in ranks]
    counts = exact_null_counts(doubled)
    cutoff = int(round(2 * w_min))
    tail = sum(counts[:cutoff + 1])
    return min(1.0, 2 * tail / 2 ** len(doubled))


def _approx_p(ranks: np.ndarray, w_plus: float) -> float:
    n = len(ranks)
    mean = n * (n + 1) / 4.0
    _, ties = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties ** 3 - ties)) / 48.0
    if var <= 0:
        return 1.0
    z = max(abs(w_plus - mean) - 0.5, 0.0) / math.sqrt(var)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b, alpha: float = 0.05, method: str = "auto") -> WilcoxonResult:
    """Two-sided paired signed-rank test with zero differences dropped.

    ``method``: "exact" (full null distribution), "approx" (normal with
    continuity and tie correction) or "auto" (exact for n <= 20).
    """
    if method not in ("auto", "exact", "approx"):
        raise ValueError(f"unknown method {method!r}")
    d, ranks = _signed_ranks(a, b)
    n = len(d)
    if n == 0:
        return WilcoxonResult(0.0, 0.0, 0.0, 1.0, False, 0, "degenerate", True)
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    w_min = min(w_plus, w_minus)
    use = ("exact" if n <= 20 else "approx") if method == "auto" else method
    p = _exact_p(ranks, w_min) if use == "exact" else _approx_p(ranks, w_plus)
    return WilcoxonResult(w_min, w_plus, w_minus, p, p < alpha, n, use)


# -- aggregation helpers -------------------------------------------------------------

def mean_ci(values: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """Mean and half-width of a Student-t interval (0 half-width for n < 2)."""
    x = np.asarray(values, dtype=float)
    m = float(x.mean())
    if len(x) < 2:
        return m, 0.0
    se = float(x.std(ddof=1)) / math.sqrt(len(x))
    return m, float(stats.t.ppf(0.5 + level / 2.0, len(x) - 1)) * se


def format_table(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    """Left-aligned first column, right-aligned rest; floats get 4 decimals."""
    def cell(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    grid = [list(map(str, header))] + [[cell(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in grid) for i in range(len(header))]
    lines = []
    for k, r in enumerate(grid):
        parts = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(parts).rstrip())
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
