"""Weak supervision: ten Boolean labeling functions and a majority vote."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Iterable, Optional, Sequence

from .archetypes import ARCHETYPES, Archetype
from .features import FeatureVector, compute_features
from .trace import Window

logger = logging.getLogger(__name__)

N_LABELING_FUNCTIONS = 10
FALLBACK_CONFIDENCE = 0.25


@dataclass(frozen=True)
class LfThresholds:
    """Rule thresholds; every field can be overridden from the experiment config."""

    spike_kurtosis: float = 10.0
    spike_max_to_median: float = 20.0
    spike_burstiness: float = 0.7
    spike_p99_to_median: float = 15.0
    periodic_entropy: float = 0.5
    periodic_autocorr: float = 0.6
    periodic_dominant_fraction: float = 0.4
    ramp_r_squared: float = 0.8
    ramp_monotone_fraction: float = 0.8
    stationary_cv: float = 0.3
    stationary_entropy: float = 0.8
    stationary_r_squared: float = 0.2
    stationary_std_to_mean: float = 0.3
    idle_mean: float = 0.1

    @classmethod
    def from_dict(cls, mapping: dict) -> "LfThresholds":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise ValueError(f"unknown LF threshold keys: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in mapping.items()})


@dataclass(frozen=True)
class LfVote:
    lf_id: int
    vote: Optional[Archetype]  # None means abstain

    @property
    def abstained(self) -> bool:
        return self.vote is None


@dataclass(frozen=True)
class WeakLabel:
    archetype: Archetype
    confidence: float
    votes: tuple[LfVote, ...] = field(default=(), repr=False)


def _max_autocorr(fv: FeatureVector) -> float:
    return max(fv["autocorr_lag5"], fv["autocorr_lag10"], fv["autocorr_lag30"])


def apply_labeling_functions(fv: FeatureVector, th: LfThresholds = LfThresholds()
                             ) -> list[LfVote]:
    """Evaluate LF1..LF10 on one feature vector."""
    S, P, R, ST = ARCHETYPES
    median = fv["median"]
    max_ac = _max_autocorr(fv)
    monotone = fv.aux.get("monotone_fraction")

    rules = [
        fv["excess_kurtosis"] > th.spike_kurtosis and fv["max_to_median"] > th.spike_max_to_median,
        fv["burstiness"] > th.spike_burstiness and fv["p99"] > th.spike_p99_to_median * median,
        fv["spectral_entropy"] < th.periodic_entropy and max_ac > th.periodic_autocorr,
        fv["dominant_power_fraction"] > th.periodic_dominant_fraction,
        fv["r_squared"] > th.ramp_r_squared and abs(fv["ols_slope"]) > 0,
        monotone is not None and monotone >= th.ramp_monotone_fraction,
        fv["coeff_variation"] < th.stationary_cv and fv["spectral_entropy"] > th.stationary_entropy,
        fv["r_squared"] < th.stationary_r_squared and fv["std"] < th.stationary_std_to_mean * fv["mean"],
        fv["mean"] < th.idle_mean,
        fv["max_to_median"] > th.spike_max_to_median and max_ac > th.periodic_autocorr,
    ]
    targets = (S, S, P, P, R, R, ST, ST, ST, P)
    return [LfVote(i + 1, target if fired else None)
            for i, (fired, target) in enumerate(zip(rules, targets))]


def majority_vote(votes: Sequence[LfVote]) -> WeakLabel:
    """Plurality over non-abstaining votes with SPIKE > PERIODIC > RAMP > STATIONARY ties."""
    if len(votes) != N_LABELING_FUNCTIONS:
        raise ValueError(f"expected {N_LABELING_FUNCTIONS} votes, got {len(votes)}")
    counts = Counter(v.vote for v in votes if v.vote is not None)
    cast = sum(counts.values())
    if cast == 0:
        return WeakLabel(Archetype.STATIONARY, FALLBACK_CONFIDENCE, tuple(votes))
    top = max(counts.values())
    winner = next(a for a in ARCHETYPES if counts.get(a, 0) == top)
    return WeakLabel(winner, top / cast, tuple(votes))


def weak_label(fv: FeatureVector, th: LfThresholds = LfThresholds()) -> WeakLabel:
    return majority_vote(apply_labeling_functions(fv, th))


@dataclass
class LabeledRow:
    function_id: str
    start_minute: int
    features: FeatureVector
    label: WeakLabel


def label_dataset(windows: Iterable[Window], th: LfThresholds = LfThresholds()
                  ) -> list[LabeledRow]:
    """Featurise and weakly label windows, skipping (and logging) bad ones."""
    rows = []
    for w in windows:
        try:
            fv = compute_features(w.values)
        except ValueError as exc:
            logger.warning("skipping window %s@%d: %s", w.function_id, w.start_minute, exc)
            continue
        rows.append(LabeledRow(w.function_id, w.start_minute, fv, weak_label(fv, th)))
    if rows:
        logger.info("class distribution: %s", class_distribution(rows))
    return rows


def class_distribution(rows: Sequence[LabeledRow]) -> dict[str, float]:
    """Fraction of rows per archetype, in enumeration order."""
    counts = Counter(r.label.archetype for r in rows)
    n = max(len(rows), 1)
    return {a.value: counts.get(a, 0) / n for a in ARCHETYPES}
