"""Hand-engineered window features.

Every window is summarised by 37 numbers in three groups: distribution
statistics, time-domain shape and frequency-domain structure. The roster is
fixed and ordered; ``feature_names()`` is the column binding used by CSV
dumps and by the classifier.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

STATISTICAL = (
    "mean", "std", "min", "max", "median", "skewness", "excess_kurtosis",
    "p10", "p25", "p75", "p90", "p95", "p99", "iqr",
)
TIME_DOMAIN = (
    "peak_to_mean", "max_to_median", "ols_slope", "r_squared", "trend_direction",
    "autocorr_lag1", "autocorr_lag5", "autocorr_lag10", "autocorr_lag30",
    "mean_crossings", "coeff_variation", "burstiness", "longest_zero_run",
)
FREQUENCY_DOMAIN = (
    "spectral_entropy", "dominant_freq_index", "dominant_power_fraction",
    "band_energy_1", "band_energy_2", "band_energy_3", "band_energy_4",
    "spectral_centroid", "spectral_flatness", "total_spectral_energy",
)
FEATURE_NAMES: tuple[str, ...] = STATISTICAL + TIME_DOMAIN + FREQUENCY_DOMAIN
N_FEATURES = len(FEATURE_NAMES)
_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}

AUTOCORR_LAGS = (1, 5, 10, 30)


def feature_names() -> list[str]:
    """Return the 37 feature names in canonical column order."""
    return list(FEATURE_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    """Named 37-dimensional feature vector.

    ``aux`` carries diagnostics that labeling rules read but that are not
    part of the classifier input (currently ``monotone_fraction``).
    """

    values: np.ndarray
    names: tuple[str, ...] = FEATURE_NAMES
    aux: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.names),):
            raise ValueError(
                f"expected {len(self.names)} values, got shape {values.shape}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", tuple(self.names))

    def __getitem__(self, name: str) -> float:
        if self.names is FEATURE_NAMES or self.names == FEATURE_NAMES:
            return float(self.values[_INDEX[name]])
        return float(self.values[self.names.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values.tolist()))

    def as_array(self) -> np.ndarray:
        return self.values.copy()

    @classmethod
    def from_dict(cls, mapping: Mapping[str, float], fill: float = 0.0,
                  aux: Mapping[str, float] | None = None) -> "FeatureVector":
        """Build a canonical vector from a partial mapping; missing names get ``fill``."""
        unknown = set(mapping) - set(FEATURE_NAMES)
        if unknown:
            raise KeyError(f"unknown feature names: {sorted(unknown)}")
        values = np.array([float(mapping.get(n, fill)) for n in FEATURE_NAMES])
        return cls(values, FEATURE_NAMES, dict(aux or {}))


def _autocorr(x: np.ndarray, lag: int) -> float:
    if lag >= len(x) - 1:
        return 0.0
    a, b = x[:-lag], x[lag:]
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return 0.0
    r = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return min(1.0, max(-1.0, r))


def _longest_zero_run(x: np.ndarray) -> int:
    best = run = 0
    for v in x:
        run = run + 1 if v == 0 else 0
        best = max(best, run)
    return best


def _linear_fit(x: np.ndarray) -> tuple[float, float, np.ndarray]:
    """OLS fit against t = 0..n-1; returns (slope, r_squared, residuals)."""
    n = len(x)
    t = np.arange(n, dtype=float)
    tc = t - t.mean()
    xc = x - x.mean()
    slope = float(tc @ xc / (tc @ tc))
    resid = xc - slope * tc
    ss_tot = float(xc @ xc)
    if ss_tot == 0.0:
        return slope, 0.0, resid
    r2 = 1.0 - float(resid @ resid) / ss_tot
    return slope, min(1.0, max(0.0, r2)), resid


def _spectrum(signal: np.ndarray) -> np.ndarray:
    """Power at frequency bins 1..floor(n/2), DC excluded."""
    n = len(signal)
    power = np.abs(np.fft.rfft(signal)) ** 2
    return power[1:n // 2 + 1]


def compute_features(window: Sequence[float] | np.ndarray) -> FeatureVector:
    """Compute the 37-feature vector of one window.

    Args:
        window: at least two non-negative per-minute counts.

    Returns:
        FeatureVector in canonical order. Degenerate inputs (zero variance,
        zero median, silent spectrum) resolve to fixed finite values.

    Raises:
        ValueError: window shorter than 2 or containing negative values.
    """
    x = np.asarray(window, dtype=float)
    if x.ndim != 1 or len(x) < 2:
        raise ValueError("window must be 1-D with at least 2 values")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("window values must be finite and non-negative")
    n = len(x)

    mean = float(x.mean())
    std = float(x.std())
    median = float(np.median(x))
    mx = float(x.max())
    pct = np.percentile(x, [10, 25, 75, 90, 95, 99])
    if std > 0:
        z = (x - mean) / std
        skew = float(np.mean(z ** 3))
        kurt = float(np.mean(z ** 4)) - 3.0
    else:
        skew = kurt = 0.0

    stats = [mean, std, float(x.min()), mx, median, skew, kurt,
             *pct.tolist(), float(pct[2] - pct[1])]

    peak_to_mean = mx / mean if mean > 0 else 0.0
    max_to_median = mx / median if median > 0 else mx / (median + 1.0)
    slope, r2, resid = _linear_fit(x)
    if std == 0.0:
        r2 = 0.0
    scale = max(1.0, abs(mean))
    trend = 0 if abs(slope) <= 1e-12 * scale else (1 if slope > 0 else -1)
    acs = [_autocorr(x, k) if std > 0 else 0.0 for k in AUTOCORR_LAGS]
    dev = x - mean
    crossings = int(np.sum(dev[:-1] * dev[1:] < 0))
    cv = std / mean if mean > 0 else 0.0
    burst = (std - mean) / (std + mean) if (std + mean) > 0 else 0.0

    time_dom = [peak_to_mean, max_to_median, slope, r2, float(trend), *acs,
                float(crossings), cv, burst, float(_longest_zero_run(x))]

    # detrended, not just mean-removed: a linear ramp must not look periodic
    power = _spectrum(resid)
    total = float(power.sum())
    n_bins = len(power)
    if total > 0 and std > 0:
        p = power / total
        nz = p[p > 0]
        entropy = float(-(nz * np.log(nz)).sum() / np.log(n_bins)) if n_bins > 1 else 0.0
        entropy = min(1.0, max(0.0, entropy))
        dom = int(np.argmax(power))
        dom_idx = float(dom + 1)
        dom_frac = float(p[dom])
        bands = [float(b.sum()) for b in np.array_split(p, 4)]
        freqs = np.arange(1, n_bins + 1) / n
        centroid = float(freqs @ p)
        flatness = float(np.exp(np.mean(np.log(power + 1e-12))) / (total / n_bins))
    else:
        entropy = dom_idx = dom_frac = centroid = flatness = 0.0
        bands = [0.0] * 4
        total = 0.0

    freq_dom = [entropy, dom_idx, dom_frac, *bands, centroid, flatness, total]

    diffs = np.diff(x)
    monotone = float(max(np.sum(diffs > 0), np.sum(diffs < 0)) / len(diffs))

    return FeatureVector(np.array(stats + time_dom + freq_dom), FEATURE_NAMES,
                         {"monotone_fraction": monotone})


def feature_matrix(windows: Iterable[Sequence[float]]) -> np.ndarray:
    """Stack ``compute_features`` over many windows into an (n, 37) array."""
    rows = [compute_features(w).values for w in windows]
    if not rows:
        return np.empty((0, N_FEATURES))
    return np.vstack(rows)
