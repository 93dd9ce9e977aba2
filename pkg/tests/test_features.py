import numpy as np
import pytest
from hypothesis import given, strategies as st

from archscale.features import (FEATURE_NAMES, N_FEATURES, FeatureVector, compute_features,
                                feature_matrix, feature_names)


def test_roster():
    names = feature_names()
    assert len(names) == 37 == N_FEATURES
    assert names[0] == "mean"
    assert len(set(names)) == 37


def test_constant_window_conventions():
    fv = compute_features([5] * 60)
    assert fv["mean"] == 5 and fv["std"] == 0
    assert fv["spectral_entropy"] == 0 and fv["r_squared"] == 0
    assert fv["trend_direction"] == 0
    assert np.all(np.isfinite(fv.values))


def test_single_spike_moments():
    x = [1.0] * 59 + [100.0]
    fv = compute_features(x)
    assert fv["excess_kurtosis"] > 10
    assert fv["max_to_median"] == pytest.approx(100.0)
    # hand moments: mean, population std, standardized 4th moment
    a = np.array(x)
    z = (a - a.mean()) / a.std()
    assert fv["excess_kurtosis"] == pytest.approx(np.mean(z ** 4) - 3)
    assert fv["skewness"] == pytest.approx(np.mean(z ** 3))


def test_sinusoid_dominant_frequency():
    t = np.arange(60)
    fv = compute_features(50 + 20 * np.sin(2 * np.pi * t / 20))
    assert fv["dominant_freq_index"] == 3
    assert fv["dominant_power_fraction"] > 0.9


def test_linear_ramp():
    fv = compute_features(np.arange(60) * 2.0 + 10)
    assert fv["ols_slope"] == pytest.approx(2.0)
    assert fv["r_squared"] == pytest.approx(1.0)
    assert fv["trend_direction"] == 1
    assert fv.aux["monotone_fraction"] == 1.0


def test_percentiles_and_zero_run():
    x = [0, 0, 0, 4, 5, 0, 0, 9, 1, 2]
    fv = compute_features(x)
    assert fv["longest_zero_run"] == 3
    assert fv["p90"] == pytest.approx(np.percentile(x, 90))
    assert fv["iqr"] == pytest.approx(np.percentile(x, 75) - np.percentile(x, 25))


def test_autocorrelation_matches_numpy():
    rng = np.random.default_rng(1)
    x = rng.poisson(30, 60).astype(float)
    fv = compute_features(x)
    assert fv["autocorr_lag1"] == pytest.approx(np.corrcoef(x[:-1], x[1:])[0, 1])


def test_bad_inputs():
    with pytest.raises(ValueError):
        compute_features([1.0])
    with pytest.raises(ValueError):
        compute_features([1.0, -2.0, 3.0])


def test_from_dict_and_unknown_names():
    fv = FeatureVector.from_dict({"mean": 3.0})
    assert fv["mean"] == 3.0 and fv["std"] == 0.0
    with pytest.raises(KeyError):
        FeatureVector.from_dict({"nope": 1.0})
    with pytest.raises(ValueError):
        FeatureVector(np.zeros(36))


def test_feature_matrix_shape():
    assert feature_matrix([]).shape == (0, 37)
    assert feature_matrix([[1, 2, 3], [3, 2, 1]]).shape == (2, 37)


@given(st.lists(st.integers(0, 10_000), min_size=2, max_size=120))
def test_features_finite_and_bounded(values):
    fv = compute_features(values)
    assert np.all(np.isfinite(fv.values))
    assert 0.0 <= fv["spectral_entropy"] <= 1.0
    assert 0.0 <= fv["r_squared"] <= 1.0
    for lag in (1, 5, 10, 30):
        assert -1.0 <= fv[f"autocorr_lag{lag}"] <= 1.0
    bands = [fv[f"band_energy_{i}"] for i in range(1, 5)]
    assert sum(bands) == pytest.approx(1.0) or sum(bands) == 0.0
    assert fv["min"] <= fv["median"] <= fv["max"]


@given(st.lists(st.integers(0, 500), min_size=2, max_size=90), st.integers(1, 5))
def test_scale_invariant_shape_features(values, k):
    a = compute_features(values)
    b = compute_features([k * v for v in values])
    for name in ("coeff_variation", "r_squared", "spectral_entropy", "autocorr_lag1",
                 "dominant_power_fraction", "trend_direction"):
        assert b[name] == pytest.approx(a[name], abs=1e-7)
