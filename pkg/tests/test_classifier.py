import numpy as np
import pytest
from hypothesis import given, strategies as st

from archscale.archetypes import ARCHETYPES, Archetype
from archscale.classifier import (BetaCalibrator, BetaMap, BoostingParams, CalibrationError,
                                  ModelBundle, TrainingError, evaluate, fit_beta_calibrator,
                                  load_bundle, predict, predict_proba, save_bundle, train)
from archscale.classifier import evaluate_labels, prediction_from_proba
from archscale.classifier.calibration import fit_beta_map
from archscale.classifier.gbdt import fit_boosting
from archscale.features import FEATURE_NAMES, FeatureVector


def _blobs(n_per=80, seed=0):
    """Four classes separated along the first four features."""
    rng = np.random.default_rng(seed)
    X, y = [], []
    for k in range(4):
        block = rng.normal(0, 1, (n_per, 37))
        block[:, k] += 8.0
        X.append(block)
        y += [ARCHETYPES[k]] * n_per
    return np.vstack(X), y


@pytest.fixture(scope="module")
def model():
    X, y = _blobs()
    return train(X, y, BoostingParams(n_rounds=20), seed=0)


def test_separable_one_feature():
    x = np.concatenate([np.linspace(0, 1, 50), np.linspace(2, 3, 50)])
    X = np.zeros((100, 2))
    X[:, 0] = x
    y = np.array([0] * 50 + [1] * 50)
    m = fit_boosting(X, y, 2, ("a", "b"), BoostingParams(n_rounds=10))
    assert np.mean(np.argmax(m.predict_proba(X), axis=1) == y) == 1.0


def test_single_class_rejected():
    X, _ = _blobs()
    with pytest.raises(TrainingError):
        train(X, [Archetype.SPIKE] * len(X))


def test_wrong_width_rejected():
    with pytest.raises(TrainingError):
        train(np.zeros((200, 5)), ["SPIKE"] * 200)


def test_proba_sums_to_one(model):
    X, _ = _blobs(seed=5)
    proba = predict_proba(model, X)
    assert proba.shape == (len(X), 4)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert np.all((proba >= 0) & (proba <= 1))


def test_centroid_prediction(model):
    centroid = np.zeros(37)
    centroid[0] = 8.0
    fv = FeatureVector(centroid)
    assert np.argmax(predict_proba(model, fv)) == Archetype.SPIKE.index


def test_held_out_accuracy(model):
    X, y = _blobs(seed=11)
    assert evaluate(model, X, y).accuracy >= 0.99


def test_rebinding_contract(model):
    fv = FeatureVector(np.zeros(37), names=tuple(reversed(FEATURE_NAMES)))
    with pytest.raises(ValueError):
        predict_proba(model, fv)
    with pytest.raises(ValueError):
        predict_proba(model, np.zeros(12))


def test_bundle_round_trip(model, tmp_path):
    X, y = _blobs(seed=3)
    cal = fit_beta_calibrator(model.predict_proba(X), np.array([a.index for a in y]))
    bundle = ModelBundle(model, cal)
    path = tmp_path / "m.txt"
    save_bundle(bundle, path)
    back = load_bundle(path)
    probe, _ = _blobs(n_per=10, seed=99)
    assert np.array_equal(back.model.predict_proba(probe), model.predict_proba(probe))
    for row in probe:
        a, b = bundle.predict(row), back.predict(row)
        assert a.archetype is b.archetype and a.confidence == b.confidence
    save_bundle(back, tmp_path / "m2.txt")
    assert (tmp_path / "m2.txt").read_bytes() == path.read_bytes()


def test_corrupt_model_file(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("archscale-model 99\n")
    with pytest.raises(ValueError):
        load_bundle(p)


def test_training_is_deterministic():
    X, y = _blobs(n_per=40)
    params = BoostingParams(n_rounds=5, subsample=0.7)
    a = train(X, y, params, seed=4).predict_proba(X)
    b = train(X, y, params, seed=4).predict_proba(X)
    assert np.array_equal(a, b)


# -- calibration --------------------------------------------------------------

def test_identity_map_is_exact():
    p = np.linspace(0.01, 0.99, 50)
    assert np.allclose(BetaMap(1, 1, 0)(p), p, atol=1e-12)


def test_calibrated_inputs_give_near_identity():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.02, 0.98, 20000)
    y = (rng.uniform(size=p.size) < p).astype(float)
    m = fit_beta_map(p, y)
    grid = np.linspace(0.05, 0.95, 19)
    assert np.max(np.abs(m(grid) - grid)) < 0.05


def test_overconfident_inputs_get_shrunk():
    rng = np.random.default_rng(1)
    true_p = rng.uniform(0.1, 0.9, 20000)
    y = (rng.uniform(size=true_p.size) < true_p).astype(float)
    raw = 1 / (1 + np.exp(-3 * np.log(true_p / (1 - true_p))))  # sharpened
    m = fit_beta_map(raw, y)
    assert abs(float(m(0.99)) - 0.99) > 0.05
    assert m.a >= 0 and m.b >= 0


def test_single_class_validation_rejected():
    with pytest.raises(CalibrationError):
        fit_beta_calibrator(np.full((10, 4), 0.25), np.zeros(10, dtype=int))


def test_confident_prediction_confidence():
    cal = BetaCalibrator.identity()
    pred = prediction_from_proba(np.array([0.97, 0.01, 0.01, 0.01]), cal)
    assert pred.archetype is Archetype.SPIKE
    assert pred.confidence == pytest.approx(0.97, abs=0.05)


def test_uniform_tie_break():
    pred = prediction_from_proba(np.full(4, 0.25), BetaCalibrator.identity())
    assert pred.archetype is Archetype.SPIKE


@given(st.floats(0, 1), st.floats(0, 3), st.floats(0, 3), st.floats(-3, 3))
def test_beta_map_monotone_and_bounded(p, a, b, c):
    m = BetaMap(a, b, c)
    lo, hi = float(m(p)), float(m(min(1.0, p + 0.01)))
    assert 0.0 <= lo <= 1.0
    assert hi >= lo - 1e-12


# -- evaluation ---------------------------------------------------------------

def test_perfect_predictions():
    labels = [a for a in ARCHETYPES for _ in range(5)]
    ev = evaluate_labels(labels, labels)
    assert ev.accuracy == 1.0
    assert np.array_equal(ev.confusion, np.diag([5] * 4))
    assert "STATIONARY" in ev.confusion_table()


def test_predict_helper(model):
    p = predict(model, BetaCalibrator.identity(), np.eye(37)[1] * 8)
    assert p.archetype is Archetype.PERIODIC
    assert 0 <= p.confidence <= 1
