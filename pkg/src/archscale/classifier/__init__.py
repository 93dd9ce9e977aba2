"""Archetype classifier: boosted trees plus beta-calibrated confidence."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ..archetypes import ARCHETYPES, Archetype
from ..features import FEATURE_NAMES, FeatureVector
from .calibration import BetaCalibrator, BetaMap, CalibrationError, fit_beta_calibrator
from .gbdt import BoostingParams, Tree, TrainingError, TreeEnsemble, fit_boosting

__all__ = [
    "BetaCalibrator", "BetaMap", "BoostingParams", "CalibrationError", "Evaluation",
    "ModelBundle", "Prediction", "TrainingError", "TreeEnsemble", "evaluate",
    "fit_beta_calibrator", "load_bundle", "predict", "predict_proba", "save_bundle", "train",
]

FORMAT_VERSION = 1
N_CLASSES = len(ARCHETYPES)


def train(X: np.ndarray, labels: Sequence, params: BoostingParams = BoostingParams(),
          seed: int = 0, min_rows: int = 100) -> TreeEnsemble:
    """Train the booster on an (n, 37) matrix and archetype labels."""
    y = np.array([Archetype.parse(l).index for l in labels], dtype=np.int64)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(FEATURE_NAMES):
        raise TrainingError(f"expected (n, {len(FEATURE_NAMES)}) feature matrix")
    if len(y) < min_rows:
        raise TrainingError(f"need at least {min_rows} rows, got {len(y)}")
    return fit_boosting(X, y, N_CLASSES, FEATURE_NAMES, params, seed)


def _as_row(model: TreeEnsemble, fv) -> np.ndarray:
    if isinstance(fv, FeatureVector):
        if tuple(fv.names) != tuple(model.feature_names):
            raise ValueError("feature order does not match the model's column binding")
        return fv.values[None, :]
    x = np.asarray(fv, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != len(model.feature_names):
        raise ValueError(f"expected {len(model.feature_names)} features, got shape {x.shape}")
    return x


def predict_proba(model: TreeEnsemble, fv) -> np.ndarray:
    """Class probabilities for one vector (shape (4,)) or a matrix (shape (n, 4))."""
    x = _as_row(model, fv)
    proba = model.predict_proba(x)
    return proba[0] if (isinstance(fv, FeatureVector) or np.ndim(fv) == 1) else proba


@dataclass(frozen=True)
class Prediction:
    archetype: Archetype
    raw_proba: np.ndarray
    confidence: float


def prediction_from_proba(raw: np.ndarray, calibrator: BetaCalibrator) -> Prediction:
    k = int(np.argmax(raw))  # first maximum wins: enumeration-order tie-break
    return Prediction(ARCHETYPES[k], raw, calibrator.calibrate(k, float(raw[k])))


def predict(model: TreeEnsemble, calibrator: BetaCalibrator, fv) -> Prediction:
    return prediction_from_proba(predict_proba(model, fv), calibrator)


@dataclass
class ModelBundle:
    """A trained model with its calibrator; immutable once fitted."""

    model: TreeEnsemble
    calibrator: BetaCalibrator

    def predict(self, fv) -> Prediction:
        return predict(self.model, self.calibrator, fv)


@dataclass
class Evaluation:
    accuracy: float
    precision: dict[str, float]
    recall: dict[str, float]
    confusion: np.ndarray  # rows = true class, columns = predicted

    def confusion_table(self) -> str:
        names = [a.value for a in ARCHETYPES]
        width = max(len(n) for n in names) + 2
        lines = ["True/Pred".ljust(width) + "".join(n.rjust(width) for n in names)]
        for n, row in zip(names, self.confusion):
            lines.append(n.ljust(width) + "".join(str(int(v)).rjust(width) for v in row))
        return "\n".join(lines)


def evaluate_labels(true: Sequence, pred: Sequence) -> Evaluation:
    t = np.array([Archetype.parse(v).index for v in true])
    p = np.array([Archetype.parse(v).index for v in pred])
    if len(t) == 0:
        raise ValueError("empty test set")
    cm = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(cm, (t, p), 1)
    col, row = cm.sum(axis=0), cm.sum(axis=1)
    diag = np.diag(cm)
    precision = {a.value: float(diag[i] / col[i]) if col[i] else 0.0 for i, a in enumerate(ARCHETYPES)}
    recall = {a.value: float(diag[i] / row[i]) if row[i] else 0.0 for i, a in enumerate(ARCHETYPES)}
    return Evaluation(float(diag.sum() / len(t)), precision, recall, cm)


def evaluate(model: TreeEnsemble, X: np.ndarray, labels: Sequence) -> Evaluation:
    proba = model.predict_proba(np.asarray(X, dtype=float))
    pred = [ARCHETYPES[k] for k in np.argmax(proba, axis=1)]
    return evaluate_labels(labels, pred)


# -- serialization -----------------------------------------------------------

def dumps_bundle(bundle: ModelBundle) -> str:
    m = bundle.model
    out = io.StringIO()
    w = out.write
    w(f"archscale-model {FORMAT_VERSION}\n")
    w("features " + ",".join(m.feature_names) + "\n")
    w("classes " + ",".join(a.value for a in ARCHETYPES) + "\n")
    p = m.params
    w(f"params n_rounds={p.n_rounds} max_depth={p.max_depth} learning_rate={p.learning_rate!r} "
      f"n_bins={p.n_bins} l2={p.l2!r} min_child_samples={p.min_child_samples} "
      f"min_gain={p.min_gain!r} subsample={p.subsample!r}\n")
    w("base_score " + " ".join(repr(float(v)) for v in m.base_score) + "\n")
    w(f"trees {len(m.trees)}\n")
    for i, (tree, k) in enumerate(zip(m.trees, m.tree_class)):
        w(f"tree {i} class={k} nodes={len(tree)}\n")
        for j in range(len(tree)):
            w(f"{int(tree.feature[j])} {float(tree.threshold[j])!r} {int(tree.left[j])} "
              f"{int(tree.right[j])} {float(tree.value[j])!r}\n")
    w(f"calibrator {len(bundle.calibrator.maps)}\n")
    for k, bm in enumerate(bundle.calibrator.maps):
        w(f"{k} {bm.a!r} {bm.b!r} {bm.c!r}\n")
    w("end\n")
    return out.getvalue()


def loads_bundle(text: str) -> ModelBundle:
    lines = iter(text.splitlines())

    def expect(prefix: str) -> str:
        line = next(lines)
        if not line.startswith(prefix):
            raise ValueError(f"model file: expected {prefix!r}, got {line[:40]!r}")
        return line[len(prefix):].strip()

    version = int(expect("archscale-model"))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {version}")
    names = tuple(expect("features").split(","))
    classes = expect("classes").split(",")
    if classes != [a.value for a in ARCHETYPES]:
        raise ValueError("model class order does not match archetype enumeration")
    raw = dict(kv.split("=") for kv in expect("params").split())
    ints = {"n_rounds", "max_depth", "n_bins", "min_child_samples"}
    params = BoostingParams(**{k: int(v) if k in ints else float(v) for k, v in raw.items()})
    base = np.array([float(v) for v in expect("base_score").split()])
    trees, owners = [], []
    for _ in range(int(expect("trees"))):
        header = dict(kv.split("=") for kv in expect("tree").split()[1:])
        rows = [next(lines).split() for _ in range(int(header["nodes"]))]
        trees.append(Tree(np.array([int(r[0]) for r in rows], dtype=np.int64),
                          np.array([float(r[1]) for r in rows]),
                          np.array([int(r[2]) for r in rows], dtype=np.int64),
                          np.array([int(r[3]) for r in rows], dtype=np.int64),
                          np.array([float(r[4]) for r in rows])))
        owners.append(int(header["class"]))
    maps = []
    for _ in range(int(expect("calibrator"))):
        _, a, b, c = next(lines).split()
        maps.append(BetaMap(float(a), float(b), float(c)))
    expect("end")
    model = TreeEnsemble(names, len(classes), params, base, trees, owners)
    return ModelBundle(model, BetaCalibrator(tuple(maps)))


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    Path(path).write_text(dumps_bundle(bundle), encoding="utf-8")


def load_bundle(path: str | Path) -> ModelBundle:
    return loads_bundle(Path(path).read_text(encoding="utf-8"))
