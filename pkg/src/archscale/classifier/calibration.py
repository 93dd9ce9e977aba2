"""Beta calibration of per-class probabilities.

The calibration map is mu(p) = 1 / (1 + 1 / (exp(c) * p**a / (1 - p)**b)),
i.e. a logistic regression on (ln p, -ln(1 - p)). Fitted one-vs-rest per class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)

P_CLAMP = 1e-6


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class BetaMap:
    a: float = 1.0
    b: float = 1.0
    c: float = 0.0

    def __call__(self, p):
        p = np.clip(np.asarray(p, dtype=float), P_CLAMP, 1 - P_CLAMP)
        z = self.c + self.a * np.log(p) - self.b * np.log1p(-p)
        return 1.0 / (1.0 + np.exp(-z))


def _logistic_newton(X: np.ndarray, y: np.ndarray, ridge: float, max_iter: int = 100
                     ) -> np.ndarray:
    """Penalised logistic regression; column 0 of X is the (unpenalised) intercept."""
    w = np.zeros(X.shape[1])
    pen = np.full(X.shape[1], ridge)
    pen[0] = 0.0

    def loss(w):
        z = X @ w
        return float(np.sum(np.logaddexp(0, z) - y * z) + 0.5 * np.sum(pen * w * w))

    cur = loss(w)
    for _ in range(max_iter):
        mu = 1.0 / (1.0 + np.exp(-(X @ w)))
        grad = X.T @ (mu - y) + pen * w
        hess = (X * (mu * (1 - mu))[:, None]).T @ X + np.diag(pen) + 1e-10 * np.eye(len(w))
        step = np.linalg.solve(hess, grad)
        t = 1.0
        while t > 1e-8:
            cand = w - t * step
            new = loss(cand)
            if new <= cur:
                break
            t *= 0.5
        else:
            break
        w, prev, cur = cand, cur, new
        if prev - cur < 1e-12 * max(1.0, abs(cur)):
            break
    return w


def fit_beta_map(p: np.ndarray, y: np.ndarray, ridge: float = 1e-2) -> BetaMap:
    """Maximum-likelihood (a, b, c) with a, b >= 0 enforced by clamp-and-refit."""
    p = np.clip(np.asarray(p, dtype=float), P_CLAMP, 1 - P_CLAMP)
    y = np.asarray(y, dtype=float)
    ln_p, ln_q = np.log(p), -np.log1p(-p)
    ones = np.ones_like(p)

    c, a, b = _logistic_newton(np.column_stack([ones, ln_p, ln_q]), y, ridge)
    if a < 0 and b < 0:
        c = _logistic_newton(ones[:, None], y, ridge)[0]
        a = b = 0.0
    elif a < 0:
        c, b = _logistic_newton(np.column_stack([ones, ln_q]), y, ridge)
        a = 0.0
        if b < 0:
            c, b = _logistic_newton(ones[:, None], y, ridge)[0], 0.0
    elif b < 0:
        c, a = _logistic_newton(np.column_stack([ones, ln_p]), y, ridge)
        b = 0.0
        if a < 0:
            c, a = _logistic_newton(ones[:, None], y, ridge)[0], 0.0
    return BetaMap(float(a), float(b), float(c))


@dataclass(frozen=True)
class BetaCalibrator:
    """One beta map per class, applied to that class's raw probability."""

    maps: tuple[BetaMap, ...]

    def calibrate(self, k: int, p: float) -> float:
        return float(min(1.0, max(0.0, self.maps[k](p))))

    def calibrate_all(self, proba: np.ndarray) -> np.ndarray:
        proba = np.atleast_2d(proba)
        return np.column_stack([m(proba[:, k]) for k, m in enumerate(self.maps)])

    @classmethod
    def identity(cls, n_classes: int = 4) -> "BetaCalibrator":
        return cls(tuple(BetaMap() for _ in range(n_classes)))


def fit_beta_calibrator(proba: np.ndarray, labels: np.ndarray, ridge: float = 1e-2
                        ) -> BetaCalibrator:
    """Fit one-vs-rest beta maps on validation-split predictions.

    Raises:
        CalibrationError: the validation labels contain a single class.
    """
    proba = np.atleast_2d(np.asarray(proba, dtype=float))
    labels = np.asarray(labels, dtype=np.int64)
    if len(proba) != len(labels) or len(labels) == 0:
        raise CalibrationError("need one label per probability row")
    if len(np.unique(labels)) < 2:
        raise CalibrationError("validation labels contain a single class")
    maps = []
    for k in range(proba.shape[1]):
        y = (labels == k).astype(float)
        if y.min() == y.max():
            logger.warning("class %d has no positives or no negatives; identity map", k)
            maps.append(BetaMap())
            continue
        maps.append(fit_beta_map(proba[:, k], y, ridge))
    return BetaCalibrator(tuple(maps))
