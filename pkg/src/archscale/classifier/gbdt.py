"""Histogram-based gradient-boosted trees with a multiclass softmax objective."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class BoostingParams:
    n_rounds: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    n_bins: int = 32
    l2: float = 1.0
    min_child_samples: int = 5
    min_gain: float = 1e-9
    subsample: float = 1.0

    def __post_init__(self):
        if self.n_rounds < 1 or self.max_depth < 1:
            raise ValueError("n_rounds and max_depth must be >= 1")
        if not 2 <= self.n_bins <= 256:
            raise ValueError("n_bins must be in [2, 256]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must be in (0, 1]")


@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf holding ``value``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __len__(self) -> int:
        return len(self.feature)


def _bin_edges(col: np.ndarray, n_bins: int) -> np.ndarray:
    qs = np.quantile(col, np.linspace(0, 1, n_bins + 1)[1:-1])
    return np.unique(qs)


class _TreeBuilder:
    def __init__(self, codes, edges, params: BoostingParams):
        self.codes = codes
        self.edges = edges
        self.p = params
        self.n_feat = codes.shape[1]
        self.n_bins = params.n_bins
        self.offsets = (np.arange(self.n_feat) * self.n_bins)[None, :]

    def build(self, g: np.ndarray, h: np.ndarray) -> Tree:
        self.nodes: list[list] = []
        self._grow(np.arange(len(g)), g, h, 0)
        arr = np.array(self.nodes, dtype=float).reshape(-1, 5)
        return Tree(arr[:, 0].astype(np.int64), arr[:, 1], arr[:, 2].astype(np.int64),
                    arr[:, 3].astype(np.int64), arr[:, 4])

    def _leaf(self, G: float, H: float) -> int:
        self.nodes.append([-1, 0.0, -1, -1, -self.p.learning_rate * G / (H + self.p.l2)])
        return len(self.nodes) - 1

    def _grow(self, idx, g, h, depth) -> int:
        gi, hi = g[idx], h[idx]
        G, H = float(gi.sum()), float(hi.sum())
        if depth >= self.p.max_depth or len(idx) < 2 * self.p.min_child_samples:
            return self._leaf(G, H)
        split = self._best_split(idx, gi, hi, G, H)
        if split is None:
            return self._leaf(G, H)
        feat, b = split
        go_left = self.codes[idx, feat] <= b
        me = len(self.nodes)
        self.nodes.append([feat, float(self.edges[feat][b]), -1, -1, 0.0])
        self.nodes[me][2] = self._grow(idx[go_left], g, h, depth + 1)
        self.nodes[me][3] = self._grow(idx[~go_left], g, h, depth + 1)
        return me

    def _best_split(self, idx, gi, hi, G, H):
        m = len(idx)
        flat = (self.codes[idx] + self.offsets).ravel()
        size = self.n_feat * self.n_bins
        hist_g = np.bincount(flat, np.repeat(gi, self.n_feat), size).reshape(self.n_feat, -1)
        hist_h = np.bincount(flat, np.repeat(hi, self.n_feat), size).reshape(self.n_feat, -1)
        hist_n = np.bincount(flat, minlength=size).reshape(self.n_feat, -1)
        GL = np.cumsum(hist_g, axis=1)[:, :-1]
        HL = np.cumsum(hist_h, axis=1)[:, :-1]
        NL = np.cumsum(hist_n, axis=1)[:, :-1]
        GR, HR, NR = G - GL, H - HL, m - NL
        lam = self.p.l2
        gain = GL ** 2 / (HL + lam) + GR ** 2 / (HR + lam) - G ** 2 / (H + lam)
        valid = (NL >= self.p.min_child_samples) & (NR >= self.p.min_child_samples)
        # a bin index is only a real split point if that feature has an edge there
        n_edges = np.array([len(e) for e in self.edges])
        valid &= np.arange(self.n_bins - 1)[None, :] < n_edges[:, None]
        gain = np.where(valid, gain, -np.inf)
        best = int(np.argmax(gain))
        if not np.isfinite(gain.flat[best]) or gain.flat[best] <= self.p.min_gain:
            return None
        return divmod(best, self.n_bins - 1)


def _softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class TreeEnsemble:
    """Per-class additive ensembles of depth-limited regression trees."""

    feature_names: tuple[str, ...]
    n_classes: int
    params: BoostingParams
    base_score: np.ndarray
    trees: list[Tree] = field(default_factory=list)
    tree_class: list[int] = field(default_factory=list)

    def __post_init__(self):
        self._pack()

    def _pack(self):
        """Concatenate all trees into one node table for simultaneous traversal."""
        if not self.trees:
            self._feat = np.empty(0, dtype=np.int64)
            self._roots = np.empty(0, dtype=np.int64)
            return
        offs = np.cumsum([0] + [len(t) for t in self.trees[:-1]])
        self._roots = offs.astype(np.int64)
        self._feat = np.concatenate([t.feature for t in self.trees])
        self._thr = np.concatenate([t.threshold for t in self.trees])
        self._left = np.concatenate([t.left + o for t, o in zip(self.trees, offs)])
        self._right = np.concatenate([t.right + o for t, o in zip(self.trees, offs)])
        self._val = np.concatenate([t.value for t in self.trees])
        self._cls = np.asarray(self.tree_class, dtype=np.int64)
        self._depth = self.params.max_depth

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        scores = np.tile(self.base_score, (len(X), 1))
        if not self.trees:
            return scores
        rows = np.arange(len(X))[:, None]
        node = np.tile(self._roots, (len(X), 1))
        for _ in range(self._depth):
            feat = self._feat[node]
            inner = feat >= 0
            if not inner.any():
                break
            x = X[rows, np.where(inner, feat, 0)]
            nxt = np.where(x <= self._thr[node], self._left[node], self._right[node])
            node = np.where(inner, nxt, node)
        leaf_vals = self._val[node]
        for k in range(self.n_classes):
            scores[:, k] += leaf_vals[:, self._cls == k].sum(axis=1)
        return scores

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.decision_function(X))


def fit_boosting(X: np.ndarray, y: np.ndarray, n_classes: int, feature_names,
                 params: BoostingParams = BoostingParams(), seed: int = 0) -> TreeEnsemble:
    """Fit a multiclass softmax booster.

    Each round fits one regression tree per class to the softmax gradient
    (p - y) with hessian p(1 - p), using quantile histogram splits. The only
    randomness is row subsampling (off by default), drawn from ``seed``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) != len(y):
        raise TrainingError("X must be 2-D with one row per label")
    present = np.unique(y)
    if len(present) != n_classes or present.min() < 0 or present.max() >= n_classes:
        raise TrainingError(
            f"training data must contain all {n_classes} classes, found {present.tolist()}")
    rng = np.random.default_rng(seed)

    edges = [_bin_edges(X[:, j], params.n_bins) for j in range(X.shape[1])]
    codes = np.empty(X.shape, dtype=np.int64)
    for j, e in enumerate(edges):
        codes[:, j] = np.searchsorted(e, X[:, j], side="left")

    prior = np.bincount(y, minlength=n_classes) / len(y)
    base = np.log(prior)
    base -= base.mean()
    onehot = np.eye(n_classes)[y]
    scores = np.tile(base, (len(y), 1))
    builder = _TreeBuilder(codes, edges, params)
    trees, owners = [], []
    for _ in range(params.n_rounds):
        p = _softmax(scores)
        if params.subsample < 1.0:
            keep = np.zeros(len(y), dtype=bool)
            keep[rng.choice(len(y), max(1, int(params.subsample * len(y))), replace=False)] = True
        else:
            keep = None
        for k in range(n_classes):
            g = p[:, k] - onehot[:, k]
            h = np.maximum(p[:, k] * (1 - p[:, k]), 1e-12)
            if keep is not None:
                g, h = np.where(keep, g, 0.0), np.where(keep, h, 0.0)
            tree = builder.build(g, h)
            trees.append(tree)
            owners.append(k)
            scores[:, k] += _apply_tree(tree, X)
    return TreeEnsemble(tuple(feature_names), n_classes, params, base, trees, owners)


def _apply_tree(tree: Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    while True:
        feat = tree.feature[node]
        inner = feat >= 0
        if not inner.any():
            return tree.value[node]
        x = X[np.arange(len(X)), np.where(inner, feat, 0)]
        nxt = np.where(x <= tree.threshold[node], tree.left[node], tree.right[node])
        node = np.where(inner, nxt, node)
