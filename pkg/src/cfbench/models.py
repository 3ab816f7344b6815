"""Decision tree, random forest and one-hidden-layer network classifiers.

All three expose the same probability interface (:class:`Predictor`). Trees
are grown CART-style with Gini impurity; the split sweep and the routing
loops live in :mod:`cfbench.kernels`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from . import kernels
from .data import EncodedDataset

SNAPSHOT_FORMAT = "cfbench.predictor"
SNAPSHOT_VERSION = 1
FD_STEP = 1e-4


class TrainingError(RuntimeError):
    pass


class Predictor:
    """Binary classifier over encoded, scaled rows."""

    kind: str = ""
    n_features: int = 0

    def positive_proba(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check(self, X) -> tuple[np.ndarray, bool]:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = X[None, :] if single else X
        if X2.ndim != 2 or X2.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return np.ascontiguousarray(X2), single

    def predict_proba(self, X) -> np.ndarray:
        """``(n, 2)`` class probabilities, or a length-2 array for a single row."""
        X2, single = self._check(X)
        p1 = self.positive_proba(X2)
        out = np.column_stack([1.0 - p1, p1])
        return out[0] if single else out

    def predict_class(self, X) -> np.ndarray | int:
        """Argmax of :meth:`predict_proba`; an exact 0.5 tie goes to class 0."""
        X2, single = self._check(X)
        labels = (self.positive_proba(X2) > 0.5).astype(np.int64)
        return int(labels[0]) if single else labels

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


# -- decision tree ---------------------------------------------------------------

@dataclass(frozen=True)
class TreeNode:
    node_id: int
    feature: int
    threshold: float
    left: int
    right: int
    depth: int
    class_counts: tuple[int, int]

    @property
    def is_leaf(self) -> bool:
        return self.feature == kernels.LEAF


class DecisionTree(Predictor):
    """Array-backed binary tree. Routing: left iff ``x[feature] <= threshold``."""

    kind = "tree"

    def __init__(self, feature, threshold, left, right, counts, depth, n_features: int):
        self.feature = np.ascontiguousarray(feature, dtype=np.int64)
        self.threshold = np.ascontiguousarray(threshold, dtype=np.float64)
        self.left = np.ascontiguousarray(left, dtype=np.int64)
        self.right = np.ascontiguousarray(right, dtype=np.int64)
        self.counts = np.ascontiguousarray(counts, dtype=np.int64).reshape(-1, 2)
        self.depth = np.ascontiguousarray(depth, dtype=np.int64)
        self.n_features = int(n_features)
        totals = self.counts.sum(axis=1)
        self.value = self.counts[:, 1] / np.where(totals > 0, totals, 1)
        for a in (self.feature, self.threshold, self.left, self.right, self.counts, self.depth, self.value):
            a.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def max_depth(self) -> int:
        return int(self.depth.max())

    def node(self, i: int) -> TreeNode:
        return TreeNode(i, int(self.feature[i]), float(self.threshold[i]), int(self.left[i]),
                        int(self.right[i]), int(self.depth[i]),
                        (int(self.counts[i, 0]), int(self.counts[i, 1])))

    @property
    def nodes(self) -> list[TreeNode]:
        return [self.node(i) for i in range(self.n_nodes)]

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature == kernels.LEAF)

    def leaf_class(self, leaf: int) -> int:
        return int(self.counts[leaf, 1] > self.counts[leaf, 0])

    def apply(self, X) -> np.ndarray:
        X2, _ = self._check(X)
        return kernels.tree_apply(X2, self.feature, self.threshold, self.left, self.right)

    def positive_proba(self, X: np.ndarray) -> np.ndarray:
        return self.value[kernels.tree_apply(X, self.feature, self.threshold, self.left, self.right)]

    def leaf_boxes(self) -> dict[int, tuple[np.ndarray, np.ndarray]]:
        """Per leaf, ``(lower, upper)`` bounds: lower exclusive, upper inclusive."""
        boxes: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        stack = [(0, np.full(self.n_features, -np.inf), np.full(self.n_features, np.inf))]
        while stack:
            i, lo, hi = stack.pop()
            f = self.feature[i]
            if f == kernels.LEAF:
                boxes[i] = (lo, hi)
                continue
            t = self.threshold[i]
            hi_left = hi.copy()
            hi_left[f] = min(hi[f], t)
            lo_right = lo.copy()
            lo_right[f] = max(lo[f], t)
            stack.append((int(self.right[i]), lo_right, hi))
            stack.append((int(self.left[i]), lo, hi_left))
        return boxes

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
            "depth": self.depth.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DecisionTree":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["counts"], d["depth"],
                   d["n_features"])


def grow_tree(X: np.ndarray, y: np.ndarray, max_depth: int | None = None, min_leaf: int = 1,
              max_features: int | None = None, rng: np.random.Generator | None = None) -> DecisionTree:
    """Grow a Gini tree on ``(X, y)``.

    With ``max_features`` set, each split considers a fresh random subset of
    that many columns drawn from ``rng`` (random-forest style).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    n, p = X.shape
    if n == 0:
        raise ValueError("cannot grow a tree on zero rows")
    depth_cap = math.inf if max_depth is None else max_depth
    all_features = np.arange(p, dtype=np.int64)
    if max_features is not None and rng is None:
        raise ValueError("max_features requires an rng")

    feature, threshold, left, right, counts, depth = [], [], [], [], [], []

    def new_node(rows: np.ndarray, d: int) -> int:
        n1 = int(y[rows].sum())
        feature.append(kernels.LEAF)
        threshold.append(0.0)
        left.append(kernels.LEAF)
        right.append(kernels.LEAF)
        counts.append((rows.size - n1, n1))
        depth.append(d)
        return len(feature) - 1

    root_rows = np.arange(n)
    stack = [(new_node(root_rows, 0), root_rows)]
    while stack:
        node, rows = stack.pop()
        c0, c1 = counts[node]
        d = depth[node]
        if c0 == 0 or c1 == 0 or d >= depth_cap or rows.size < 2 * min_leaf:
            continue
        if max_features is None or max_features >= p:
            cand = all_features
        else:
            cand = np.sort(rng.choice(p, size=max_features, replace=False)).astype(np.int64)
        f, t, score = kernels.best_split(X[rows], y[rows], cand, min_leaf)
        parent = (c0 * c0 + c1 * c1) / rows.size
        if f < 0 or score - parent <= 1e-12 * parent:
            continue
        go_left = X[rows, f] <= t
        lrows, rrows = rows[go_left], rows[~go_left]
        feature[node] = int(f)
        threshold[node] = float(t)
        left[node] = new_node(lrows, d + 1)
        right[node] = new_node(rrows, d + 1)
        # right pushed first so the left subtree is expanded (and numbered) first
        stack.append((right[node], rrows))
        stack.append((left[node], lrows))
    return DecisionTree(feature, threshold, left, right, counts, depth, p)


def train_tree(ds: EncodedDataset, max_depth: int = 8, min_leaf: int = 20, seed: int = 0) -> DecisionTree:
    """CART tree on the training partition; ``seed`` is accepted for API symmetry."""
    if ds.train_idx.size == 0:
        raise ValueError("training partition is empty")
    return grow_tree(ds.X_train, ds.y_train, max_depth=max_depth, min_leaf=min_leaf)


# -- random forest -------------------------------------------------------------

class RandomForest(Predictor):
    kind = "forest"

    def __init__(self, trees: list[DecisionTree]):
        if not trees:
            raise ValueError("forest needs at least one tree")
        self.trees = list(trees)
        self.n_features = trees[0].n_features
        offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])
        self._roots = np.asarray(offsets, dtype=np.int64)
        self._feature = np.concatenate([t.feature for t in trees])
        self._threshold = np.concatenate([t.threshold for t in trees])
        self._value = np.concatenate([t.value for t in trees])
        self._left = np.concatenate([np.where(t.left >= 0, t.left + o, t.left) for t, o in zip(trees, offsets)])
        self._right = np.concatenate([np.where(t.right >= 0, t.right + o, t.right) for t, o in zip(trees, offsets)])

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def positive_proba(self, X: np.ndarray) -> np.ndarray:
        return kernels.forest_proba(X, self._feature, self._threshold, self._left, self._right,
                                    self._value, self._roots)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RandomForest":
        return cls([DecisionTree.from_dict(t) for t in d["trees"]])


def train_forest(ds: EncodedDataset, n_trees: int = 100, max_depth: int | None = 12,
                 min_leaf: int = 10, seed: int = 0, max_features: int | str | None = "sqrt",
                 bootstrap: bool = True) -> RandomForest:
    """Bagged Gini trees with per-split feature subsampling (default ``ceil(sqrt(p))``)."""
    if n_trees < 1:
        raise ValueError("n_trees must be >= 1")
    X, y = ds.X_train, ds.y_train
    n, p = X.shape
    if n == 0:
        raise ValueError("training partition is empty")
    if max_features == "sqrt":
        max_features = int(math.ceil(math.sqrt(p)))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(grow_tree(X[rows], y[rows], max_depth=max_depth, min_leaf=min_leaf,
                               max_features=max_features, rng=rng))
    return RandomForest(trees)


# -- neural network ------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class MLPParams:
    W1: np.ndarray  # (p, h)
    b1: np.ndarray  # (h,)
    w2: np.ndarray  # (h,)
    b2: float

    def copy(self) -> "MLPParams":
        return MLPParams(self.W1.copy(), self.b1.copy(), self.w2.copy(), float(self.b2))

    def flat(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.w2, [self.b2]])

    @classmethod
    def unflat(cls, v: np.ndarray, p: int, h: int) -> "MLPParams":
        i = p * h
        return cls(v[:i].reshape(p, h).copy(), v[i:i + h].copy(), v[i + h:i + 2 * h].copy(),
                   float(v[i + 2 * h]))


def init_params(p: int, hidden: int, rng: np.random.Generator) -> MLPParams:
    return MLPParams(
        W1=rng.normal(0.0, math.sqrt(2.0 / p), size=(p, hidden)),
        b1=np.zeros(hidden),
        w2=rng.normal(0.0, math.sqrt(1.0 / hidden), size=hidden),
        b2=0.0,
    )


def loss_and_grads(params: MLPParams, X: np.ndarray, y: np.ndarray) -> tuple[float, MLPParams]:
    """Mean binary cross-entropy and its gradient with respect to every weight."""
    a = X @ params.W1 + params.b1
    hdn = np.maximum(a, 0.0)
    z = hdn @ params.w2 + params.b2
    # log(1 + e^z) - y z, written to stay finite for large |z|
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    dz = (_sigmoid(z) - y) / X.shape[0]
    dw2 = hdn.T @ dz
    db2 = float(dz.sum())
    da = np.outer(dz, params.w2) * (a > 0)
    dW1 = X.T @ da
    db1 = da.sum(axis=0)
    return loss, MLPParams(dW1, db1, dw2, db2)


class NeuralNet(Predictor):
    kind = "neural"

    def __init__(self, params: MLPParams):
        self.params = params
        self.n_features = params.W1.shape[0]

    @property
    def hidden(self) -> int:
        return self.params.W1.shape[1]

    def logit(self, X: np.ndarray) -> np.ndarray:
        P = self.params
        return np.maximum(X @ P.W1 + P.b1, 0.0) @ P.w2 + P.b2

    def positive_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.logit(X))

    def logit_gradient(self, x: np.ndarray) -> np.ndarray:
        """d logit(p(class 1)) / dx at a single row."""
        P = self.params
        active = (x @ P.W1 + P.b1) > 0
        return P.W1 @ (P.w2 * active)

    def to_dict(self) -> dict[str, Any]:
        P = self.params
        return {"kind": self.kind, "n_features": self.n_features, "W1": P.W1.tolist(),
                "b1": P.b1.tolist(), "w2": P.w2.tolist(), "b2": P.b2}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NeuralNet":
        W1 = np.asarray(d["W1"], dtype=np.float64).reshape(d["n_features"], -1)
        return cls(MLPParams(W1, np.asarray(d["b1"], dtype=np.float64),
                             np.asarray(d["w2"], dtype=np.float64), float(d["b2"])))


def train_neural(ds: EncodedDataset, hidden: int = 32, epochs: int = 200, lr: float = 0.01,
                 seed: int = 0, batch_size: int = 32, momentum: float = 0.0) -> NeuralNet:
    """ReLU hidden layer + sigmoid output, mini-batch SGD on log-loss (optional heavy-ball momentum)."""
    if hidden < 1:
        raise ValueError("hidden must be >= 1")
    X, y = ds.X_train, ds.y_train.astype(np.float64)
    n, p = X.shape
    rng = np.random.default_rng(seed)
    params = init_params(p, hidden, rng)
    velocity = MLPParams(np.zeros_like(params.W1), np.zeros(hidden), np.zeros(hidden), 0.0)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            rows = order[start:start + batch_size]
            loss, g = loss_and_grads(params, X[rows], y[rows])
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: loss={loss}, "
                    f"|W1|max={np.abs(params.W1).max():.3g}, lr={lr}")
            velocity.W1 = momentum * velocity.W1 - lr * g.W1
            velocity.b1 = momentum * velocity.b1 - lr * g.b1
            velocity.w2 = momentum * velocity.w2 - lr * g.w2
            velocity.b2 = momentum * velocity.b2 - lr * g.b2
            params.W1 += velocity.W1
            params.b1 += velocity.b1
            params.w2 += velocity.w2
            params.b2 += velocity.b2
    return NeuralNet(params)


# -- shared helpers ------------------------------------------------------------

def accuracy(model: Predictor, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict_class(X) == y)) if len(y) else float("nan")


def soft_gradient(model: Predictor, x: np.ndarray, target_class: int) -> np.ndarray:
    """Gradient of ``p(target_class | x)``.

    Analytic for the network; central differences with step 1e-4 for trees and
    forests, which are piecewise constant and so mostly return zeros.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features,):
        raise ValueError(f"expected {model.n_features} features, got shape {x.shape}")
    sign = 1.0 if target_class == 1 else -1.0
    if isinstance(model, NeuralNet):
        p1 = float(model.positive_proba(x[None, :])[0])
        return sign * p1 * (1.0 - p1) * model.logit_gradient(x)
    p = x.size
    probe = np.repeat(x[None, :], 2 * p, axis=0)
    idx = np.arange(p)
    probe[idx, idx] += FD_STEP
    probe[p + idx, idx] -= FD_STEP
    p1 = model.positive_proba(probe)
    return sign * (p1[:p] - p1[p:]) / (2 * FD_STEP)


_KINDS = {"tree": DecisionTree, "forest": RandomForest, "neural": NeuralNet}


def train_model(kind: str, ds: EncodedDataset, seed: int = 0, **params) -> Predictor:
    if kind == "tree":
        return train_tree(ds, seed=seed, **params)
    if kind == "forest":
        return train_forest(ds, seed=seed, **params)
    if kind == "neural":
        return train_neural(ds, seed=seed, **params)
    raise ValueError(f"unknown model kind {kind!r}")


def snapshot(model: Predictor) -> dict[str, Any]:
    return {"format": SNAPSHOT_FORMAT, "version": SNAPSHOT_VERSION, "model": model.to_dict()}


def restore(doc: dict[str, Any]) -> Predictor:
    if doc.get("format") != SNAPSHOT_FORMAT:
        raise ValueError("not a cfbench predictor snapshot")
    if doc.get("version") != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {doc.get('version')}")
    body = doc["model"]
    return _KINDS[body["kind"]].from_dict(body)


def save_model(model: Predictor, path: str | Path) -> None:
    Path(path).write_text(json.dumps(snapshot(model)), encoding="utf-8")


def load_model(path: str | Path) -> Predictor:
    return restore(json.loads(Path(path).read_text(encoding="utf-8")))
