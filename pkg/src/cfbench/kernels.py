"""Hot inner loops: tree routing, forest averaging and the CART split sweep.

Every kernel has a numba body (``*_nb``) and a numpy twin (``*_np``); the
public name is bound to one of them at import time (see :mod:`cfbench._accel`).
The split score is computed from integer class counts with the same operation
order in both versions, so the chosen split is bit-identical across backends.
"""
from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

LEAF = -1


# -- routing -----------------------------------------------------------------

def _tree_apply_py(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] != LEAF:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def tree_apply_np(X, feature, threshold, left, right):
    """Leaf index reached by every row of ``X`` (go left iff x <= threshold)."""
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = feature[node] != LEAF
    while active.any():
        rows = np.flatnonzero(active)
        cur = node[rows]
        go_left = X[rows, feature[cur]] <= threshold[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
        active[rows] = feature[node[rows]] != LEAF
    return node


def _forest_proba_py(X, feature, threshold, left, right, value, roots):
    n = X.shape[0]
    n_trees = roots.shape[0]
    out = np.zeros(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for t in range(n_trees):
            node = roots[t]
            while feature[node] != LEAF:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            acc += value[node]
        out[i] = acc / n_trees
    return out


def forest_proba_np(X, feature, threshold, left, right, value, roots):
    """Mean positive-class leaf probability over the stacked trees.

    ``left``/``right`` index into the concatenated node arrays and ``roots``
    holds the root node of each tree.
    """
    acc = np.zeros(X.shape[0], dtype=np.float64)
    for root in roots:
        node = np.full(X.shape[0], root, dtype=np.int64)
        active = feature[node] != LEAF
        while active.any():
            rows = np.flatnonzero(active)
            cur = node[rows]
            go_left = X[rows, feature[cur]] <= threshold[cur]
            node[rows] = np.where(go_left, left[cur], right[cur])
            active[rows] = feature[node[rows]] != LEAF
        acc += value[node]
    return acc / roots.shape[0]


# -- split search --------------------------------------------------------------

def _best_split_py(X, y, features, min_leaf):
    # Maximises (nl0^2 + nl1^2)/nl + (nr0^2 + nr1^2)/nr, i.e. minimises the
    # weighted Gini impurity of the children. Strict '>' keeps the lowest
    # feature index, then the lowest threshold, on ties.
    n = X.shape[0]
    n1 = 0.0
    for i in range(n):
        n1 += y[i]
    n0 = n - n1
    best_score = -1.0
    best_feature = -1
    best_threshold = 0.0
    for k in range(features.shape[0]):
        j = features[k]
        col = X[:, j].copy()
        order = np.argsort(col)
        l0 = 0.0
        l1 = 0.0
        for pos in range(n - 1):
            idx = order[pos]
            if y[idx] == 1:
                l1 += 1.0
            else:
                l0 += 1.0
            nl = pos + 1
            nr = n - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            lo = col[idx]
            hi = col[order[pos + 1]]
            if not lo < hi:
                continue
            r0 = n0 - l0
            r1 = n1 - l1
            score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr
            if score > best_score:
                best_score = score
                best_feature = j
                best_threshold = (lo + hi) / 2.0
    return best_feature, best_threshold, best_score


def best_split_np(X, y, features, min_leaf):
    """Best Gini split over ``features``; returns ``(feature, threshold, score)``.

    ``feature == -1`` when no admissible split exists.
    """
    n = X.shape[0]
    yf = y.astype(np.float64)
    n1 = float(yf.sum())
    n0 = n - n1
    best_score = -1.0
    best_feature = -1
    best_threshold = 0.0
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    size_ok = (nl >= min_leaf) & (nr >= min_leaf)
    for j in features:
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        sv = col[order]
        l1 = np.cumsum(yf[order])[:-1]
        l0 = nl - l1
        r0 = n0 - l0
        r1 = n1 - l1
        valid = size_ok & (sv[:-1] < sv[1:])
        if not valid.any():
            continue
        score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr
        score = np.where(valid, score, -1.0)
        pos = int(np.argmax(score))
        if score[pos] > best_score:
            best_score = float(score[pos])
            best_feature = int(j)
            best_threshold = float((sv[pos] + sv[pos + 1]) / 2.0)
    return best_feature, best_threshold, best_score


tree_apply_nb = njit(_tree_apply_py)
forest_proba_nb = njit(_forest_proba_py)
best_split_nb = njit(_best_split_py)

if HAVE_NUMBA:
    tree_apply = tree_apply_nb
    forest_proba = forest_proba_nb
    best_split = best_split_nb
else:
    tree_apply = tree_apply_np
    forest_proba = forest_proba_np
    best_split = best_split_np
