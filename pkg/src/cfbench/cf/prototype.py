"""Prototype-guided counterfactuals optimised with FISTA on an elastic-net loss."""
from __future__ import annotations

import numpy as np

from ..models import Predictor
from .base import (BudgetExhausted, CfRequest, CounterfactualOutcome, CountingModel,
                   PerturbationSearch, Projector, Timer, soft_threshold)

N_NEIGHBOURS = 5
MAX_ITER = 500
PATIENCE = 12
STEP = 0.05
C_STEPS = 4


def class_prototype(x: np.ndarray, train_matrix: np.ndarray, train_labels: np.ndarray,
                    target: int, k: int = N_NEIGHBOURS) -> np.ndarray:
    """Mean of the ``k`` training rows of class ``target`` closest to ``x`` in L2."""
    pool = np.asarray(train_matrix, dtype=np.float64)[np.asarray(train_labels) == target]
    if pool.shape[0] == 0:
        raise ValueError(f"no training instances of class {target}")
    d = np.sum((pool - x) ** 2, axis=1)
    k = min(k, pool.shape[0])
    nearest = np.argsort(d, kind="stable")[:k]
    return pool[nearest].mean(axis=0)


def elastic_distance(delta, beta: float) -> np.ndarray:
    """``beta * ||delta||_1 + ||delta||_2`` (batched over leading axes)."""
    delta = np.asarray(delta, dtype=np.float64)
    return beta * np.sum(np.abs(delta), axis=-1) + np.sqrt(np.sum(delta ** 2, axis=-1))


class _Objective:
    def __init__(self, x, proto, c, beta, theta, counter, target):
        self.x, self.proto = x, proto
        self.c, self.beta, self.theta = c, beta, theta
        self.counter, self.target = counter, target

    def pred_loss(self, p_target):
        # binary case: p(original) - p(target), hinged at zero
        return np.maximum(0.0, 1.0 - 2.0 * np.asarray(p_target))

    def batch(self, Z):
        Z = np.atleast_2d(Z)
        p = self.counter.proba(Z, self.target)
        return (self.c * self.pred_loss(p) + elastic_distance(Z - self.x, self.beta)
                + self.theta * np.sum((Z - self.proto) ** 2, axis=1))

    def __call__(self, z):
        return float(self.batch(z)[0])

    def smooth_grad(self, z, g_p, p):
        """Gradient of everything except the L1 term at ``z``."""
        delta = z - self.x
        norm = np.sqrt(np.sum(delta ** 2))
        g = 2.0 * self.theta * (z - self.proto)
        if norm > 0:
            g = g + delta / norm
        if 1.0 - 2.0 * p > 0:
            g = g - 2.0 * self.c * g_p
        return g


def prototype_cf(request: CfRequest, model: Predictor, beta: float = 0.1, c: float = 1.0,
                 theta: float = 0.1, train_matrix=None, *, train_labels=None,
                 n_neighbours: int = N_NEIGHBOURS, max_iter: int = MAX_ITER,
                 step: float = STEP, c_steps: int = C_STEPS) -> CounterfactualOutcome:
    """Minimise ``c L_pred + beta |d|_1 + |d|_2 + theta |x' - proto|^2`` with FISTA.

    ``proto`` is the mean of the nearest target-class training rows; by
    default class membership is the model's own prediction on
    ``train_matrix``. Smooth terms take gradient steps (analytic or finite
    difference), the L1 term is handled by soft-thresholding, and a
    perturbation step replaces the gradient step wherever the model gradient
    vanishes. The lowest-loss valid iterate is returned. When a pass ends
    without a valid iterate, ``c`` is multiplied by 10 and the search restarts
    from ``x``, at most ``c_steps`` passes in total.
    """
    if train_matrix is None:
        raise ValueError("prototype_cf needs the training matrix")
    x, target = request.x, request.y_target
    train_matrix = np.asarray(train_matrix, dtype=np.float64)
    labels = model.predict_class(train_matrix) if train_labels is None else train_labels
    proto = class_prototype(x, train_matrix, labels, target, n_neighbours)
    counter = CountingModel(model, request.budget)
    project = Projector(request)
    search = PerturbationSearch(request.rng(), np.ones(request.p, dtype=bool))

    best, chosen_c = None, None
    with Timer() as timer:
        try:
            for attempt in range(c_steps):
                obj = _Objective(x, proto, c * 10.0 ** attempt, beta, theta, counter, target)
                best = _fista(obj, model, project, search, max_iter, step)
                if best is not None:
                    chosen_c = obj.c
                    break
        except BudgetExhausted:
            pass

    found = best is not None
    return CounterfactualOutcome(found=found, candidates=[best] if found else [],
                                 evaluations=counter.evaluations, seconds=timer.seconds,
                                 algorithm="prototype",
                                 info={"prototype": proto.tolist(), "c": chosen_c})


def _fista(obj: _Objective, model: Predictor, project: Projector, search: PerturbationSearch,
           max_iter: int, step: float) -> np.ndarray | None:
    """One optimisation pass from ``x``; returns the lowest-loss valid iterate or None."""
    x, target, counter = obj.x, obj.target, obj.counter
    best, best_loss = None, np.inf
    z = x.copy()
    loss = obj(z)
    y, t = z.copy(), 1.0
    stall = 0
    search.sigma = search.sigma0
    try:
        for _ in range(max_iter):
            if stall >= PATIENCE:
                break
            g_p = counter.gradient(y, target)
            if g_p.any():
                p = counter.proba(y[None, :], target)[0]
                v = y - step * obj.smooth_grad(y, g_p, p)
                cand = project(x + soft_threshold(v - x, step * obj.beta))
                cand_loss = obj(cand)
                if cand_loss < loss:
                    t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
                    y = cand + ((t - 1.0) / t_next) * (cand - z)
                    z, loss, t = cand, cand_loss, t_next
                    stall = 0 if loss_improved(best_loss, loss) else stall + 1
                else:
                    # momentum restart, then a random kick
                    z, loss, moved = search.step(z, loss, obj.batch, project)
                    y, t = z.copy(), 1.0
                    stall = 0 if moved else stall + 1
            else:
                z, loss, moved = search.step(z, loss, obj.batch, project)
                y, t = z.copy(), 1.0
                stall = 0 if moved else stall + 1
            if loss < best_loss and int(model.predict_class(z)) == target:
                best, best_loss = z.copy(), loss
    except BudgetExhausted:
        if best is None:
            raise
    return best


def loss_improved(best_loss: float, loss: float, tol: float = 1e-9) -> bool:
    return loss < best_loss - tol
