"""Counterfactual search with a lambda-weighted prediction loss and a MAD-scaled L1 distance."""
from __future__ import annotations

import numpy as np

from ..data import safe_mad
from ..models import Predictor
from .base import (BudgetExhausted, CfRequest, CounterfactualOutcome, CountingModel,
                   PerturbationSearch, Projector, Timer, soft_threshold)
from .growing_spheres import require_numerical

LAMBDAS = (0.1, 1.0, 10.0, 100.0, 1000.0)
EPSILON = 0.05
PATIENCE = 12
MIN_STEP = 1e-6


def watcher_loss(p_target, distance, lam: float):
    """``lam * (f(x') - 1)^2 + distance`` with ``f`` the target-class probability."""
    return lam * (1.0 - np.asarray(p_target)) ** 2 + distance


class _Objective:
    def __init__(self, x, mad, lam, counter, target):
        self.x, self.inv_mad, self.lam = x, 1.0 / mad, lam
        self.counter, self.target = counter, target

    def distance(self, Z):
        return np.sum(np.abs(np.atleast_2d(Z) - self.x) * self.inv_mad, axis=1)

    def batch(self, Z):
        Z = np.atleast_2d(Z)
        return watcher_loss(self.counter.proba(Z, self.target), self.distance(Z), self.lam)

    def __call__(self, z):
        return float(self.batch(z)[0])


def _minimise(obj: _Objective, project: Projector, search: PerturbationSearch, stop_at: int,
              step0: float = 0.05):
    """Proximal gradient on one lambda; perturbation steps where the gradient vanishes.

    Stops when no progress is made for ``PATIENCE`` consecutive steps or the
    evaluation slice ``stop_at`` is hit, then pulls the point back toward
    ``x`` along the segment as far as the loss allows.
    """
    x, counter = obj.x, obj.counter
    z = x.copy()
    loss = obj(z)
    step = step0
    stall = 0
    try:
        while stall < PATIENCE and counter.evaluations < stop_at:
            g_p = counter.gradient(z, obj.target)
            if not g_p.any():
                z, loss, moved = search.step(z, loss, obj.batch, project)
                stall = 0 if moved else stall + 1
                continue
            p = counter.proba(z[None, :], obj.target)[0]
            grad = -2.0 * obj.lam * (1.0 - p) * g_p
            # backtracking on the proximal step: smooth part by gradient, L1 part by soft-threshold
            step = min(2.0 * step, 1.0)
            while step >= MIN_STEP:
                delta = soft_threshold(z - step * grad - x, step * obj.inv_mad)
                cand = project(x + delta)
                cand_loss = obj(cand)
                if cand_loss < loss:
                    break
                step /= 2.0
            if step < MIN_STEP:
                # converged for the smooth model; try a random kick before giving up
                z, loss, moved = search.step(z, loss, obj.batch, project)
                stall = 0 if moved else stall + 1
                continue
            stall = stall + 1 if loss - cand_loss < 1e-9 else 0
            z, loss = cand, cand_loss
        z = _pull_back(obj, z, loss)
    except BudgetExhausted:
        pass
    return z


def _pull_back(obj: _Objective, z: np.ndarray, loss: float, steps: int = 20) -> np.ndarray:
    """Line search on ``x + t (z - x)``, keeping the smallest ``t`` seen that does not raise the loss."""
    x = obj.x
    lo, hi = 0.0, 1.0
    best = z
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        cand = x + mid * (z - x)
        cand_loss = obj(cand)
        if cand_loss <= loss:
            hi, best, loss = mid, cand, cand_loss
        else:
            lo = mid
    return best


def watcher_cf(request: CfRequest, model: Predictor, mad, *, lambdas=LAMBDAS,
               epsilon: float = EPSILON, bounded: bool = False) -> CounterfactualOutcome:
    """Minimise ``lam (f(x') - y')^2 + sum_j |x_j - x'_j| / MAD_j`` over an ascending lambda sweep.

    Each lambda starts from ``x`` and gets an equal share of the budget. The
    answer is the optimum of the largest lambda reaching ``|f(x') - 1| <= epsilon``
    for the target probability. If none gets that close, the largest lambda
    whose optimum still flips the class is used; otherwise nothing is found.
    Immutable features are not protected, and like the original
    formulation the search is unconstrained unless ``bounded`` is set.
    """
    require_numerical(request, "watcher")
    x, target = request.x, request.y_target
    mad = safe_mad(mad)
    counter = CountingModel(model, request.budget)
    project = Projector(request, bounded=bounded)
    rng = request.rng()
    share = request.budget // len(lambdas)
    results = []
    with Timer() as timer:
        for i, lam in enumerate(lambdas):
            obj = _Objective(x, mad, lam, counter, target)
            search = PerturbationSearch(rng, np.ones(request.p, dtype=bool))
            z = _minimise(obj, project, search, stop_at=(i + 1) * share)
            try:
                p = float(counter.proba(z[None, :], target)[0])
            except BudgetExhausted:
                p = float(model.predict_proba(z)[target])
            results.append((lam, z, p))
        close = [r for r in results if abs(r[2] - 1.0) <= epsilon and r[2] > 0.5]
        flipped = [r for r in results if int(model.predict_class(r[1])) == target]
        chosen = close[-1] if close else (flipped[-1] if flipped else None)

    info = {"lambda": chosen[0] if chosen else None,
            "within_epsilon": bool(close)}
    return CounterfactualOutcome(found=chosen is not None,
                                 candidates=[chosen[1]] if chosen else [],
                                 evaluations=counter.evaluations, seconds=timer.seconds,
                                 algorithm="watcher", info=info)
