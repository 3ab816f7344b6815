"""Diverse counterfactuals: k candidates jointly optimised with a DPP diversity bonus."""
from __future__ import annotations

import numpy as np

from ..data import CATEGORICAL, safe_mad
from ..models import NeuralNet, Predictor
from .base import (BudgetExhausted, CfRequest, CounterfactualOutcome, CountingModel,
                   PerturbationSearch, Projector, Timer, soft_threshold)

PATIENCE = 12
MIN_STEP = 1e-6
MAX_ITER = 2000
LOGIT_CLIP = 1e-6
BISECT_STEPS = 10


def mad_l1(a, b, mad) -> np.ndarray:
    """MAD-normalised L1 distance, broadcasting over leading axes."""
    return np.sum(np.abs(np.asarray(a) - np.asarray(b)) / safe_mad(mad), axis=-1)


def dpp_kernel(candidates, mad) -> np.ndarray:
    C = np.asarray(candidates, dtype=np.float64)
    D = mad_l1(C[..., :, None, :], C[..., None, :, :], mad)
    return 1.0 / (1.0 + D)


def dpp_diversity(candidates, mad) -> float | np.ndarray:
    """``det(K)`` with ``K_ij = 1 / (1 + dist(c_i, c_j))``; batched over leading axes."""
    d = np.linalg.det(dpp_kernel(candidates, mad))
    return float(d) if np.ndim(d) == 0 else d


def _cofactors(K: np.ndarray) -> np.ndarray:
    k = K.shape[0]
    if k == 1:
        return np.ones((1, 1))
    cof = np.empty_like(K)
    idx = np.arange(k)
    for i in range(k):
        for j in range(k):
            minor = K[np.ix_(idx != i, idx != j)]
            cof[i, j] = (-1.0) ** (i + j) * np.linalg.det(minor)
    return cof


def dpp_gradient(C: np.ndarray, mad) -> np.ndarray:
    """Gradient of ``det(K)`` with respect to every candidate coordinate."""
    inv_mad = 1.0 / safe_mad(mad)
    K = dpp_kernel(C, mad)
    cof = _cofactors(K)
    sign = np.sign(C[:, None, :] - C[None, :, :])
    # dK_ij/dc_i = -K_ij^2 sign(c_i - c_j) / MAD, and K_ij = K_ji both depend on the pair
    w = (cof + cof.T) * K ** 2
    np.fill_diagonal(w, 0.0)
    return -np.einsum("ij,ijm->im", w, sign) * inv_mad


def _logit(p):
    p = np.clip(p, LOGIT_CLIP, 1.0 - LOGIT_CLIP)
    return np.log(p) - np.log1p(-p)


def hinge_yloss(p_target) -> np.ndarray:
    """``max(0, 1 - logit(p_target))``."""
    return np.maximum(0.0, 1.0 - _logit(np.asarray(p_target)))


class _SetObjective:
    def __init__(self, x, mad, lam1, lam2, counter, target):
        self.x, self.mad, self.inv_mad = x, safe_mad(mad), 1.0 / safe_mad(mad)
        self.lam1, self.lam2 = lam1, lam2
        self.counter, self.target = counter, target

    def parts(self, S: np.ndarray):
        """Loss pieces for a batch of candidate sets of shape (n, k, p)."""
        n, k, p = S.shape
        probs = self.counter.proba(S.reshape(n * k, p), self.target).reshape(n, k)
        y = hinge_yloss(probs).mean(axis=1)
        dist = mad_l1(S, self.x, self.mad).mean(axis=1) / p
        div = np.linalg.det(dpp_kernel(S, self.mad))
        return y, dist, div, probs

    def batch(self, S: np.ndarray) -> np.ndarray:
        y, dist, div, _ = self.parts(S)
        return y + self.lam1 * dist - self.lam2 * div

    def __call__(self, C: np.ndarray) -> float:
        return float(self.batch(C[None])[0])


def _optimise(obj: _SetObjective, C: np.ndarray, project: Projector, search: PerturbationSearch,
              free: np.ndarray, max_iter: int) -> np.ndarray:
    counter, x, target, k = obj.counter, obj.x, obj.target, C.shape[0]
    loss = obj(C)
    step = 0.05
    stall = 0
    try:
        for _ in range(max_iter):
            if stall >= PATIENCE:
                break
            grads = np.stack([counter.logit_gradient(c, target) for c in C])
            if not grads.any():
                C, loss, moved = search.step(C, loss, obj.batch, project)
                stall = 0 if moved else stall + 1
                continue
            probs = counter.proba(C, target)
            active = (1.0 - _logit(probs)) > 0.0
            g = -(grads * active[:, None]) / k - obj.lam2 * dpp_gradient(C, obj.mad)
            g *= free
            step = min(2.0 * step, 1.0)
            while step >= MIN_STEP:
                delta = soft_threshold(C - step * g - x, step * obj.lam1 / (k * x.size) * obj.inv_mad)
                cand = project(x + delta)
                cand_loss = obj(cand)
                if cand_loss < loss:
                    break
                step /= 2.0
            if step < MIN_STEP:
                C, loss, moved = search.step(C, loss, obj.batch, project)
                stall = 0 if moved else stall + 1
                continue
            stall = stall + 1 if loss - cand_loss < 1e-9 else 0
            C, loss = cand, cand_loss
    except BudgetExhausted:
        pass
    return C


def _sparsify(c: np.ndarray, x: np.ndarray, request: CfRequest, counter: CountingModel,
              mad: np.ndarray) -> np.ndarray:
    """Move each changed feature back toward ``x`` as far as validity allows.

    Features are visited from the smallest MAD-scaled change upward. A
    categorical group is either fully reverted or left alone; a numerical
    column is reverted or, failing that, bisected toward ``x``.
    """
    target = request.y_target
    schema = request.schema
    c = c.copy()
    scaled = np.abs(c - x) / mad
    order = sorted(range(schema.n_raw), key=lambda f: float(scaled[schema.groups[f]].sum()))
    for f in order:
        cols = schema.groups[f]
        if np.all(c[cols] == x[cols]) or request.immutable_mask[cols].any():
            continue
        trial = c.copy()
        trial[cols] = x[cols]
        if counter.hits(trial, target)[0]:
            c = trial
            continue
        if schema.features[f].kind == CATEGORICAL:
            continue
        j = cols[0]
        lo, hi = 0.0, 1.0
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            trial = c.copy()
            trial[j] = x[j] + mid * (c[j] - x[j])
            if counter.hits(trial, target)[0]:
                hi = mid
            else:
                lo = mid
        c[j] = x[j] + hi * (c[j] - x[j])
    return c


def dice_cf(request: CfRequest, model: Predictor, k: int = 4, lam1: float = 0.5, lam2: float = 1.0,
            mad=None, *, max_iter: int = MAX_ITER, sparsify: bool = False) -> CounterfactualOutcome:
    """Jointly optimise ``k`` candidates for validity, proximity and diversity.

    Loss: ``mean_i hinge(c_i) + lam1 * mean_i dist(c_i, x) / p - lam2 * det(K)``,
    with the proximity term averaged over the ``p`` columns as in the
    reference implementation (the kernel ``K`` uses the plain distance).
    The MAD-L1 proximity term is handled by soft-thresholding, the rest by
    gradient steps (analytic for the network, perturbation search when the
    model gradient vanishes). Immutable columns stay bit-equal to ``x``.
    With ``sparsify`` the valid candidates are then reduced feature by
    feature (off by default: the loss has no sparsity term). Fewer than ``k``
    valid candidates gives a partial outcome.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    x = request.x
    p = request.p
    mad = safe_mad(np.ones(p) if mad is None else mad)
    counter = CountingModel(model, request.budget)
    free = ~request.immutable_mask
    project = Projector(request, frozen=request.immutable_mask)
    rng = request.rng()
    obj = _SetObjective(x, mad, lam1, lam2, counter, request.y_target)
    # deterministic fan-out start: candidate i offset by 0.01 * (i + 1) on free columns
    C0 = project(x[None, :] + 0.01 * np.arange(1, k + 1)[:, None] * free)
    search = PerturbationSearch(rng, np.broadcast_to(free, (k, p)))

    with Timer() as timer:
        C = _optimise(obj, C0, project, search, free, max_iter)
        valid = model.predict_class(C) == request.y_target
        out = []
        for c in C[np.atleast_1d(valid)]:
            if sparsify:
                try:
                    c = _sparsify(c, x, request, counter, mad)
                except BudgetExhausted:
                    pass
            out.append(c)

    found = bool(out)
    return CounterfactualOutcome(found=found, candidates=out, evaluations=counter.evaluations,
                                 seconds=timer.seconds, algorithm="dice",
                                 partial=found and len(out) < k)
