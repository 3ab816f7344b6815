"""Proximity, interpretability and functionality metrics for counterfactuals.

Proximity metrics work in the scaled encoded space. Sparsity counts raw
features: pass the schema's one-hot ``groups`` so that switching a category
counts once.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .data import safe_mad

SPARSITY_TOL = 1e-9
STABILITY_TOL = 1e-6
COV_RIDGE = 1e-6


def _pair(x, xp) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    xp = np.asarray(xp, dtype=np.float64)
    if x.shape != xp.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {xp.shape}")
    return x, xp


def l1_norm(x, xp) -> float:
    x, xp = _pair(x, xp)
    return float(np.sum(np.abs(x - xp)))


def l2_norm(x, xp) -> float:
    """Euclidean distance."""
    x, xp = _pair(x, xp)
    return float(np.sqrt(np.sum((x - xp) ** 2)))


def imad(x, xp, mad) -> float:
    """L1 distance with each coordinate divided by its MAD (zero MAD -> 1)."""
    x, xp = _pair(x, xp)
    mad = safe_mad(mad)
    if mad.shape != x.shape:
        raise ValueError(f"dimension mismatch: mad {mad.shape} vs {x.shape}")
    return float(np.sum(np.abs(x - xp) / mad))


def precision_matrix(cov) -> np.ndarray:
    """Inverse covariance; adds ``1e-6 * I`` only when ``cov`` is not positive definite."""
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    try:
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = cov + COV_RIDGE * np.eye(cov.shape[0])
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise np.linalg.LinAlgError("covariance not invertible after ridge regularisation") from None
    return np.linalg.inv(cov)


def mahalanobis(x, xp, cov=None, *, precision=None) -> float:
    """``sqrt(d^T V^-1 d)``; pass a precomputed ``precision`` to skip the inversion."""
    x, xp = _pair(x, xp)
    if precision is None:
        if cov is None:
            raise ValueError("need cov or precision")
        precision = precision_matrix(cov)
    d = x - xp
    q = float(d @ precision @ d)
    return float(np.sqrt(max(q, 0.0)))


def changed_features(x, xp, groups: Sequence[np.ndarray] | None = None,
                     tol: float = SPARSITY_TOL) -> np.ndarray:
    """Boolean per raw feature: did any of its columns move by more than ``tol``?"""
    x, xp = _pair(x, xp)
    moved = np.abs(x - xp) > tol
    if groups is None:
        return moved
    return np.array([bool(moved[g].any()) for g in groups])


def sparsity(x, xp, tol: float = SPARSITY_TOL, groups: Sequence[np.ndarray] | None = None) -> int:
    return int(changed_features(x, xp, groups, tol).sum())


def sparsity_rate(x, xp, p: int, groups: Sequence[np.ndarray] | None = None,
                  tol: float = SPARSITY_TOL) -> float:
    if p <= 0:
        raise ValueError("p must be positive")
    return sparsity(x, xp, tol, groups) / p


def plausibility_check(x, xp, immutable_mask, tol: float = SPARSITY_TOL) -> bool:
    """True iff no immutable column changed."""
    x, xp = _pair(x, xp)
    mask = np.asarray(immutable_mask, dtype=bool)
    if mask.size == 0 or not mask.any():
        return True
    return bool(np.all(np.abs(x[mask] - xp[mask]) <= tol))


def coverage(outcomes: Sequence) -> float:
    if len(outcomes) == 0:
        raise ValueError("coverage needs at least one run")
    return sum(1 for o in outcomes if o.found) / len(outcomes)


def stability(a, b, tol: float = STABILITY_TOL) -> int:
    """1 when two runs on the same request return the same candidates."""
    if not a.found or not b.found:
        return int(not a.found and not b.found)
    ca = np.asarray(a.candidates, dtype=np.float64)
    cb = np.asarray(b.candidates, dtype=np.float64)
    if ca.shape != cb.shape:
        return 0
    return int(np.all(np.abs(ca - cb) <= tol))


def efficiency(outcome) -> float:
    return float(outcome.seconds)


def diversity_check(outcome) -> bool:
    """At least two pairwise-distinct candidates."""
    if not outcome.found or len(outcome.candidates) < 2:
        return False
    c = np.asarray(outcome.candidates, dtype=np.float64)
    for i in range(len(c)):
        for j in range(i + 1, len(c)):
            if np.any(np.abs(c[i] - c[j]) > STABILITY_TOL):
                return True
    return False


@dataclass
class MetricRecord:
    """Per-candidate metrics plus the outcome-level flags."""

    l1: float
    l2: float
    imad: float
    md: float
    spa: int
    spa_rate: float
    plausible: bool
    diverse: bool
    seconds: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_candidate(x, xp, *, mad, precision, groups, immutable_mask,
                       seconds: float = 0.0, diverse: bool = False) -> MetricRecord:
    p = len(groups)
    spa = sparsity(x, xp, groups=groups)
    return MetricRecord(
        l1=l1_norm(x, xp),
        l2=l2_norm(x, xp),
        imad=imad(x, xp, mad),
        md=mahalanobis(x, xp, precision=precision),
        spa=spa,
        spa_rate=spa / p,
        plausible=plausibility_check(x, xp, immutable_mask),
        diverse=diverse,
        seconds=seconds,
    )
