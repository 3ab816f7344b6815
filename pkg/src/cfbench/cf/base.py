"""Shared plumbing for the counterfactual generators."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from ..data import CATEGORICAL, FeatureSchema
from ..models import NeuralNet, Predictor, soft_gradient

DEFAULT_BUDGET = 20_000
N_DIRECTIONS = 50
SIGMA0 = 0.05
SIGMA_MAX = 1.0


class BudgetExhausted(Exception):
    pass


@dataclass(frozen=True)
class CfRequest:
    """One counterfactual query: encoded, scaled ``x`` and the class to reach."""

    x: np.ndarray
    y_target: int
    schema: FeatureSchema
    immutable_mask: np.ndarray
    budget: int = DEFAULT_BUDGET
    seed: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=np.float64)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        mask = np.array(self.immutable_mask, dtype=bool)
        if mask.shape != x.shape:
            raise ValueError("immutable_mask must align with the encoded columns")
        object.__setattr__(self, "immutable_mask", mask)

    @classmethod
    def for_instance(cls, x, model: Predictor, schema: FeatureSchema, *,
                     budget: int = DEFAULT_BUDGET, seed: int = 0) -> "CfRequest":
        """Request the class opposite to the model's current prediction."""
        return cls(x=x, y_target=1 - int(model.predict_class(x)), schema=schema,
                   immutable_mask=schema.immutable_mask, budget=budget, seed=seed)

    @property
    def p(self) -> int:
        return self.x.size

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Search box: [0, 1] per column, widened to include ``x`` itself."""
        return np.minimum(0.0, self.x), np.maximum(1.0, self.x)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass
class CounterfactualOutcome:
    found: bool
    candidates: list[np.ndarray]
    evaluations: int
    seconds: float
    algorithm: str
    partial: bool = False
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def best(self) -> np.ndarray | None:
        return self.candidates[0] if self.candidates else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "found": self.found,
            "candidates": [np.asarray(c).tolist() for c in self.candidates],
            "evaluations": self.evaluations,
            "seconds": self.seconds,
            "algorithm": self.algorithm,
            "partial": self.partial,
            "info": self.info,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CounterfactualOutcome":
        return cls(found=d["found"], candidates=[np.asarray(c, dtype=np.float64) for c in d["candidates"]],
                   evaluations=d["evaluations"], seconds=d["seconds"], algorithm=d["algorithm"],
                   partial=d.get("partial", False), info=d.get("info", {}))


class CountingModel:
    """Wraps a predictor and charges every evaluated row against the budget."""

    def __init__(self, model: Predictor, budget: int):
        self.model = model
        self.budget = budget
        self.evaluations = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.evaluations

    def _charge(self, n: int) -> None:
        if self.evaluations + n > self.budget:
            raise BudgetExhausted
        self.evaluations += n

    def proba(self, X: np.ndarray, target: int) -> np.ndarray:
        X = np.atleast_2d(X)
        self._charge(X.shape[0])
        p1 = self.model.positive_proba(np.ascontiguousarray(X, dtype=np.float64))
        return p1 if target == 1 else 1.0 - p1

    def hits(self, X: np.ndarray, target: int) -> np.ndarray:
        X = np.atleast_2d(X)
        self._charge(X.shape[0])
        p1 = self.model.positive_proba(np.ascontiguousarray(X, dtype=np.float64))
        labels = (p1 > 0.5).astype(np.int64)
        return labels == target

    def gradient(self, x: np.ndarray, target: int) -> np.ndarray:
        """Gradient of ``p(target)``; costs 1 call for the network, 2p for finite differences."""
        self._charge(1 if isinstance(self.model, NeuralNet) else 2 * x.size)
        return soft_gradient(self.model, x, target)

    def logit_gradient(self, x: np.ndarray, target: int) -> np.ndarray:
        """Gradient of ``log(p_t / (1 - p_t))``."""
        if isinstance(self.model, NeuralNet):
            self._charge(1)
            g = self.model.logit_gradient(x)
            return g if target == 1 else -g
        g = self.gradient(x, target)
        if not g.any():
            return g
        p = float(np.clip(self.model.positive_proba(x[None, :])[0], 1e-6, 1 - 1e-6))
        return g / (p * (1.0 - p))


class Projector:
    """Maps arbitrary rows back into the search domain of a request.

    Numerical columns are clipped to the request bounds, each one-hot group is
    snapped to its argmax vertex, and frozen columns are reset to ``x``.
    With ``bounded=False`` numerical columns are left unclipped.
    """

    def __init__(self, request: CfRequest, frozen: np.ndarray | None = None, bounded: bool = True):
        self.x = request.x
        self.lo, self.hi = request.bounds
        if not bounded:
            self.lo = np.full(request.p, -np.inf)
            self.hi = np.full(request.p, np.inf)
        self.groups = [g for f, g in zip(request.schema.features, request.schema.groups)
                       if f.kind == CATEGORICAL]
        self.frozen = np.zeros(request.p, dtype=bool) if frozen is None else np.asarray(frozen, dtype=bool)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.clip(np.array(X, dtype=np.float64), self.lo, self.hi)
        for g in self.groups:
            block = X[..., g]
            hot = np.argmax(block, axis=-1)
            block = np.zeros_like(block)
            np.put_along_axis(block, hot[..., None], 1.0, axis=-1)
            X[..., g] = block
        if self.frozen.any():
            X[..., self.frozen] = self.x[self.frozen]
        return X


def soft_threshold(v: np.ndarray, threshold) -> np.ndarray:
    """Proximal operator of ``threshold * ||.||_1``."""
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)


class PerturbationSearch:
    """Gradient-free fallback step for piecewise-constant models.

    Draws ``n_directions`` isotropic Gaussian moves of scale ``sigma`` (only on
    free columns), keeps the best if it lowers the loss. After a failed step
    sigma doubles up to ``sigma_max`` so the search can leave wide flat
    regions; any success resets it to ``sigma0``.
    """

    def __init__(self, rng: np.random.Generator, free: np.ndarray, sigma0: float = SIGMA0,
                 sigma_max: float = SIGMA_MAX, n_directions: int = N_DIRECTIONS):
        self.rng = rng
        self.free = np.asarray(free, dtype=bool)
        self.sigma0 = sigma0
        self.sigma = sigma0
        self.sigma_max = sigma_max
        self.n_directions = n_directions

    def propose(self, current: np.ndarray) -> np.ndarray:
        shape = (self.n_directions,) + current.shape
        steps = self.rng.normal(0.0, self.sigma, size=shape) * self.free
        return current[None, ...] + steps

    def step(self, current: np.ndarray, current_loss: float,
             batch_loss: Callable[[np.ndarray], np.ndarray],
             project: Callable[[np.ndarray], np.ndarray]) -> tuple[np.ndarray, float, bool]:
        cands = project(self.propose(current))
        losses = batch_loss(cands)
        best = int(np.argmin(losses))
        if losses[best] < current_loss:
            self.sigma = self.sigma0
            return cands[best], float(losses[best]), True
        self.sigma = min(2.0 * self.sigma, self.sigma_max)
        return current, current_loss, False


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
        return False
