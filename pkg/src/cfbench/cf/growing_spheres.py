"""Growing Spheres: layer-wise random search around ``x``, then feature reduction."""
from __future__ import annotations

import numpy as np

from ..models import Predictor
from .base import BudgetExhausted, CfRequest, CounterfactualOutcome, CountingModel, Projector, Timer

BISECT_STEPS = 16
MAX_HALVINGS = 30


def sample_shell(rng: np.random.Generator, center: np.ndarray, a: float, b: float, n: int) -> np.ndarray:
    """``n`` points uniform in the spherical layer ``a <= ||z - center||_2 <= b``."""
    d = center.size
    z = rng.normal(size=(n, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    # uniform in volume: r^d uniform on [a^d, b^d], written relative to b for stability
    rho = (a / b) ** d if a > 0 else 0.0
    r = b * (rho + rng.random(n) * (1.0 - rho)) ** (1.0 / d)
    return center + z * r[:, None]


def require_numerical(request: CfRequest, name: str) -> None:
    if not request.schema.is_numerical:
        raise ValueError(f"{name} supports numerical schemas only; {request.schema.name!r} has categorical features")


class _Refiner:
    """Shrinks a hit toward ``x`` while keeping it on the target side."""

    def __init__(self, x: np.ndarray, counter: CountingModel, target: int):
        self.x = x
        self.counter = counter
        self.target = target

    def flipped(self, z: np.ndarray) -> bool:
        return bool(self.counter.hits(z[None, :], self.target)[0])

    def ray(self, z: np.ndarray) -> np.ndarray:
        # bisection on t in x + t (z - x); t = 1 is known to flip
        lo, hi = 0.0, 1.0
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            if self.flipped(self.x + mid * (z - self.x)):
                hi = mid
            else:
                lo = mid
        return z if hi == 1.0 else self.x + hi * (z - self.x)

    def revert(self, z: np.ndarray) -> np.ndarray:
        # smallest moves first, so the large, decisive ones are tried last
        z = z.copy()
        delta = np.abs(z - self.x)
        for j in np.argsort(delta, kind="stable"):
            if delta[j] == 0.0:
                continue
            trial = z.copy()
            trial[j] = self.x[j]
            if self.flipped(trial):
                z = trial
        return z

    def polish(self, z: np.ndarray) -> np.ndarray:
        z = z.copy()
        for j in np.argsort(np.abs(z - self.x), kind="stable"):
            if z[j] == self.x[j]:
                continue
            lo, hi = 0.0, 1.0
            for _ in range(BISECT_STEPS):
                mid = 0.5 * (lo + hi)
                trial = z.copy()
                trial[j] = self.x[j] + mid * (z[j] - self.x[j])
                if self.flipped(trial):
                    hi = mid
                else:
                    lo = mid
            z[j] = self.x[j] + hi * (z[j] - self.x[j])
        return z


def growing_spheres_cf(request: CfRequest, model: Predictor, gamma: float = 1.0, *,
                       eta0: float = 0.1, n_samples: int = 1000, n_refine: int = 10) -> CounterfactualOutcome:
    """Search for the closest enemy by sampling doubling spherical layers.

    The radius is first halved from ``eta0`` until the ball around ``x`` holds
    no enemy; then layers ``[a, 2a]`` are sampled until one does. The
    ``n_refine`` closest enemies are each shrunk along the ray to ``x``,
    reduced coordinate by coordinate, and polished by per-coordinate
    bisection. Among all those variants the one minimising
    ``L2 + gamma * L0`` is returned. The variant pool does not depend on
    ``gamma``, so the chosen sparsity is non-increasing in ``gamma``.
    """
    require_numerical(request, "growing_spheres")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    x, target = request.x, request.y_target
    counter = CountingModel(model, request.budget)
    project = Projector(request)
    rng = request.rng()
    lo, hi = request.bounds
    diameter = float(np.linalg.norm(hi - lo))
    pool: list[np.ndarray] = []
    info: dict = {}

    with Timer() as timer:
        try:
            if counter.hits(x[None, :], target)[0]:
                pool.append(x.copy())
            else:
                hits = _layer_search(rng, x, counter, target, project, eta0, n_samples, diameter, info)
                if hits is not None:
                    pool.extend(_refine(x, hits, counter, target, n_refine))
        except BudgetExhausted:
            info["budget_exhausted"] = True
        if pool:
            cost = [np.linalg.norm(z - x) + gamma * np.count_nonzero(np.abs(z - x) > 1e-9) for z in pool]
            best = pool[int(np.argmin(cost))]

    found = bool(pool)
    return CounterfactualOutcome(found=found, candidates=[best] if found else [],
                                 evaluations=counter.evaluations, seconds=timer.seconds,
                                 algorithm="growing_spheres", info=info)


def _layer_search(rng, x, counter, target, project, eta0, n_samples, diameter, info):
    eta = eta0
    for _ in range(MAX_HALVINGS):
        ball = project(sample_shell(rng, x, 0.0, eta, n_samples))
        if not counter.hits(ball, target).any():
            break
        eta /= 2.0
    a, b = eta, 2.0 * eta
    while a <= diameter:
        layer = project(sample_shell(rng, x, a, b, n_samples))
        mask = counter.hits(layer, target)
        if mask.any():
            info["radius"] = [a, b]
            return layer[mask]
        a, b = b, 2.0 * b
    return None


def _refine(x, hits, counter, target, n_refine):
    order = np.argsort(np.linalg.norm(hits - x, axis=1), kind="stable")
    closest = hits[order[:n_refine]]
    refiner = _Refiner(x, counter, target)
    pool = list(closest)
    try:
        for e in closest:
            a = refiner.ray(e)
            pool.append(a)
            b = refiner.revert(a)
            pool.append(b)
            pool.append(refiner.polish(refiner.ray(b)))
    except BudgetExhausted:
        pass
    return pool
