"""Counterfactual generators behind one calling convention.

``generate(algorithm, request, model, dataset, **params)`` dispatches to the
named generator and supplies the dataset statistics it needs (MAD vector,
training matrix).
"""
from __future__ import annotations

from typing import Any, Callable

from ..data import EncodedDataset
from ..models import Predictor
from .base import CfRequest, CounterfactualOutcome, DEFAULT_BUDGET
from .dice import dice_cf, dpp_diversity
from .growing_spheres import growing_spheres_cf
from .oracle import tree_oracle_cf
from .prototype import prototype_cf
from .watcher import watcher_cf

NUMERICAL_ONLY = frozenset({"watcher", "growing_spheres"})

_RUNNERS: dict[str, Callable[..., CounterfactualOutcome]] = {
    "watcher": lambda req, m, ds, **kw: watcher_cf(req, m, ds.mad, **kw),
    "growing_spheres": lambda req, m, ds, **kw: growing_spheres_cf(req, m, **kw),
    "dice": lambda req, m, ds, **kw: dice_cf(req, m, mad=ds.mad, **kw),
    "prototype": lambda req, m, ds, **kw: prototype_cf(req, m, train_matrix=ds.X_train, **kw),
}
ALGORITHMS = tuple(_RUNNERS)


def compatible(algorithm: str, dataset: EncodedDataset) -> bool:
    return algorithm not in NUMERICAL_ONLY or dataset.schema.is_numerical


def generate(algorithm: str, request: CfRequest, model: Predictor, dataset: EncodedDataset,
             **params: Any) -> CounterfactualOutcome:
    try:
        runner = _RUNNERS[algorithm]
    except KeyError:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {', '.join(ALGORITHMS)}") from None
    return runner(request, model, dataset, **params)


__all__ = ["ALGORITHMS", "CfRequest", "CounterfactualOutcome", "DEFAULT_BUDGET", "NUMERICAL_ONLY",
           "compatible", "dice_cf", "dpp_diversity", "generate", "growing_spheres_cf",
           "prototype_cf", "tree_oracle_cf", "watcher_cf"]
