"""One-parameter sweeps of a generator over a fixed request set."""
from __future__ import annotations

import csv
import io
from typing import Any, Sequence

import numpy as np

from ..cf import NUMERICAL_ONLY, CfRequest, generate
from ..metrics import changed_features, l1_norm, l2_norm
from .config import BenchConfig
from .runner import dataset_for, get_model, request_seed, sample_instances

SWEEPABLE = {"growing_spheres": {"gamma": "gamma", "γ": "gamma"},
             "prototype": {"beta": "beta", "β": "beta"}}
SWEEP_COLUMNS = ("dataset", "model", "algorithm", "param", "value", "mean_sparsity", "mean_l1",
                 "mean_l2", "coverage", "n")


def resolve_param(algorithm: str, param: str) -> str:
    try:
        return SWEEPABLE[algorithm][param]
    except KeyError:
        allowed = ", ".join(f"{a}:{p}" for a, ps in SWEEPABLE.items() for p in ps if p.isascii())
        raise ValueError(f"cannot sweep {param!r} of {algorithm!r}; supported: {allowed}") from None


def sweep_hyperparameter(config: BenchConfig, algorithm: str, param: str, values: Sequence[float],
                         models: Sequence[str] | None = None) -> list[dict[str, Any]]:
    """Mean sparsity, L1, L2 and coverage per value.

    Every value sees the same requests with the same seeds (run 0 of each
    sampled instance), so differences come from the parameter alone.
    """
    name = resolve_param(algorithm, param)
    rows = []
    for ds_cfg in config.datasets:
        ds = dataset_for(ds_cfg)
        if algorithm in NUMERICAL_ONLY and not ds.schema.is_numerical:
            continue
        instances = sample_instances(ds, config.n_instances, config.seed, ds_cfg.name)
        for kind in (models or list(config.models)):
            model = get_model(config, ds_cfg, kind)
            base = dict(config.algorithms.get(algorithm, {}))
            for value in values:
                params = {**base, name: float(value)}
                spa, l1, l2, found = [], [], [], 0
                for inst in instances:
                    x = ds.X[inst]
                    seed = request_seed(config.seed, ds_cfg.name, kind, algorithm, inst, 0)
                    req = CfRequest.for_instance(x, model, ds.schema, budget=config.budget, seed=seed)
                    out = generate(algorithm, req, model, ds, **params)
                    if not out.found:
                        continue
                    found += 1
                    c = out.best
                    spa.append(int(changed_features(x, c, ds.schema.groups).sum()))
                    l1.append(l1_norm(x, c))
                    l2.append(l2_norm(x, c))
                rows.append({"dataset": ds_cfg.name, "model": kind, "algorithm": algorithm, "param": name,
                             "value": float(value),
                             "mean_sparsity": float(np.mean(spa)) if spa else None,
                             "mean_l1": float(np.mean(l1)) if l1 else None,
                             "mean_l2": float(np.mean(l2)) if l2 else None,
                             "coverage": found / len(instances) if len(instances) else 0.0,
                             "n": len(instances)})
    return rows


def sweep_csv(rows: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r[k] is None else r[k]) for k in SWEEP_COLUMNS})
    return buf.getvalue()
