"""Executes the (dataset x model x algorithm) grid and aggregates the metrics."""
from __future__ import annotations

import hashlib
import json
import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np

from ..cf import CfRequest, CounterfactualOutcome, generate
from ..data import EncodedDataset, prepare
from ..metrics import (changed_features, coverage, diversity_check, imad, l1_norm, l2_norm,
                       mahalanobis, plausibility_check, precision_matrix, stability)
from ..models import Predictor, restore, snapshot, train_model
from .config import BenchConfig, DatasetConfig, derive_seed
from .report import BenchmarkReport, ReportRow

log = logging.getLogger(__name__)


@lru_cache(maxsize=8)
def load_dataset(csv: str, schema: str, fraction: float, split_seed: int) -> EncodedDataset:
    return prepare(csv, schema, fraction=fraction, seed=split_seed)


def dataset_for(cfg: DatasetConfig) -> EncodedDataset:
    return load_dataset(cfg.csv, cfg.schema, cfg.fraction, cfg.split_seed)


def sample_instances(ds: EncodedDataset, n: int, seed: int, dataset: str) -> np.ndarray:
    """Dataset row indices drawn uniformly without replacement from the test partition."""
    rng = np.random.default_rng(derive_seed(seed, dataset, "instances"))
    k = min(n, ds.test_idx.size)
    pos = np.sort(rng.choice(ds.test_idx.size, size=k, replace=False))
    return ds.test_idx[pos]


def model_seed(seed: int, dataset: str, model: str) -> int:
    return derive_seed(seed, dataset, model) % (2**32)


def request_seed(seed: int, dataset: str, model: str, algorithm: str, instance: int, run: int) -> int:
    return derive_seed(seed, dataset, model, algorithm, int(instance), int(run))


def get_model(config: BenchConfig, ds_cfg: DatasetConfig, kind: str, cache_dir: Path | None = None) -> Predictor:
    """Train (or reload from ``cache_dir``) the seeded model of one dataset."""
    params = config.models[kind]
    key = hashlib.blake2b(json.dumps([ds_cfg.name, ds_cfg.split_seed, ds_cfg.fraction, kind, params,
                                      config.seed], sort_keys=True).encode(), digest_size=6).hexdigest()
    path = cache_dir / f"{ds_cfg.name}__{kind}__{key}.json" if cache_dir else None
    if path is not None and path.is_file():
        return restore(json.loads(path.read_text()))
    model = train_model(kind, dataset_for(ds_cfg), seed=model_seed(config.seed, ds_cfg.name, kind), **params)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(snapshot(model)))
    return model


@dataclass
class CellSpec:
    dataset: DatasetConfig
    model_kind: str
    model_doc: dict[str, Any]
    algorithm: str
    params: dict[str, Any]
    instances: list[int]
    n_runs: int
    seed: int
    budget: int

    @property
    def key(self) -> str:
        return f"{self.dataset.name}__{self.model_kind}__{self.algorithm}"

    def fingerprint(self) -> str:
        doc = [self.dataset.name, self.dataset.split_seed, self.dataset.fraction, self.model_kind,
               self.algorithm, self.params, self.instances, self.n_runs, self.seed, self.budget,
               hashlib.blake2b(json.dumps(self.model_doc, sort_keys=True).encode(), digest_size=8).hexdigest()]
        return hashlib.blake2b(json.dumps(doc, sort_keys=True).encode(), digest_size=8).hexdigest()


def run_cell(spec: CellSpec) -> dict[str, Any]:
    """All instances x runs of one cell; returns the JSON-ready cell record."""
    ds = dataset_for(spec.dataset)
    model = restore(spec.model_doc)
    outcomes = []
    for inst in spec.instances:
        x = ds.X[inst]
        for run in range(spec.n_runs):
            seed = request_seed(spec.seed, spec.dataset.name, spec.model_kind, spec.algorithm, inst, run)
            req = CfRequest.for_instance(x, model, ds.schema, budget=spec.budget, seed=seed)
            out = generate(spec.algorithm, req, model, ds, **spec.params)
            outcomes.append({"instance": int(inst), "run": run, "outcome": out.to_dict()})
    return {"key": spec.key, "dataset": spec.dataset.name, "model": spec.model_kind,
            "algorithm": spec.algorithm, "fingerprint": spec.fingerprint(), "outcomes": outcomes}


def _safe_run_cell(spec: CellSpec) -> dict[str, Any]:
    try:
        return run_cell(spec)
    except Exception as exc:  # recorded per cell, the grid keeps going
        return {"key": spec.key, "dataset": spec.dataset.name, "model": spec.model_kind,
                "algorithm": spec.algorithm, "fingerprint": spec.fingerprint(),
                "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}


def plan_cells(config: BenchConfig, cache_dir: Path | None = None) -> list[CellSpec]:
    specs = []
    models: dict[tuple[str, str], dict] = {}
    for ds_cfg, kind, algo in config.cells():
        if (ds_cfg.name, kind) not in models:
            models[ds_cfg.name, kind] = snapshot(get_model(config, ds_cfg, kind, cache_dir))
        ds = dataset_for(ds_cfg)
        inst = sample_instances(ds, config.n_instances, config.seed, ds_cfg.name)
        specs.append(CellSpec(ds_cfg, kind, models[ds_cfg.name, kind], algo, dict(config.algorithms[algo]),
                              [int(i) for i in inst], config.n_runs, config.seed, config.budget))
    return specs


def execute(specs: list[CellSpec], out_dir: Path | None = None, parallel: int = 1) -> list[dict[str, Any]]:
    """Run cells, reusing any cell file in ``out_dir`` whose fingerprint matches."""
    results: dict[str, dict] = {}
    todo = []
    for spec in specs:
        path = out_dir / "cells" / f"{spec.key}.json" if out_dir else None
        if path is not None and path.is_file():
            doc = json.loads(path.read_text())
            if doc.get("fingerprint") == spec.fingerprint() and "error" not in doc:
                log.info("reusing %s", spec.key)
                results[spec.key] = doc
                continue
        todo.append(spec)

    if parallel > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            done = list(pool.map(_safe_run_cell, todo))
    else:
        done = [_safe_run_cell(s) for s in todo]
    for spec, doc in zip(todo, done):
        if "error" in doc:
            log.error("cell %s failed: %s", spec.key, doc["error"])
        if out_dir is not None:
            path = out_dir / "cells" / f"{spec.key}.json"
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(doc, sort_keys=True))
        results[spec.key] = doc
    return [results[s.key] for s in specs]


def outcomes_of(cell: dict[str, Any]) -> list[tuple[int, int, CounterfactualOutcome]]:
    return [(o["instance"], o["run"], CounterfactualOutcome.from_dict(o["outcome"])) for o in cell.get("outcomes", [])]


def summarise_cell(cell: dict[str, Any], ds: EncodedDataset, precision: np.ndarray) -> ReportRow:
    """Metrics of one cell; proximity means use found runs only, each via its minimum-IMAD candidate."""
    row = ReportRow(dataset=cell["dataset"], model=cell["model"], algorithm=cell["algorithm"])
    if "error" in cell:
        row.error = cell["error"]
        return row
    runs = outcomes_of(cell)
    schema = ds.schema
    groups = schema.groups
    mask = schema.immutable_mask
    mad = ds.mad_safe
    metrics = {k: [] for k in ("l1", "l2", "imad", "md", "spa", "spa_rate")}
    violations = 0
    diverse = 0
    by_instance: dict[int, list[CounterfactualOutcome]] = {}
    for inst, run, out in runs:
        by_instance.setdefault(inst, []).append(out)
        if not out.found:
            continue
        x = ds.X[inst]
        scores = [imad(x, c, mad) for c in out.candidates]
        c = out.candidates[int(np.argmin(scores))]
        spa = int(changed_features(x, c, groups).sum())
        metrics["l1"].append(l1_norm(x, c))
        metrics["l2"].append(l2_norm(x, c))
        metrics["imad"].append(min(scores))
        metrics["md"].append(mahalanobis(x, c, precision=precision))
        metrics["spa"].append(spa)
        metrics["spa_rate"].append(spa / schema.n_raw)
        violations += sum(not plausibility_check(x, cand, mask) for cand in out.candidates)
        diverse += diversity_check(out)
    all_outcomes = [o for _, _, o in runs]
    n_found = sum(o.found for o in all_outcomes)
    for k, v in metrics.items():
        setattr(row, k, float(np.mean(v)) if v else None)
    pairs = [stability(a, b) for outs in by_instance.values() for a, b in zip(outs, outs[1:])]
    row.n_runs = len(all_outcomes)
    row.n_found = n_found
    row.coverage = coverage(all_outcomes) if all_outcomes else 0.0
    row.stability = float(np.mean(pairs)) if pairs else None
    row.violations = violations
    row.pla = n_found > 0 and violations == 0
    row.fea = row.pla
    row.div = diverse > 0
    row.com = True
    row.seconds = float(np.mean([o.seconds for o in all_outcomes])) if all_outcomes else None
    return row


def aggregate(config: BenchConfig, cells: list[dict[str, Any]]) -> BenchmarkReport:
    report = BenchmarkReport(seed=config.seed, n_instances=config.n_instances, n_runs=config.n_runs)
    by_name = {d.name: d for d in config.datasets}
    precision_cache: dict[str, np.ndarray] = {}
    for cell in cells:
        ds = dataset_for(by_name[cell["dataset"]])
        if cell["dataset"] not in precision_cache:
            precision_cache[cell["dataset"]] = precision_matrix(ds.cov)
        report.rows.append(summarise_cell(cell, ds, precision_cache[cell["dataset"]]))
    return report


def run_benchmark(config: BenchConfig, parallel: int = 1, write: bool = True) -> tuple[BenchmarkReport, list[dict]]:
    """Train, generate, score. Writes cell files and reports under ``config.output_dir`` when ``write``."""
    out_dir = Path(config.output_dir) if write else None
    specs = plan_cells(config, out_dir / "models" if out_dir else None)
    cells = execute(specs, out_dir, parallel)
    report = aggregate(config, cells)
    if out_dir is not None:
        report.save(out_dir)
    return report, cells
