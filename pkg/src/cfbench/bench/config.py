"""Benchmark configuration: a YAML file validated before any work starts."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import yaml

from ..cf import ALGORITHMS, NUMERICAL_ONLY
from ..data import load_schema

MODEL_KINDS = ("tree", "forest", "neural")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    csv: str
    schema: str
    split_seed: int = 0
    fraction: float = 0.8
    algorithms: tuple[str, ...] | None = None


@dataclass(frozen=True)
class BenchConfig:
    datasets: tuple[DatasetConfig, ...]
    models: dict[str, dict[str, Any]]
    algorithms: dict[str, dict[str, Any]]
    n_instances: int = 20
    n_runs: int = 5
    seed: int = 0
    budget: int = 20_000
    output_dir: str = "results"

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["datasets"] = [{k: (list(v) if isinstance(v, tuple) else v) for k, v in ds.items() if v is not None}
                         for ds in d["datasets"]]
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.blake2b(blob, digest_size=8).hexdigest()

    def with_seed(self, seed: int) -> "BenchConfig":
        return BenchConfig(self.datasets, self.models, self.algorithms, self.n_instances, self.n_runs,
                           seed, self.budget, self.output_dir)

    def with_output(self, output_dir: str) -> "BenchConfig":
        return BenchConfig(self.datasets, self.models, self.algorithms, self.n_instances, self.n_runs,
                           self.seed, self.budget, output_dir)

    def cells(self) -> list[tuple[DatasetConfig, str, str]]:
        """Compatible (dataset, model, algorithm) triples in configuration order."""
        out = []
        for ds in self.datasets:
            numerical = load_schema(ds.schema).is_numerical
            algos = ds.algorithms if ds.algorithms is not None else tuple(self.algorithms)
            for model in self.models:
                for algo in algos:
                    if algo in NUMERICAL_ONLY and not numerical:
                        continue
                    out.append((ds, model, algo))
        return out


def _as_mapping(value: Any, what: str, allowed: tuple[str, ...]) -> dict[str, dict[str, Any]]:
    if value is None:
        raise ConfigError(f"'{what}' is required")
    if isinstance(value, (list, tuple)):
        value = {v: {} for v in value}
    if not isinstance(value, dict) or not value:
        raise ConfigError(f"'{what}' must be a non-empty list or mapping")
    out = {}
    for key, params in value.items():
        if key not in allowed:
            raise ConfigError(f"unknown {what[:-1]} {key!r}; choose from {', '.join(allowed)}")
        if params is None:
            params = {}
        if not isinstance(params, dict):
            raise ConfigError(f"parameters of {what[:-1]} {key!r} must be a mapping")
        out[key] = dict(params)
    return out


def _int(doc, key, default, minimum):
    v = doc.get(key, default)
    if not isinstance(v, int) or isinstance(v, bool) or v < minimum:
        raise ConfigError(f"'{key}' must be an integer >= {minimum}, got {v!r}")
    return v


_TOP_KEYS = {"datasets", "models", "algorithms", "n_instances", "n_runs", "seed", "budget", "output_dir"}
_DS_KEYS = {"name", "csv", "schema", "split_seed", "fraction", "algorithms"}


def parse_config(doc: dict[str, Any], base_dir: str | Path = ".") -> BenchConfig:
    """Validate a config mapping; relative paths resolve against ``base_dir``."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = Path(base_dir)
    models = _as_mapping(doc.get("models"), "models", MODEL_KINDS)
    algorithms = _as_mapping(doc.get("algorithms"), "algorithms", ALGORITHMS)

    raw_ds = doc.get("datasets")
    if not isinstance(raw_ds, list) or not raw_ds:
        raise ConfigError("'datasets' must be a non-empty list")
    datasets = []
    names = set()
    for entry in raw_ds:
        if not isinstance(entry, dict):
            raise ConfigError("each dataset entry must be a mapping")
        bad = set(entry) - _DS_KEYS
        if bad:
            raise ConfigError(f"unknown dataset keys: {sorted(bad)}")
        for key in ("name", "csv", "schema"):
            if key not in entry:
                raise ConfigError(f"dataset entry missing {key!r}")
        name = str(entry["name"])
        if name in names:
            raise ConfigError(f"duplicate dataset {name!r}")
        names.add(name)
        csv_path = (base / entry["csv"]).resolve()
        schema_path = (base / entry["schema"]).resolve()
        for p in (csv_path, schema_path):
            if not p.is_file():
                raise ConfigError(f"dataset {name!r}: file not found: {p}")
        schema = load_schema(schema_path)
        algos = entry.get("algorithms")
        if algos is not None:
            algos = tuple(algos)
            for a in algos:
                if a not in algorithms:
                    raise ConfigError(f"dataset {name!r} lists algorithm {a!r} not configured globally")
                if a in NUMERICAL_ONLY and not schema.is_numerical:
                    raise ConfigError(f"algorithm {a!r} supports numerical data only; dataset {name!r} is mixed")
        fraction = float(entry.get("fraction", 0.8))
        if not 0.0 < fraction < 1.0:
            raise ConfigError(f"dataset {name!r}: fraction must lie in (0, 1)")
        datasets.append(DatasetConfig(name, str(csv_path), str(schema_path),
                                      _int(entry, "split_seed", 0, 0), fraction, algos))

    out = doc.get("output_dir", "results")
    return BenchConfig(
        datasets=tuple(datasets), models=models, algorithms=algorithms,
        n_instances=_int(doc, "n_instances", 20, 1), n_runs=_int(doc, "n_runs", 5, 1),
        seed=_int(doc, "seed", 0, 0), budget=_int(doc, "budget", 20_000, 1),
        output_dir=str((base / out).resolve()),
    )


def load_config(path: str | Path) -> BenchConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return parse_config(doc, path.parent)


def derive_seed(*parts: Any) -> int:
    """Stable 63-bit seed from any sequence of labels (independent of Python's hash salt)."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little") >> 1
