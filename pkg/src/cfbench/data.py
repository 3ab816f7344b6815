"""Dataset schema, CSV ingestion, one-hot encoding, min-max scaling and splits.

Typical use::

    ds = prepare("data/diabetes.csv", load_schema("data/schemas/diabetes.yaml"))

``ds.X`` is then the scaled, encoded matrix, with training-row MAD and
covariance attached.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import yaml

log = logging.getLogger(__name__)

NUMERICAL = "numerical"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    """Malformed CSV content; ``row`` is 1-based (header excluded)."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    levels: tuple[str, ...] = ()
    immutable: bool = False
    min: float | None = None
    max: float | None = None

    @property
    def width(self) -> int:
        return len(self.levels) if self.kind == CATEGORICAL else 1


@dataclass(frozen=True)
class FeatureSchema:
    name: str
    features: tuple[FeatureSpec, ...]
    target: str
    positive: str
    negative: str

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate feature names in schema {self.name!r}")
        if self.target in names:
            raise SchemaError(f"target {self.target!r} is also listed as a feature")
        for f in self.features:
            if f.kind not in (NUMERICAL, CATEGORICAL):
                raise SchemaError(f"feature {f.name!r}: unknown kind {f.kind!r}")
            if f.kind == CATEGORICAL:
                if not f.levels:
                    raise SchemaError(f"categorical feature {f.name!r} has no levels")
                if len(set(f.levels)) != len(f.levels):
                    raise SchemaError(f"categorical feature {f.name!r} has duplicate levels")
        if self.positive == self.negative:
            raise SchemaError("positive and negative labels must differ")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "FeatureSchema":
        feats = []
        for f in doc["features"]:
            feats.append(FeatureSpec(
                name=str(f["name"]),
                kind=str(f.get("kind", NUMERICAL)),
                levels=tuple(str(v) for v in f.get("levels", ())),
                immutable=bool(f.get("immutable", False)),
                min=None if f.get("min") is None else float(f["min"]),
                max=None if f.get("max") is None else float(f["max"]),
            ))
        target = doc["target"]
        return cls(
            name=str(doc.get("name", "dataset")),
            features=tuple(feats),
            target=str(target["name"]),
            positive=str(target["positive"]),
            negative=str(target["negative"]),
        )

    def to_dict(self) -> dict[str, Any]:
        feats = []
        for f in self.features:
            d: dict[str, Any] = {"name": f.name, "kind": f.kind}
            if f.levels:
                d["levels"] = list(f.levels)
            if f.immutable:
                d["immutable"] = True
            if f.min is not None:
                d["min"] = f.min
            if f.max is not None:
                d["max"] = f.max
            feats.append(d)
        return {
            "name": self.name,
            "target": {"name": self.target, "positive": self.positive, "negative": self.negative},
            "features": feats,
        }

    # -- encoded layout ----------------------------------------------------

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def n_raw(self) -> int:
        return len(self.features)

    @property
    def n_encoded(self) -> int:
        return sum(f.width for f in self.features)

    @property
    def is_numerical(self) -> bool:
        return all(f.kind == NUMERICAL for f in self.features)

    @property
    def groups(self) -> list[np.ndarray]:
        """Encoded column indices owned by each raw feature, in schema order."""
        out, start = [], 0
        for f in self.features:
            out.append(np.arange(start, start + f.width))
            start += f.width
        return out

    @property
    def column_feature(self) -> np.ndarray:
        """Raw feature index of every encoded column."""
        return np.concatenate([np.full(f.width, i) for i, f in enumerate(self.features)])

    @property
    def column_names(self) -> list[str]:
        cols = []
        for f in self.features:
            if f.kind == CATEGORICAL:
                cols.extend(f"{f.name}={lvl}" for lvl in f.levels)
            else:
                cols.append(f.name)
        return cols

    @property
    def numerical_columns(self) -> np.ndarray:
        return np.array([g[0] for f, g in zip(self.features, self.groups) if f.kind == NUMERICAL],
                        dtype=np.int64)

    @property
    def categorical_groups(self) -> list[np.ndarray]:
        return [g for f, g in zip(self.features, self.groups) if f.kind == CATEGORICAL]

    @property
    def immutable_mask(self) -> np.ndarray:
        """Boolean mask over encoded columns, expanded across one-hot groups."""
        return np.concatenate([np.full(f.width, f.immutable) for f in self.features])

    @property
    def immutable_names(self) -> list[str]:
        return [f.name for f in self.features if f.immutable]


def load_schema(path: str | Path) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return FeatureSchema.from_dict(yaml.safe_load(fh))


# -- raw tables ---------------------------------------------------------------

@dataclass(frozen=True)
class RawTable:
    """Typed CSV content: float arrays for numerical columns, str arrays otherwise."""

    columns: dict[str, np.ndarray]
    labels: np.ndarray
    n_rows: int

    def row(self, i: int) -> dict[str, Any]:
        return {k: (float(v[i]) if v.dtype.kind == "f" else str(v[i])) for k, v in self.columns.items()}


def load_csv(path: str | Path, schema: FeatureSchema) -> RawTable:
    """Read a header-first UTF-8 CSV and type every cell against ``schema``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file, header row required") from None
        rows = list(reader)
    return table_from_rows(header, rows, schema)


def table_from_rows(header: list[str], rows: list[list[str]], schema: FeatureSchema) -> RawTable:
    position = {name: i for i, name in enumerate(header)}
    for name in schema.names + [schema.target]:
        if name not in position:
            raise DataError(f"missing column {name!r}", column=name)
    n = len(rows)
    columns: dict[str, np.ndarray] = {}
    for f in schema.features:
        j = position[f.name]
        if f.kind == NUMERICAL:
            vals = np.empty(n, dtype=np.float64)
            for i, r in enumerate(rows):
                cell = r[j].strip() if j < len(r) else ""
                try:
                    vals[i] = float(cell)
                except ValueError:
                    raise DataError(f"unparseable numerical cell {cell!r}", row=i + 1, column=f.name) from None
                if not math.isfinite(vals[i]):
                    raise DataError(f"non-finite numerical cell {cell!r}", row=i + 1, column=f.name)
        else:
            levels = set(f.levels)
            vals = np.empty(n, dtype=object)
            for i, r in enumerate(rows):
                cell = r[j].strip() if j < len(r) else ""
                if cell not in levels:
                    raise DataError(f"unknown level {cell!r}", row=i + 1, column=f.name)
                vals[i] = cell
        columns[f.name] = vals
    t = position[schema.target]
    labels = np.empty(n, dtype=np.int64)
    for i, r in enumerate(rows):
        cell = r[t].strip() if t < len(r) else ""
        if cell == schema.positive:
            labels[i] = 1
        elif cell == schema.negative:
            labels[i] = 0
        else:
            raise DataError(f"unknown label {cell!r}", row=i + 1, column=schema.target)
    return RawTable(columns=columns, labels=labels, n_rows=n)


# -- encoded datasets -----------------------------------------------------------

def _frozen(a: np.ndarray | None) -> np.ndarray | None:
    if a is not None:
        a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EncodedDataset:
    schema: FeatureSchema
    X: np.ndarray
    y: np.ndarray
    train_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    mad: np.ndarray | None = None
    cov: np.ndarray | None = None

    def __post_init__(self):
        for name in ("X", "y", "train_idx", "test_idx", "lo", "hi", "mad", "cov"):
            _frozen(getattr(self, name))

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def scaled(self) -> bool:
        return self.lo is not None

    @property
    def X_train(self) -> np.ndarray:
        return self.X[self.train_idx]

    @property
    def y_train(self) -> np.ndarray:
        return self.y[self.train_idx]

    @property
    def X_test(self) -> np.ndarray:
        return self.X[self.test_idx]

    @property
    def y_test(self) -> np.ndarray:
        return self.y[self.test_idx]

    @property
    def mad_safe(self) -> np.ndarray:
        """MAD with zero entries replaced by 1 so it can sit in a denominator."""
        if self.mad is None:
            raise ValueError("MAD not computed; call compute_mad first")
        return safe_mad(self.mad)

    def _stats_rows(self) -> np.ndarray:
        return self.train_idx if self.train_idx.size else np.arange(self.n)

    def decode(self, x: np.ndarray) -> dict[str, Any]:
        """Raw-space values of one encoded (possibly scaled) row."""
        x = np.asarray(x, dtype=np.float64)
        if self.scaled:
            x = unscale_rows(self, x[None, :])[0]
        return decode_row(self.schema, x)


def safe_mad(mad: np.ndarray) -> np.ndarray:
    mad = np.asarray(mad, dtype=np.float64)
    return np.where(mad > 0, mad, 1.0)


def encode(raw: RawTable, schema: FeatureSchema) -> EncodedDataset:
    """One-hot encode categorical features; numerical columns pass through."""
    blocks = []
    for f in schema.features:
        vals = raw.columns[f.name]
        if f.kind == NUMERICAL:
            blocks.append(vals.astype(np.float64)[:, None])
        else:
            index = {lvl: k for k, lvl in enumerate(f.levels)}
            codes = np.fromiter((index[v] for v in vals), dtype=np.int64, count=raw.n_rows)
            onehot = np.zeros((raw.n_rows, len(f.levels)))
            onehot[np.arange(raw.n_rows), codes] = 1.0
            blocks.append(onehot)
    X = np.hstack(blocks) if blocks else np.zeros((raw.n_rows, 0))
    return EncodedDataset(schema=schema, X=np.ascontiguousarray(X), y=raw.labels.copy())


def decode_row(schema: FeatureSchema, x: np.ndarray) -> dict[str, Any]:
    """Inverse of :func:`encode` for one unscaled row; categories by argmax."""
    out: dict[str, Any] = {}
    for f, cols in zip(schema.features, schema.groups):
        if f.kind == NUMERICAL:
            out[f.name] = float(x[cols[0]])
        else:
            out[f.name] = f.levels[int(np.argmax(x[cols]))]
    return out


def scale(ds: EncodedDataset) -> EncodedDataset:
    """Min-max scale numerical columns to [0, 1] using training-row bounds.

    Schema ``min``/``max`` take precedence over observed bounds. A column with
    ``max == min`` maps to 0 and triggers a warning. Already-scaled datasets are
    returned unchanged.
    """
    if ds.scaled:
        return ds
    p = ds.p
    lo = np.zeros(p)
    hi = np.ones(p)
    rows = ds._stats_rows()
    cols = ds.schema.numerical_columns
    numerical = [f for f in ds.schema.features if f.kind == NUMERICAL]
    for f, j in zip(numerical, cols):
        col = ds.X[rows, j]
        lo[j] = f.min if f.min is not None else (col.min() if col.size else 0.0)
        hi[j] = f.max if f.max is not None else (col.max() if col.size else 1.0)
    X = ds.X.copy()
    span = hi - lo
    const = span == 0
    for j in np.flatnonzero(const):
        log.warning("column %r is constant on the scaling rows; scaled to 0",
                    ds.schema.column_names[j])
    X[:, cols] = np.where(const[cols], 0.0, (X[:, cols] - lo[cols]) / np.where(const[cols], 1.0, span[cols]))
    return replace(ds, X=X, lo=lo, hi=hi)


def unscale_rows(ds: EncodedDataset, X: np.ndarray) -> np.ndarray:
    """Map scaled rows back to raw units (one-hot columns untouched)."""
    if not ds.scaled:
        return np.array(X, dtype=np.float64)
    return np.asarray(X, dtype=np.float64) * (ds.hi - ds.lo) + ds.lo


def split(ds: EncodedDataset, fraction: float = 0.8, seed: int = 0) -> EncodedDataset:
    """Seeded random partition with ``floor(fraction * n)`` training rows."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_train = int(math.floor(fraction * ds.n))
    return replace(ds, train_idx=np.sort(perm[:n_train]), test_idx=np.sort(perm[n_train:]))


def median_absolute_deviation(X: np.ndarray) -> np.ndarray:
    med = np.median(X, axis=0)
    return np.median(np.abs(X - med), axis=0)


def compute_mad(ds: EncodedDataset) -> EncodedDataset:
    rows = ds._stats_rows()
    if rows.size == 0:
        raise ValueError("MAD needs at least one row")
    return replace(ds, mad=median_absolute_deviation(ds.X[rows]))


def compute_cov(ds: EncodedDataset) -> EncodedDataset:
    rows = ds._stats_rows()
    if rows.size < 2:
        raise ValueError("covariance needs at least two rows")
    cov = np.atleast_2d(np.cov(ds.X[rows], rowvar=False, ddof=1))
    cov = (cov + cov.T) / 2.0
    return replace(ds, cov=cov)


def prepare(csv_path: str | Path, schema: FeatureSchema | str | Path,
            fraction: float = 0.8, seed: int = 0) -> EncodedDataset:
    """load -> encode -> split -> scale (training bounds) -> MAD -> covariance."""
    if not isinstance(schema, FeatureSchema):
        schema = load_schema(schema)
    raw = load_csv(csv_path, schema)
    ds = split(encode(raw, schema), fraction, seed)
    return compute_cov(compute_mad(scale(ds)))


def immutable_mask(schema: FeatureSchema, names: Iterable[str] | None = None) -> np.ndarray:
    """Encoded-column mask for ``names`` (defaults to the schema's immutables)."""
    if names is None:
        return schema.immutable_mask
    wanted = set(names)
    unknown = wanted - set(schema.names)
    if unknown:
        raise SchemaError(f"unknown features {sorted(unknown)}")
    return np.concatenate([np.full(f.width, f.name in wanted) for f in schema.features])
