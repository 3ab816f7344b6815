"""Decision-path extraction and comparison for counterfactual bias analysis.

For a tree, the path of ``x`` and the path of its counterfactual share a
prefix and then split. Where they split, and which features the
counterfactual changed to get there, shows whether a generator reached the
other class through a feature that should never move (age, pregnancies).
"""
from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .data import FeatureSchema, NUMERICAL
from .metrics import SPARSITY_TOL, imad
from .models import DecisionTree, Predictor

CSV_COLUMNS = ("dataset", "algorithm", "instance_id", "run", "divergence_depth", "n_changed", "violations")


@dataclass(frozen=True)
class PathStep:
    node_id: int
    feature_index: int
    feature_name: str
    threshold: float
    went_left: bool
    feature_value: float

    @property
    def key(self) -> tuple[int, bool]:
        return self.node_id, self.went_left


@dataclass(frozen=True)
class DecisionPath:
    steps: tuple[PathStep, ...]
    leaf_id: int
    leaf_class: int
    tree_key: str

    @property
    def depth(self) -> int:
        return len(self.steps)


@dataclass(frozen=True)
class FeatureChange:
    name: str
    old: Any
    new: Any


@dataclass(frozen=True)
class PathDiff:
    divergence_depth: int
    shared_prefix: tuple[PathStep, ...]
    x_suffix: tuple[PathStep, ...]
    cf_suffix: tuple[PathStep, ...]
    changed_features: tuple[FeatureChange, ...]
    immutable_violations: tuple[str, ...]
    x_depth: int
    cf_depth: int


def tree_fingerprint(tree: DecisionTree) -> str:
    h = hashlib.blake2b(digest_size=8)
    for a in (tree.feature, tree.threshold, tree.left, tree.right):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()


def extract_path(tree: Predictor, x, schema: FeatureSchema | None = None) -> DecisionPath:
    """Root-to-leaf trace of ``x`` through ``tree``."""
    if not isinstance(tree, DecisionTree):
        raise TypeError(f"path analysis needs a decision tree, got {type(tree).__name__}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (tree.n_features,):
        raise ValueError(f"expected {tree.n_features} features, got shape {x.shape}")
    names = schema.column_names if schema is not None else [f"x{j}" for j in range(tree.n_features)]
    steps = []
    node = 0
    while tree.feature[node] >= 0:
        j = int(tree.feature[node])
        t = float(tree.threshold[node])
        left = bool(x[j] <= t)
        steps.append(PathStep(node, j, names[j], t, left, float(x[j])))
        node = int(tree.left[node] if left else tree.right[node])
    return DecisionPath(tuple(steps), node, tree.leaf_class(node), tree_fingerprint(tree))


def replay(tree: DecisionTree, path: DecisionPath) -> int:
    """Follow the recorded branches from the root; returns the leaf reached."""
    node = 0
    for step in path.steps:
        if step.node_id != node:
            raise ValueError(f"path step at node {step.node_id} but walk is at node {node}")
        node = int(tree.left[node] if step.went_left else tree.right[node])
    return node


def compare_paths(path_x: DecisionPath, path_cf: DecisionPath, x, x_cf, schema: FeatureSchema,
                  decode: Callable[[np.ndarray], dict[str, Any]] | None = None) -> PathDiff:
    """Longest common prefix of ``(node_id, went_left)`` plus the raw feature diff.

    ``decode`` maps an encoded row to raw values for the report (defaults to
    the encoded values themselves).
    """
    if path_x.tree_key != path_cf.tree_key:
        raise ValueError("paths come from different trees")
    d = 0
    for a, b in zip(path_x.steps, path_cf.steps):
        if a.key != b.key:
            break
        d += 1
    x = np.asarray(x, dtype=np.float64)
    x_cf = np.asarray(x_cf, dtype=np.float64)
    moved = np.abs(x - x_cf) > SPARSITY_TOL
    raw_x = decode(x) if decode else None
    raw_cf = decode(x_cf) if decode else None
    changes = []
    for f, cols in zip(schema.features, schema.groups):
        if not moved[cols].any():
            continue
        if raw_x is not None:
            old, new = raw_x[f.name], raw_cf[f.name]
        elif f.kind == NUMERICAL:
            old, new = float(x[cols[0]]), float(x_cf[cols[0]])
        else:
            old, new = f.levels[int(np.argmax(x[cols]))], f.levels[int(np.argmax(x_cf[cols]))]
        changes.append(FeatureChange(f.name, old, new))
    immutable = set(schema.immutable_names)
    violations = tuple(c.name for c in changes if c.name in immutable)
    return PathDiff(divergence_depth=d, shared_prefix=path_x.steps[:d], x_suffix=path_x.steps[d:],
                    cf_suffix=path_cf.steps[d:], changed_features=tuple(changes),
                    immutable_violations=violations, x_depth=path_x.depth, cf_depth=path_cf.depth)


def _fmt(v: Any) -> str:
    return f"{v:.4g}" if isinstance(v, float) else str(v)


def render_diff(diff: PathDiff, title: str = "", bounds: tuple[np.ndarray, np.ndarray] | None = None) -> str:
    """Text rendering of one path comparison.

    ``bounds`` are the per-column scaling ``(lo, hi)``; when given, split
    thresholds are printed in raw units.
    """
    def step(s: PathStep) -> str:
        t = s.threshold
        if bounds is not None:
            lo, hi = bounds
            t = t * (hi[s.feature_index] - lo[s.feature_index]) + lo[s.feature_index]
        return f"[{s.node_id}] {s.feature_name} {'<=' if s.went_left else '>'} {t:.4g}"

    lines = [title] if title else []
    lines.append(f"shared prefix: {diff.divergence_depth} of {diff.x_depth} (x) / {diff.cf_depth} (cf) steps")
    lines.extend("  " + step(s) for s in diff.shared_prefix)
    lines.append("  x  continues: " + (", ".join(step(s) for s in diff.x_suffix) or "-"))
    lines.append("  cf continues: " + (", ".join(step(s) for s in diff.cf_suffix) or "-"))
    for c in diff.changed_features:
        flag = "  (immutable)" if c.name in diff.immutable_violations else ""
        lines.append(f"  {c.name}: {_fmt(c.old)} -> {_fmt(c.new)}{flag}")
    return "\n".join(lines)


@dataclass
class BiasRow:
    dataset: str
    algorithm: str
    instance_id: int
    run: int
    diff: PathDiff

    def as_csv(self) -> dict[str, Any]:
        return {"dataset": self.dataset, "algorithm": self.algorithm, "instance_id": self.instance_id,
                "run": self.run, "divergence_depth": self.diff.divergence_depth,
                "n_changed": len(self.diff.changed_features),
                "violations": ";".join(self.diff.immutable_violations)}


@dataclass
class BiasReport:
    rows: list[BiasRow] = field(default_factory=list)

    def violations_by_algorithm(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rows:
            out[r.algorithm] = out.get(r.algorithm, 0) + len(r.diff.immutable_violations)
        return dict(sorted(out.items()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in self.rows:
            w.writerow(r.as_csv())
        return buf.getvalue()

    def to_text(self) -> str:
        head = f"{'dataset':<14}{'algorithm':<17}{'inst':>5}{'run':>4}{'div':>5}{'chg':>5}  violations"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            c = r.as_csv()
            lines.append(f"{c['dataset']:<14}{c['algorithm']:<17}{c['instance_id']:>5}{c['run']:>4}"
                         f"{c['divergence_depth']:>5}{c['n_changed']:>5}  {c['violations'] or '-'}")
        lines.append("")
        lines.append("immutable violations per algorithm:")
        for algo, n in self.violations_by_algorithm().items():
            lines.append(f"  {algo:<17}{n}")
        return "\n".join(lines)


def representative(candidates: Sequence[np.ndarray], x: np.ndarray, mad) -> np.ndarray:
    """The candidate with the smallest MAD-scaled L1 distance to ``x``."""
    scores = [imad(x, c, mad) for c in candidates]
    return np.asarray(candidates[int(np.argmin(scores))])


def bias_report(dataset: str, tree: DecisionTree, results: Iterable[tuple[str, int, int, np.ndarray, Any]],
                schema: FeatureSchema, mad, decode: Callable[[np.ndarray], dict[str, Any]] | None = None) -> BiasReport:
    """One row per found outcome; ``results`` yields (algorithm, instance_id, run, x, outcome)."""
    report = BiasReport()
    for algorithm, instance_id, run, x, outcome in results:
        if not outcome.found:
            continue
        cf = representative(outcome.candidates, x, mad)
        diff = compare_paths(extract_path(tree, x, schema), extract_path(tree, cf, schema), x, cf, schema, decode)
        report.rows.append(BiasRow(dataset, algorithm, int(instance_id), int(run), diff))
    return report
