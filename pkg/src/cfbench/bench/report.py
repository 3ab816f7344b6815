"""Aggregated benchmark report and its text, CSV and JSON renderings.

``report.json`` holds everything except wall-clock timings, so two runs with
the same config and seed produce byte-identical files. Timings go to
``report_timing.json``; :meth:`BenchmarkReport.load` merges both back.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from itertools import combinations
from pathlib import Path
from typing import Any

REPORT_FILE = "report.json"
TIMING_FILE = "report_timing.json"
FORMAT = "cfbench.report"
VERSION = 1

# proximity | interpretability | functionality, in table order
COLUMNS = (("L1", "l1"), ("L2", "l2"), ("IMAD", "imad"), ("MD", "md"), ("Spa", "spa"),
           ("SpaRate", "spa_rate"), ("Pla", "pla"), ("Fea", "fea"), ("Div", "div"),
           ("Sta", "stability"), ("Com", "com"), ("Cov", "coverage"), ("Eff", "seconds"))
PROXIMITY = ("l1", "l2", "imad", "md")


@dataclass
class ReportRow:
    dataset: str
    model: str
    algorithm: str
    l1: float | None = None
    l2: float | None = None
    imad: float | None = None
    md: float | None = None
    spa: float | None = None
    spa_rate: float | None = None
    pla: bool = False
    fea: bool = False
    div: bool = False
    stability: float | None = None
    com: bool = True
    coverage: float = 0.0
    seconds: float | None = None
    n_runs: int = 0
    n_found: int = 0
    violations: int = 0
    error: str | None = None

    @property
    def key(self) -> tuple[str, str, str]:
        return self.dataset, self.model, self.algorithm


@dataclass
class BenchmarkReport:
    seed: int = 0
    n_instances: int = 0
    n_runs: int = 0
    rows: list[ReportRow] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return any(r.error for r in self.rows)

    @property
    def failures(self) -> list[str]:
        return ["__".join(r.key) for r in self.rows if r.error]

    def row(self, dataset: str, model: str, algorithm: str) -> ReportRow:
        for r in self.rows:
            if r.key == (dataset, model, algorithm):
                return r
        raise KeyError((dataset, model, algorithm))

    # -- serialisation ---------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        rows = []
        for r in self.rows:
            d = asdict(r)
            d.pop("seconds")
            rows.append(d)
        return {"format": FORMAT, "version": VERSION, "seed": self.seed, "n_instances": self.n_instances,
                "n_runs": self.n_runs, "partial": self.partial, "rows": rows}

    def timing(self) -> dict[str, float | None]:
        return {"__".join(r.key): r.seconds for r in self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, doc: dict[str, Any], timing: dict[str, float | None] | None = None) -> "BenchmarkReport":
        if doc.get("format") != FORMAT:
            raise ValueError("not a benchmark report")
        if doc.get("version") != VERSION:
            raise ValueError(f"unsupported report version {doc.get('version')}")
        names = {f.name for f in fields(ReportRow)}
        rows = []
        for d in doc["rows"]:
            row = ReportRow(**{k: v for k, v in d.items() if k in names})
            if timing is not None:
                row.seconds = timing.get("__".join(row.key))
            rows.append(row)
        return cls(seed=doc["seed"], n_instances=doc["n_instances"], n_runs=doc["n_runs"], rows=rows)

    def save(self, out_dir: str | Path) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / REPORT_FILE).write_text(self.to_json())
        (out / TIMING_FILE).write_text(json.dumps(self.timing(), sort_keys=True, indent=1) + "\n")
        (out / "report.txt").write_text(self.to_text())
        (out / "report.csv").write_text(self.to_csv())

    @classmethod
    def load(cls, in_dir: str | Path) -> "BenchmarkReport":
        d = Path(in_dir)
        path = d / REPORT_FILE if d.is_dir() else d
        doc = json.loads(path.read_text())
        tpath = path.parent / TIMING_FILE
        timing = json.loads(tpath.read_text()) if tpath.is_file() else None
        return cls.from_dict(doc, timing)

    # -- renderings ----------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["dataset", "model", "algorithm"] + [c for c, _ in COLUMNS] + ["found", "runs", "error"])
        for r in self.rows:
            w.writerow([r.dataset, r.model, r.algorithm]
                       + ["" if getattr(r, a) is None else getattr(r, a) for _, a in COLUMNS]
                       + [r.n_found, r.n_runs, r.error or ""])
        return buf.getvalue()

    def to_text(self) -> str:
        widths = [9, 9, 9, 9, 7, 8, 4, 4, 4, 5, 4, 5, 9]
        head = f"{'dataset':<14}{'model':<8}{'algorithm':<17}" + "".join(
            f"{c:>{w}}" for (c, _), w in zip(COLUMNS, widths))
        lines = ["proximity: L1 L2 IMAD MD | interpretability: Spa SpaRate Pla Fea Div | "
                 "functionality: Sta Com Cov Eff", head, "-" * len(head)]
        for r in self.rows:
            cells = []
            for (_, attr), w in zip(COLUMNS, widths):
                v = getattr(r, attr)
                if v is None:
                    s = "-"
                elif isinstance(v, bool):
                    s = "yes" if v else "no"
                elif attr == "seconds":
                    s = f"{v:.4f}"
                else:
                    s = f"{v:.2f}"
                cells.append(f"{s:>{w}}")
            line = f"{r.dataset:<14}{r.model:<8}{r.algorithm:<17}" + "".join(cells)
            if r.error:
                line += f"  FAILED: {r.error}"
            lines.append(line)
        if self.partial:
            lines.append(f"partial report: {len(self.failures)} cell(s) failed")
        return "\n".join(lines) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "text":
            return self.to_text()
        if fmt == "csv":
            return self.to_csv()
        if fmt in ("json", "structured"):
            return self.to_json()
        raise ValueError(f"unknown format {fmt!r}; choose text, csv or json")


def relative_spread(values: list[float]) -> float:
    """Largest pairwise ``|a - b| / mean(a, b)``; 0 for fewer than two values."""
    best = 0.0
    for a, b in combinations(values, 2):
        m = 0.5 * (abs(a) + abs(b))
        if m > 0:
            best = max(best, abs(a - b) / m)
    return best


def model_impact_summary(report: BenchmarkReport) -> list[dict[str, Any]]:
    """Per (dataset, algorithm): proximity metrics side by side per model kind."""
    groups: dict[tuple[str, str], dict[str, ReportRow]] = {}
    for r in report.rows:
        if r.error or r.n_found == 0:
            continue
        groups.setdefault((r.dataset, r.algorithm), {})[r.model] = r
    out = []
    for (dataset, algo), per_model in groups.items():
        if len(per_model) < 2:
            continue
        row: dict[str, Any] = {"dataset": dataset, "algorithm": algo, "models": ";".join(per_model)}
        for metric in PROXIMITY:
            vals = []
            for model, r in per_model.items():
                v = getattr(r, metric)
                row[f"{metric}_{model}"] = v
                if v is not None:
                    vals.append(v)
            row[f"{metric}_spread"] = relative_spread(vals)
        out.append(row)
    return out


def summary_csv(summary: list[dict[str, Any]]) -> str:
    buf = io.StringIO()
    if not summary:
        return "dataset,algorithm,models\n"
    keys: list[str] = []
    for row in summary:
        keys.extend(k for k in row if k not in keys)
    w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
    w.writeheader()
    for row in summary:
        w.writerow(row)
    return buf.getvalue()
