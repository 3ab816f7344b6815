"""``bench`` command line: run, sweep, paths, report.

Exit codes: 0 success, 1 invalid input (nothing was run), 2 some cells failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .bench.config import BenchConfig, ConfigError, load_config
from .bench.report import BenchmarkReport, model_impact_summary, summary_csv
from .bench.runner import dataset_for, get_model, outcomes_of, run_benchmark
from .bench.sweep import resolve_param, sweep_csv, sweep_hyperparameter
from .paths import bias_report, render_diff

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2


def _config(args) -> BenchConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "out", None):
        cfg = cfg.with_output(str(Path(args.out).resolve()))
    return cfg


def cmd_run(args) -> int:
    cfg = _config(args)
    report, _ = run_benchmark(cfg, parallel=args.parallel)
    out = Path(cfg.output_dir)
    (out / "model_impact.csv").write_text(summary_csv(model_impact_summary(report)))
    sys.stdout.write(report.to_text())
    print(f"results written to {out}")
    return EXIT_PARTIAL if report.partial else EXIT_OK


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise ConfigError(f"--values must be a comma-separated list of numbers, got {text!r}") from None


def cmd_sweep(args) -> int:
    cfg = _config(args)
    resolve_param(args.algo, args.param)
    values = _parse_values(args.values)
    if not values:
        raise ConfigError("--values is empty")
    models = [m.strip() for m in args.models.split(",") if m.strip()] if args.models else None
    unknown = sorted(set(models or ()) - set(cfg.models))
    if unknown:
        raise ConfigError(f"--models lists {unknown} which the config does not define")
    rows = sweep_hyperparameter(cfg, args.algo, args.param, values, models)
    text = sweep_csv(rows)
    out = Path(args.output) if args.output else Path(cfg.output_dir) / f"sweep_{args.algo}_{args.param}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_paths(args) -> int:
    cfg = _config(args)
    if "tree" not in cfg.models:
        raise ConfigError("path analysis needs the 'tree' model in the config")
    cfg = BenchConfig(cfg.datasets, {"tree": cfg.models["tree"]}, cfg.algorithms, cfg.n_instances,
                      cfg.n_runs, cfg.seed, cfg.budget, cfg.output_dir)
    report, cells = run_benchmark(cfg, parallel=args.parallel)
    out = Path(cfg.output_dir)
    csv_parts, text_parts, examples = [], [], []
    for ds_cfg in cfg.datasets:
        ds = dataset_for(ds_cfg)
        tree = get_model(cfg, ds_cfg, "tree", out / "models")
        results = [(c["algorithm"], inst, run, ds.X[inst], o)
                   for c in cells if c["dataset"] == ds_cfg.name and "error" not in c
                   for inst, run, o in outcomes_of(c)]
        rep = bias_report(ds_cfg.name, tree, results, ds.schema, ds.mad_safe, ds.decode)
        body = rep.to_csv()
        csv_parts.append(body if not csv_parts else body.split("\n", 1)[1])
        text_parts.append(rep.to_text())
        for row in rep.rows:
            if row.diff.immutable_violations and row.diff.divergence_depth < row.diff.x_depth:
                examples.append(render_diff(row.diff, f"{ds_cfg.name} / {row.algorithm} / instance "
                                                      f"{row.instance_id} run {row.run}", (ds.lo, ds.hi)))
                break
    (out / "paths.csv").write_text("".join(csv_parts))
    text = "\n\n".join(text_parts + (["example of an immutable feature on the diverging path:"] + examples
                                     if examples else []))
    (out / "paths.txt").write_text(text + "\n")
    print(text)
    return EXIT_PARTIAL if report.partial else EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.input)
    if not (path / "report.json").is_file() and not path.is_file():
        raise ConfigError(f"no report.json in {path}")
    report = BenchmarkReport.load(path)
    text = report.render(args.format)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_PARTIAL if report.partial else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Counterfactual explanation benchmark")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the full (dataset x model x algorithm) grid")
    r.add_argument("--config", required=True)
    r.add_argument("--parallel", type=int, default=1, metavar="N", help="worker processes (default 1)")
    r.add_argument("--seed", type=int, default=None, metavar="S", help="override the config seed")
    r.add_argument("--out", default=None, help="override the config output_dir")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one generator hyperparameter")
    s.add_argument("--algo", required=True)
    s.add_argument("--param", required=True)
    s.add_argument("--values", required=True, help="comma-separated list, e.g. 0,1,4,16")
    s.add_argument("--config", required=True)
    s.add_argument("--models", default=None, help="comma-separated model kinds (default: all configured)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--output", default=None, help="CSV path (default: <output_dir>/sweep_<algo>_<param>.csv)")
    s.set_defaults(func=cmd_sweep)

    a = sub.add_parser("paths", help="decision-path bias analysis on the tree cells")
    a.add_argument("--config", required=True)
    a.add_argument("--parallel", type=int, default=1)
    a.add_argument("--seed", type=int, default=None)
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_paths)

    o = sub.add_parser("report", help="render a saved report")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--format", default="text", choices=["text", "csv", "json", "structured"])
    o.add_argument("--output", default=None)
    o.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
