"""Time the numba and numpy versions of each hot kernel on the same inputs.

    python benchmarks/bench_kernels.py [--rows 20000] [--repeat 5]

Checks that both backends agree before timing them. The numba column is
skipped when numba is unavailable or disabled with CFBENCH_DISABLE_NUMBA=1.
"""
from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from cfbench import kernels
from cfbench.data import prepare
from cfbench.models import train_forest, train_tree

ROOT = Path(__file__).resolve().parents[1]


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    ds = prepare(ROOT / "data/diabetes.csv", ROOT / "data/schemas/diabetes.yaml")
    tree = train_tree(ds)
    forest = train_forest(ds, n_trees=100)
    rng = np.random.default_rng(0)
    X = rng.random((args.rows, ds.p))
    Xs, ys = ds.X_train, ds.y_train.astype(np.int64)
    feats = np.arange(ds.p, dtype=np.int64)

    cases = {
        "tree_apply": (kernels.tree_apply_np, kernels.tree_apply_nb,
                       (X, tree.feature, tree.threshold, tree.left, tree.right)),
        "forest_proba": (kernels.forest_proba_np, kernels.forest_proba_nb,
                         (X, forest._feature, forest._threshold, forest._left, forest._right,
                          forest._value, forest._roots)),
        "best_split": (kernels.best_split_np, kernels.best_split_nb, (Xs, ys, feats, 20)),
    }
    print(f"{'kernel':<14}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for name, (np_fn, nb_fn, a) in cases.items():
        t_np = best_of(lambda: np_fn(*a), args.repeat)
        if nb_fn is None:
            print(f"{name:<14}{t_np * 1e3:>12.2f}{'-':>12}{'-':>9}")
            continue
        ref, got = np_fn(*a), nb_fn(*a)  # also triggers compilation
        same = all(np.array_equal(np.asarray(r), np.asarray(g)) for r, g in zip(
            ref if isinstance(ref, tuple) else (ref,), got if isinstance(got, tuple) else (got,)))
        if not same:
            raise SystemExit(f"{name}: backends disagree")
        t_nb = best_of(lambda: nb_fn(*a), args.repeat)
        print(f"{name:<14}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
