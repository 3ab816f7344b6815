"""Shared fixtures: real datasets, default-trained models and small toy predictors."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from cfbench.data import FeatureSchema, prepare
from cfbench.models import Predictor, train_model

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"
CONFIGS = ROOT / "configs"

# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


def dataset_paths(name: str) -> tuple[Path, Path]:
    return DATA / f"{name}.csv", DATA / "schemas" / f"{name}.yaml"


def numerical_schema(p: int, immutable: tuple[int, ...] = (), name: str = "toy") -> FeatureSchema:
    return FeatureSchema.from_dict({
        "name": name,
        "target": {"name": "y", "positive": "1", "negative": "0"},
        "features": [{"name": f"f{j}", "kind": "numerical", "immutable": j in immutable} for j in range(p)],
    })


class ThresholdModel(Predictor):
    """Class 1 iff ``x[feature] > cut``."""

    kind = "threshold"

    def __init__(self, n_features: int = 1, feature: int = 0, cut: float = 0.5):
        self.n_features = n_features
        self.feature = feature
        self.cut = cut

    def positive_proba(self, X):
        return (np.asarray(X)[:, self.feature] > self.cut).astype(np.float64)


class ConstantModel(Predictor):
    kind = "constant"

    def __init__(self, n_features: int, p1: float = 0.3):
        self.n_features = n_features
        self.p1 = p1

    def positive_proba(self, X):
        return np.full(np.asarray(X).shape[0], self.p1)


@pytest.fixture(scope="session")
def diabetes():
    return prepare(*dataset_paths("diabetes"))


@pytest.fixture(scope="session")
def german():
    return prepare(*dataset_paths("german"))


@pytest.fixture(scope="session")
def diabetes_models(diabetes):
    return {kind: train_model(kind, diabetes) for kind in ("tree", "forest", "neural")}


@pytest.fixture(scope="session")
def german_models(german):
    return {kind: train_model(kind, german) for kind in ("tree", "neural")}
