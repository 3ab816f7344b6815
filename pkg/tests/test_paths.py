import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfbench.cf import CfRequest, generate
from cfbench.cf.base import CounterfactualOutcome
from cfbench.models import DecisionTree, grow_tree
from cfbench.paths import (CSV_COLUMNS, BiasReport, bias_report, compare_paths, extract_path, render_diff, replay,
                           representative)

from .conftest import numerical_schema


def stump():
    return DecisionTree(feature=[0, -1, -1], threshold=[0.5, 0.0, 0.0], left=[1, -1, -1], right=[2, -1, -1],
                        counts=[[5, 5], [5, 0], [0, 5]], depth=[0, 1, 1], n_features=2)


def test_single_leaf_path_is_empty():
    tree = DecisionTree([-1], [0.0], [-1], [-1], [[1, 3]], [0], 2)
    path = extract_path(tree, np.zeros(2))
    assert path.depth == 0 and path.steps == () and path.leaf_class == 1


def test_depth_one_left_branch():
    path = extract_path(stump(), np.array([0.3, 0.9]), numerical_schema(2))
    assert path.depth == 1
    step = path.steps[0]
    assert step.went_left and step.feature_name == "f0" and step.feature_value == 0.3
    assert path.leaf_class == 0


def test_non_tree_rejected(diabetes_models):
    with pytest.raises(TypeError):
        extract_path(diabetes_models["forest"], np.zeros(8))


def test_replay_and_leaf_class_on_test_set(diabetes, diabetes_models):
    tree = diabetes_models["tree"]
    for x in diabetes.X_test:
        path = extract_path(tree, x, diabetes.schema)
        assert replay(tree, path) == path.leaf_id
        assert path.leaf_class == tree.predict_class(x)
        assert compare_paths(path, path, x, x, diabetes.schema).divergence_depth == path.depth


def test_identical_paths():
    x = np.array([0.3, 0.9])
    p = extract_path(stump(), x)
    diff = compare_paths(p, p, x, x, numerical_schema(2))
    assert diff.divergence_depth == p.depth
    assert diff.x_suffix == () and diff.cf_suffix == () and diff.changed_features == ()


def test_immutable_change_is_flagged():
    schema = numerical_schema(2, immutable=(1,))
    x, cf = np.array([0.3, 0.34]), np.array([0.6, 0.39])
    diff = compare_paths(extract_path(stump(), x), extract_path(stump(), cf), x, cf, schema)
    assert diff.divergence_depth == 0
    assert [c.name for c in diff.changed_features] == ["f0", "f1"]
    assert diff.immutable_violations == ("f1",)
    text = render_diff(diff, "example")
    assert "f1: 0.34 -> 0.39  (immutable)" in text


def test_paths_from_different_trees_rejected():
    other = grow_tree(np.array([[0.0, 0.0], [0.0, 1.0]]), np.array([0, 1]))
    x = np.zeros(2)
    with pytest.raises(ValueError):
        compare_paths(extract_path(stump(), x), extract_path(other, x), x, x, numerical_schema(2))


def test_render_uses_raw_thresholds():
    x, cf = np.array([0.3, 0.0]), np.array([0.6, 0.0])
    schema = numerical_schema(2)
    diff = compare_paths(extract_path(stump(), x, schema), extract_path(stump(), cf, schema), x, cf, schema)
    text = render_diff(diff, bounds=(np.array([10.0, 0.0]), np.array([30.0, 1.0])))
    assert "f0 <= 20" in text and "f0 > 20" in text


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 2**31))
def test_compare_paths_swap_symmetry(seed_a, seed_b):
    rng = np.random.default_rng(0)
    X = rng.random((200, 3))
    tree = grow_tree(X, (X[:, 0] + X[:, 1] * X[:, 2] > 0.6).astype(np.int64), max_depth=5)
    a = np.random.default_rng(seed_a).random(3)
    b = np.random.default_rng(seed_b).random(3)
    schema = numerical_schema(3, immutable=(2,))
    pa, pb = extract_path(tree, a), extract_path(tree, b)
    ab, ba = compare_paths(pa, pb, a, b, schema), compare_paths(pb, pa, b, a, schema)
    assert ab.divergence_depth == ba.divergence_depth <= min(pa.depth, pb.depth)
    assert ab.x_suffix == ba.cf_suffix and ab.cf_suffix == ba.x_suffix
    for name in ab.immutable_violations:
        j = int(name[1:])
        assert abs(a[j] - b[j]) > 1e-9


def test_representative_is_min_imad():
    x = np.zeros(2)
    chosen = representative([np.array([1.0, 1.0]), np.array([0.0, 0.5])], x, np.ones(2))
    np.testing.assert_array_equal(chosen, [0.0, 0.5])


def test_empty_bias_report():
    rep = bias_report("d", stump(), [], numerical_schema(2), np.ones(2))
    assert rep.rows == [] and rep.violations_by_algorithm() == {}
    assert rep.to_csv() == ",".join(CSV_COLUMNS) + "\n"


def test_bias_report_on_diabetes_tree(diabetes, diabetes_models):
    tree = diabetes_models["tree"]
    results = []
    for i in diabetes.test_idx[:6]:
        x = diabetes.X[i]
        req = CfRequest.for_instance(x, tree, diabetes.schema, seed=int(i))
        for algo in ("dice", "growing_spheres", "watcher"):
            results.append((algo, int(i), 0, x, generate(algo, req, tree, diabetes)))
    results.append(("dice", -1, 0, diabetes.X[0], CounterfactualOutcome(False, [], 0, 0.0, "dice")))
    rep = bias_report("diabetes", tree, results, diabetes.schema, diabetes.mad_safe, diabetes.decode)
    counts = rep.violations_by_algorithm()
    assert counts["dice"] == 0
    assert counts["watcher"] >= 1
    assert len(rep.rows) == sum(o.found for *_, o in results)
    lines = rep.to_csv().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS) and len(lines) == len(rep.rows) + 1
    assert "immutable violations per algorithm" in rep.to_text()
    assert isinstance(rep, BiasReport)
