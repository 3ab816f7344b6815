import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfbench.data import (DataError, FeatureSchema, SchemaError, compute_cov, compute_mad, encode, immutable_mask,
                          load_csv, load_schema, median_absolute_deviation, prepare, scale, split, table_from_rows,
                          unscale_rows)

from .conftest import dataset_paths, numerical_schema


def cat_schema():
    return FeatureSchema.from_dict({
        "name": "cat",
        "target": {"name": "y", "positive": "yes", "negative": "no"},
        "features": [{"name": "c", "kind": "categorical", "levels": ["a", "b"]},
                     {"name": "n", "kind": "numerical"}],
    })


# -- load_csv ------------------------------------------------------------------

def test_diabetes_csv_shape():
    csv, schema = dataset_paths("diabetes")
    raw = load_csv(csv, load_schema(schema))
    assert raw.n_rows == 768
    assert len(raw.columns) == 8


def test_header_only_file_gives_zero_rows(tmp_path):
    schema = numerical_schema(2)
    f = tmp_path / "empty.csv"
    f.write_text("f0,f1,y\n")
    raw = load_csv(f, schema)
    assert raw.n_rows == 0
    assert raw.columns["f0"].shape == (0,)


def test_unparseable_cell_reports_row_and_column():
    with pytest.raises(DataError) as err:
        table_from_rows(["f0", "f1", "y"], [["1", "2", "1"], ["abc", "2", "0"]], numerical_schema(2))
    assert err.value.row == 2
    assert err.value.column == "f0"


def test_missing_column_and_unknown_level():
    with pytest.raises(DataError, match="missing column"):
        table_from_rows(["f0", "y"], [["1", "1"]], numerical_schema(2))
    with pytest.raises(DataError, match="unknown level"):
        table_from_rows(["c", "n", "y"], [["z", "1", "yes"]], cat_schema())


def test_completely_empty_file(tmp_path):
    f = tmp_path / "nothing.csv"
    f.write_text("")
    with pytest.raises(DataError):
        load_csv(f, numerical_schema(1))


def test_schema_validation():
    with pytest.raises(SchemaError):
        FeatureSchema.from_dict({"target": {"name": "y", "positive": "1", "negative": "0"},
                                 "features": [{"name": "a"}, {"name": "a"}]})
    with pytest.raises(SchemaError):
        FeatureSchema.from_dict({"target": {"name": "y", "positive": "1", "negative": "0"},
                                 "features": [{"name": "a", "kind": "categorical"}]})


def test_schema_round_trip():
    schema = load_schema(dataset_paths("german")[1])
    assert FeatureSchema.from_dict(schema.to_dict()) == schema


# -- encode ----------------------------------------------------------------------

def test_adult_has_98_one_hot_columns():
    schema = load_schema(dataset_paths("adult")[1])
    cats = [f for f in schema.features if f.kind == "categorical"]
    assert len(cats) == 8
    assert sum(f.width for f in cats) == 98
    assert schema.n_encoded == 98 + 4


def test_encode_numerical_only_is_identity():
    rows = [["1.5", "2", "1"], ["3", "-4", "0"]]
    ds = encode(table_from_rows(["f0", "f1", "y"], rows, numerical_schema(2)), numerical_schema(2))
    np.testing.assert_array_equal(ds.X, [[1.5, 2.0], [3.0, -4.0]])
    np.testing.assert_array_equal(ds.y, [1, 0])


def test_encode_one_hot_level_b():
    schema = cat_schema()
    ds = encode(table_from_rows(["c", "n", "y"], [["b", "7", "yes"]], schema), schema)
    np.testing.assert_array_equal(ds.X, [[0.0, 1.0, 7.0]])


def test_one_hot_groups_sum_to_one(german):
    for cols in german.schema.categorical_groups:
        np.testing.assert_array_equal(german.X[:, cols].sum(axis=1), 1.0)


def test_decode_inverts_encode():
    csv, schema_path = dataset_paths("german")
    schema = load_schema(schema_path)
    raw = load_csv(csv, schema)
    ds = scale(encode(raw, schema))
    for i in range(0, raw.n_rows, 97):
        back = ds.decode(ds.X[i])
        for name, value in raw.row(i).items():
            if isinstance(value, float):
                assert back[name] == pytest.approx(value, abs=1e-9)
            else:
                assert back[name] == value


# -- scale -------------------------------------------------------------------------

def small(values):
    schema = numerical_schema(1)
    rows = [[str(v), "1"] for v in values]
    return encode(table_from_rows(["f0", "y"], rows, schema), schema)


def test_scale_to_unit_interval():
    ds = scale(small([0, 5, 10]))
    np.testing.assert_allclose(ds.X[:, 0], [0.0, 0.5, 1.0])


def test_scale_is_idempotent():
    once = scale(small([0, 5, 10]))
    assert scale(once) is once


def test_constant_column_scales_to_zero_with_warning(caplog):
    with caplog.at_level(logging.WARNING):
        ds = scale(small([3, 3, 3]))
    np.testing.assert_array_equal(ds.X[:, 0], 0.0)
    assert "constant" in caplog.text


def test_one_hot_columns_untouched_by_scaling():
    schema = cat_schema()
    raw = table_from_rows(["c", "n", "y"], [["a", "1", "yes"], ["b", "9", "no"]], schema)
    ds = scale(encode(raw, schema))
    np.testing.assert_array_equal(ds.X[:, :2], [[1, 0], [0, 1]])


def test_unscale_reproduces_raw(diabetes):
    csv, schema = dataset_paths("diabetes")
    raw = encode(load_csv(csv, load_schema(schema)), load_schema(schema))
    np.testing.assert_allclose(unscale_rows(diabetes, diabetes.X), raw.X, atol=1e-9)


def test_numerical_columns_of_training_rows_in_unit_interval(diabetes):
    Xtr = diabetes.X_train
    assert Xtr.min() >= 0.0 and Xtr.max() <= 1.0


# -- split -----------------------------------------------------------------------

def test_diabetes_split_sizes(diabetes):
    assert diabetes.train_idx.size == 614
    assert diabetes.test_idx.size == 154
    assert not set(diabetes.train_idx) & set(diabetes.test_idx)


def test_breast_cancer_split_sizes():
    ds = prepare(*dataset_paths("breast_cancer"))
    # floor(0.8 * 569) = 455; the remainder is 114
    assert ds.train_idx.size == 455
    assert ds.test_idx.size == 114


def test_split_determinism():
    ds = small(range(10))
    a, b = split(ds, 0.8, seed=7), split(ds, 0.8, seed=7)
    np.testing.assert_array_equal(a.train_idx, b.train_idx)
    np.testing.assert_array_equal(a.test_idx, b.test_idx)
    assert a.train_idx.size == 8


def test_split_rejects_bad_fraction():
    with pytest.raises(ValueError):
        split(small([1, 2]), 1.0)


# -- MAD and covariance ------------------------------------------------------------

def test_mad_examples():
    np.testing.assert_array_equal(median_absolute_deviation(np.array([[1.0], [2], [3], [4], [5]])), [1.0])
    np.testing.assert_array_equal(median_absolute_deviation(np.full((6, 1), 3.0)), [0.0])
    one_hot = np.zeros((20, 1))
    one_hot[:2] = 1.0
    np.testing.assert_array_equal(median_absolute_deviation(one_hot), [0.0])


def sort_mad(col):
    s = sorted(col)
    n = len(s)
    med = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
    dev = sorted(abs(v - med) for v in col)
    return dev[n // 2] if n % 2 else (dev[n // 2 - 1] + dev[n // 2]) / 2


def test_mad_matches_sort_oracle_on_random_columns():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        col = rng.normal(size=n) * rng.uniform(0.1, 10)
        assert median_absolute_deviation(col[:, None])[0] == pytest.approx(sort_mad(list(col)), abs=1e-12)


def test_mad_uses_training_rows(diabetes):
    np.testing.assert_array_equal(diabetes.mad, median_absolute_deviation(diabetes.X_train))
    assert (diabetes.mad >= 0).all()


def test_cov_of_perfectly_correlated_columns():
    x = np.arange(10.0)
    X = np.column_stack([x, 3 * x])
    schema = numerical_schema(2)
    rows = [[str(a), str(b), "1"] for a, b in X]
    ds = compute_cov(encode(table_from_rows(["f0", "f1", "y"], rows, schema), schema))
    assert ds.cov[0, 1] == pytest.approx(np.sqrt(ds.cov[0, 0] * ds.cov[1, 1]))


def test_cov_of_independent_standardised_columns_near_identity():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20000, 3))
    schema = numerical_schema(3)
    rows = [[*map(str, r), "1"] for r in X]
    ds = compute_cov(encode(table_from_rows(["f0", "f1", "f2", "y"], rows, schema), schema))
    np.testing.assert_allclose(ds.cov, np.eye(3), atol=0.05)


def test_cov_of_duplicated_rows_is_zero():
    schema = numerical_schema(2)
    ds = compute_cov(encode(table_from_rows(["f0", "f1", "y"], [["1", "2", "1"]] * 5, schema), schema))
    np.testing.assert_array_equal(ds.cov, 0.0)


def test_cov_symmetric_psd(diabetes):
    np.testing.assert_array_equal(diabetes.cov, diabetes.cov.T)
    assert np.linalg.eigvalsh(diabetes.cov).min() >= -1e-9


def test_stats_need_rows():
    with pytest.raises(ValueError):
        compute_cov(small([1.0]))


def test_immutable_mask_by_name(diabetes):
    mask = immutable_mask(diabetes.schema)
    assert [n for n, m in zip(diabetes.schema.column_names, mask) if m] == ["Pregnancies", "Age"]
    with pytest.raises(SchemaError):
        immutable_mask(diabetes.schema, ["Nope"])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=30))
def test_scale_round_trip_property(values):
    ds = scale(small(values))
    assert ds.X.min() >= 0.0 and ds.X.max() <= 1.0
    if max(values) > min(values):
        np.testing.assert_allclose(unscale_rows(ds, ds.X)[:, 0], values, atol=1e-9 * max(1.0, max(map(abs, values))))
