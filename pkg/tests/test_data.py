import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kantsc.core import DataError
from kantsc.data import (LabeledSeries, RawDataset, data_root, dataset_names, impute, load_dataset, load_ucr_tsv,
                         make_cbf, preprocess, write_ucr_tsv, znormalize)


def test_parse_line(tmp_path):
    p = tmp_path / "X_TRAIN.tsv"
    p.write_text("1\t0.5\t-0.5\n2\tNaN\t3\n")
    rows = load_ucr_tsv(p)
    assert rows[0].label == 1
    np.testing.assert_array_equal(rows[0].values, [0.5, -0.5])
    assert np.isnan(rows[1].values[0]) and rows[1].values[1] == 3


def test_ragged_rows_are_padded(tmp_path):
    p = tmp_path / "X_TRAIN.tsv"
    p.write_text("1\t1\t2\t3\n0\t4\n")
    rows = load_ucr_tsv(p)
    assert all(len(r.values) == 3 for r in rows)
    assert np.isnan(rows[1].values[1:]).all()


def test_parse_errors_carry_position(tmp_path):
    p = tmp_path / "X_TRAIN.tsv"
    p.write_text("1\t0.5\n2\t0.1\tabc\n")
    with pytest.raises(DataError, match=r":2:3:"):
        load_ucr_tsv(p)
    p.write_text("")
    with pytest.raises(DataError, match="empty"):
        load_ucr_tsv(p)
    with pytest.raises(DataError):
        load_ucr_tsv(tmp_path / "missing.tsv")


def test_impute_examples():
    np.testing.assert_array_equal(impute(np.array([1.0, np.nan, 3.0])), [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(impute(np.array([np.nan, 2.0, np.nan, np.nan])), [2.0, 2.0, 2.0, 2.0])
    with pytest.raises(DataError):
        impute(np.array([np.nan, np.nan]))


def test_znormalize_constant_series():
    np.testing.assert_array_equal(znormalize(np.array([5.0, 5.0, 5.0])), [0.0, 0.0, 0.0])


def test_label_remap():
    raw = RawDataset("t", [LabeledSeries(np.array([1.0, 2.0]), 1), LabeledSeries(np.array([2.0, 1.0]), -1)],
                     [LabeledSeries(np.array([0.0, 1.0]), 1)])
    ds = preprocess(raw)
    assert ds.label_map == {-1: 0, 1: 1}
    np.testing.assert_array_equal(ds.y_train, [1, 0])
    assert ds.m == 2 and ds.d == 2


def test_entirely_missing_series_is_an_error():
    raw = RawDataset("t", [LabeledSeries(np.array([np.nan, np.nan]), 0)], [LabeledSeries(np.array([1.0, 2.0]), 0)])
    with pytest.raises(DataError, match="series 0"):
        preprocess(raw)


series = st.lists(st.one_of(st.floats(-1e3, 1e3), st.just(float("nan"))), min_size=2, max_size=40).filter(
    lambda v: any(x == x for x in v))


@settings(max_examples=100, deadline=None)
@given(st.lists(series, min_size=1, max_size=6))
def test_preprocess_invariants(rows):
    raw = RawDataset("h", [LabeledSeries(np.array(r), i % 3) for i, r in enumerate(rows)],
                     [LabeledSeries(np.array(rows[0]), 0)])
    ds = preprocess(raw)
    x = np.vstack([ds.x_train, ds.x_test])
    assert np.isfinite(x).all()
    for row in x:
        assert abs(row.mean()) <= 1e-9
        assert abs(row.std() - 1) <= 1e-6 or not row.any()
    again = preprocess(RawDataset("h", [LabeledSeries(r, l) for r, l in zip(ds.x_train, ds.y_train)],
                                  [LabeledSeries(r, l) for r, l in zip(ds.x_test, ds.y_test)]))
    assert np.max(np.abs(again.x_train - ds.x_train)) <= 1e-9
    assert sorted(ds.label_map.values()) == list(range(ds.m))


def test_roundtrip_and_layout(tmp_path):
    raw = make_cbf(n_train=30, n_test=900, seed=0)
    from kantsc.data import write_ucr_dataset
    write_ucr_dataset(tmp_path, raw)
    assert dataset_names(tmp_path) == ["CBF"]
    ds = load_dataset(tmp_path, "CBF")
    assert ds.x_train.shape == (30, 128) and ds.x_test.shape == (900, 128) and ds.m == 3
    assert np.bincount(ds.y_train).tolist() == [10, 10, 10]
    assert not ds.meta["variable_length"] and not ds.meta["had_missing"]


def test_write_is_exact(tmp_path):
    vals = np.random.default_rng(0).normal(size=(3, 5))
    write_ucr_tsv(tmp_path / "a.tsv", [1, 2, 3], vals)
    back = load_ucr_tsv(tmp_path / "a.tsv")
    np.testing.assert_array_equal(np.vstack([r.values for r in back]), vals)


def test_cbf_generator_is_seeded():
    a, b = make_cbf(6, 6, seed=3), make_cbf(6, 6, seed=3)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a.train, b.train))
    with pytest.raises(ValueError):
        from kantsc.data import cbf_series
        cbf_series(4, np.random.default_rng(0))


def test_data_root(monkeypatch, tmp_path):
    monkeypatch.setenv("KANTSC_DATA", str(tmp_path))
    assert data_root() == tmp_path
    assert data_root("elsewhere").name == "elsewhere"
    monkeypatch.delenv("KANTSC_DATA")
    with pytest.raises(DataError):
        data_root()
    with pytest.raises(DataError):
        dataset_names(tmp_path / "nope")
