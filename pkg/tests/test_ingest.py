import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from patchtrad.errors import DataError
from patchtrad.ingest import (LabeledTimeSeries, Normalizer, TimeSeries, fit_normalizer, load_csv,
                              resolve_manifest, write_csv)


def _write(path, text):
    path.write_text(text)
    return path


def test_load_two_modalities(tmp_path):
    p = _write(tmp_path / "a.csv", "a,b,label\n" + "".join(f"{i},{2 * i},{i % 2}\n" for i in range(5)))
    s = load_csv(p, label_column="label")
    assert isinstance(s, LabeledTimeSeries)
    assert (s.T, s.M) == (5, 2)
    assert s.modality_names == ("a", "b")
    np.testing.assert_array_equal(s.values[:, 1], [0, 2, 4, 6, 8])
    assert (s.n_pos, s.n_neg) == (2, 3)


def test_load_without_labels(tmp_path):
    p = _write(tmp_path / "a.csv", "x\n1\n2\n")
    s = load_csv(p)
    assert type(s) is TimeSeries and s.values.shape == (2, 1)


def test_all_zero_labels_load(tmp_path):
    p = _write(tmp_path / "a.csv", "x,label\n1,0\n2,0\n3,0\n")
    s = load_csv(p, label_column="label")
    assert s.n_pos == 0 and s.n_neg == 3


def test_ignored_columns(tmp_path):
    p = _write(tmp_path / "a.csv", "timestamp,value,label\n2014-07-01 00:00:00,10,0\n2014-07-01 00:30:00,12,1\n")
    s = load_csv(p, label_column="label", ignore_columns=["timestamp"])
    assert s.modality_names == ("value",)
    with pytest.raises(DataError, match="timestamp"):
        load_csv(p, label_column="label")


@pytest.mark.parametrize("cell", ["", "nan", "abc", "inf"])
def test_bad_cell_names_row_and_column(tmp_path, cell):
    p = _write(tmp_path / "a.csv", f"a,b\n1,2\n3,{cell}\n")
    with pytest.raises(DataError, match=r"row 3, column 'b'"):
        load_csv(p)


def test_bad_label(tmp_path):
    p = _write(tmp_path / "a.csv", "a,label\n1,0\n2,2\n")
    with pytest.raises(DataError, match=r"row 3, column 'label'"):
        load_csv(p, label_column="label")


@pytest.mark.parametrize("text,match", [("", "empty"), ("a,b\n", "no data rows"),
                                        ("a,b\n1,2,3\n", "cells"), ("label\n0\n", "no value columns")])
def test_malformed_files(tmp_path, text, match):
    p = _write(tmp_path / "a.csv", text)
    with pytest.raises(DataError, match=match):
        load_csv(p, label_column="label" if text.startswith("label") else None)


def test_missing_file_and_label_column(tmp_path):
    with pytest.raises(DataError):
        load_csv(tmp_path / "absent.csv")
    p = _write(tmp_path / "a.csv", "a\n1\n")
    with pytest.raises(DataError, match="label column"):
        load_csv(p, label_column="label")


def test_series_is_read_only():
    s = TimeSeries(np.zeros((3, 1)), ())
    with pytest.raises(ValueError):
        s.values[0, 0] = 1.0


def test_series_validation():
    with pytest.raises(DataError):
        TimeSeries(np.array([[1.0, np.nan]]), ())
    with pytest.raises(DataError):
        TimeSeries(np.zeros((3, 2)), ("a",))
    with pytest.raises(DataError):
        LabeledTimeSeries(np.zeros((3, 1)), (), np.zeros(2))


def test_zscore_example():
    n = fit_normalizer(TimeSeries(np.array([[2.0], [4.0], [6.0]]), ()))
    assert n.mean[0] == pytest.approx(4.0)
    assert n.std[0] == pytest.approx(1.63299, abs=1e-5)
    z = n.apply(TimeSeries(np.array([[2.0], [4.0], [6.0]]), ())).values[:, 0]
    np.testing.assert_allclose(z, [-1.2247, 0.0, 1.2247], atol=1e-4)


def test_constant_modality_flagged():
    n = fit_normalizer(TimeSeries(np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]]), ()))
    np.testing.assert_array_equal(n.zero_variance, [False, True])
    assert n.std[1] == 1.0
    z = n.apply(TimeSeries(np.array([[2.0, 5.0]]), ())).values
    assert z[0, 1] == 0.0


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 30), st.integers(1, 4)),
              elements=st.floats(-1e3, 1e3)))
def test_normalizer_roundtrip(values):
    s = TimeSeries(values, ())
    n = fit_normalizer(s)
    back = n.invert(n.apply(s)).values
    np.testing.assert_allclose(back, values, atol=1e-9, rtol=1e-9)
    z = n.apply(s).values
    live = ~n.zero_variance & (values.std(axis=0) > 1e-6)
    np.testing.assert_allclose(z[:, live].mean(axis=0), 0.0, atol=1e-7)
    restored = Normalizer.from_dict(n.to_dict())
    np.testing.assert_array_equal(restored.mean, n.mean)


def test_normalizer_modality_mismatch():
    n = fit_normalizer(TimeSeries(np.zeros((3, 2)), ()))
    with pytest.raises(DataError, match="M=2"):
        n.apply(TimeSeries(np.zeros((3, 1)), ()))


def test_csv_roundtrip(tmp_path, rng):
    s = LabeledTimeSeries(rng.standard_normal((20, 3)), ("a", "b", "c"), rng.integers(0, 2, 20))
    write_csv(tmp_path / "s.csv", s)
    back = load_csv(tmp_path / "s.csv", label_column="label")
    np.testing.assert_array_equal(back.values, s.values)
    np.testing.assert_array_equal(back.labels, s.labels)
    assert back.modality_names == s.modality_names


# -- manifests ----------------------------------------------------------

def _pair(d, stem):
    _write(d / f"{stem}_train.csv", "x\n1\n2\n")
    _write(d / f"{stem}_test.csv", "x,label\n1,0\n2,1\n")


def test_manifest_single_entry(tmp_path):
    _pair(tmp_path, "a")
    p = _write(tmp_path / "m.yaml", "name: one\nentries:\n  - {name: a, train_csv: a_train.csv, test_csv: a_test.csv}\n")
    m = resolve_manifest(p)
    assert m.name == "one" and len(m.entries) == 1
    assert m.entries[0].train_csv == tmp_path / "a_train.csv"
    assert m.entries[0].label_column == "label"


def test_manifest_three_entries(tmp_path):
    sub = tmp_path / "data"
    sub.mkdir()
    lines = []
    for stem in "abc":
        _pair(sub, stem)
        lines.append(f"  - {{name: {stem}, train_csv: data/{stem}_train.csv, test_csv: data/{stem}_test.csv, "
                     f"ignore_columns: [t]}}")
    p = _write(tmp_path / "smd.yaml", "entries:\n" + "\n".join(lines) + "\n")
    m = resolve_manifest(p)
    assert m.name == "smd"
    assert [e.name for e in m.entries] == ["a", "b", "c"]
    assert m.entries[2].ignore_columns == ("t",)


def test_manifest_lists_every_missing_file(tmp_path):
    _pair(tmp_path, "a")
    p = _write(tmp_path / "m.yaml", "entries:\n"
               "  - {name: a, train_csv: a_train.csv, test_csv: a_test.csv}\n"
               "  - {name: b, train_csv: b_train.csv, test_csv: b_test.csv}\n"
               "  - {name: c, train_csv: a_train.csv, test_csv: c_test.csv}\n")
    with pytest.raises(DataError) as err:
        resolve_manifest(p)
    msg = str(err.value)
    for missing in ("b_train.csv", "b_test.csv", "c_test.csv"):
        assert missing in msg
    assert "a_test.csv" not in msg


@pytest.mark.parametrize("text", ["entries: []\n", "[1, 2\n", "entries:\n  - {name: a, bogus: 1}\n"])
def test_manifest_invalid(tmp_path, text):
    with pytest.raises(DataError):
        resolve_manifest(_write(tmp_path / "m.yaml", text))
