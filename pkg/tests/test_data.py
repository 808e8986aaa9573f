import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedat.data import (
    Dataset,
    SynthSpec,
    load_csv,
    partition_non_iid,
    standardize,
    synthesize_cert_like,
    train_test_split,
    write_csv,
)
from fedat.errors import (
    ConfigError,
    ContractViolationError,
    DataFormatError,
    EmptyDatasetError,
    InvalidHyperparameterError,
)


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


def test_load_csv_label_order(tmp_path):
    ds = load_csv(_write(tmp_path, "f0,f1,label\n1,2,normal\n3,4,s1\n5,6,normal\n"))
    assert ds.n_samples == 3 and ds.num_classes == 2
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.class_names == ["normal", "s1"]


def test_load_csv_forces_normal_to_zero(tmp_path):
    ds = load_csv(_write(tmp_path, "f0,label\n1,s2\n2,normal\n3,s1\n"))
    assert ds.class_names == ["normal", "s2", "s1"]
    assert ds.labels.tolist() == [1, 0, 2]


def test_load_csv_empty(tmp_path):
    with pytest.raises(EmptyDatasetError):
        load_csv(_write(tmp_path, "f0,f1,label\n"))


def test_load_csv_ragged_row_named(tmp_path):
    header = ",".join(f"f{i}" for i in range(12)) + ",label\n"
    good = ",".join(["0"] * 12) + ",normal\n"
    bad = ",".join(["0"] * 11) + ",normal\n"
    with pytest.raises(DataFormatError, match="row 3"):
        load_csv(_write(tmp_path, header + good + bad))


def test_load_csv_non_numeric(tmp_path):
    with pytest.raises(DataFormatError, match="row 2, column f1"):
        load_csv(_write(tmp_path, "f0,f1,label\n1,x,normal\n"))


def test_load_csv_missing():
    with pytest.raises(FileNotFoundError):
        load_csv("/nonexistent/file.csv")


def test_csv_roundtrip(tmp_path):
    ds = synthesize_cert_like(SynthSpec(samples_per_class=(30, 5, 4), feature_dim=3, seed=2))
    write_csv(ds, tmp_path / "x.csv")
    back = load_csv(tmp_path / "x.csv")
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    assert back.class_names == ds.class_names


# ---- standardize


def test_standardize_midpoint_constant_and_clip():
    train = Dataset(np.array([[0.0, 7.0], [10.0, 7.0], [5.0, 7.0]]), [0, 0, 1], ["normal", "s1"])
    test = Dataset(np.array([[15.0, 3.0], [-5.0, 7.0]]), [0, 1], ["normal", "s1"])
    tr, (te,) = standardize(train, [test])
    assert tr.features[2, 0] == 0.0
    assert np.all(tr.features[:, 1] == 0.0)
    assert te.features[:, 0].tolist() == [1.0, -1.0]
    assert tr.scaler is te.scaler


def test_standardize_twice_forbidden():
    ds = Dataset(np.array([[0.0], [1.0]]), [0, 1], ["normal", "s1"])
    tr, _ = standardize(ds)
    with pytest.raises(ContractViolationError):
        standardize(tr)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_standardized_train_in_unit_box(seed):
    ds = synthesize_cert_like(SynthSpec(samples_per_class=(50, 5, 3), feature_dim=4, seed=seed))
    tr, _ = standardize(ds)
    assert tr.features.min() >= -1.0 and tr.features.max() <= 1.0
    assert np.allclose(tr.scaler.inverse_transform(tr.features), ds.features)


# ---- synth


def test_synth_exact_counts_and_determinism():
    spec = SynthSpec(samples_per_class=(5000, 60, 50, 40), seed=11)
    a = synthesize_cert_like(spec)
    b = synthesize_cert_like(spec)
    assert a.n_samples == 5150
    assert a.class_counts().tolist() == [5000, 60, 50, 40]
    assert np.array_equal(a.features, b.features) and np.array_equal(a.labels, b.labels)


def test_synth_spec_validation():
    with pytest.raises(InvalidHyperparameterError):
        SynthSpec(samples_per_class=(10, 20))
    with pytest.raises(InvalidHyperparameterError):
        SynthSpec(feature_dim=1)


# ---- partition


def _cert42(seed=0):
    return synthesize_cert_like(SynthSpec(samples_per_class=(5000, 60, 50, 40), seed=seed))


def test_partition_cert42_like():
    ds = _cert42()
    clients = partition_non_iid(ds, 3, np.random.default_rng(0))
    n_normal = 5000
    for k, c in enumerate(clients):
        assert c.local_classes == {0, k + 1}
        assert abs(int(np.sum(c.labels == 0)) - n_normal / 3) <= 1
    assert sum(c.n_samples for c in clients) == ds.n_samples


def test_partition_cert52_like():
    ds = synthesize_cert_like(SynthSpec(samples_per_class=(3000, 10, 8, 6, 4, 2), seed=1))
    clients = partition_non_iid(ds, 5, np.random.default_rng(0))
    assert [c.local_classes - {0} for c in clients] == [{1}, {2}, {3}, {4}, {5}]


def test_partition_single_client():
    ds = _cert42()
    (only,) = partition_non_iid(ds, 1, np.random.default_rng(0))
    assert only.n_samples == ds.n_samples
    assert np.array_equal(only.class_counts(), ds.class_counts())


def test_partition_errors():
    ds = _cert42()
    with pytest.raises(ConfigError):
        partition_non_iid(ds, 0, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        partition_non_iid(ds, 4, np.random.default_rng(0))
    clients = partition_non_iid(ds, 4, np.random.default_rng(0), assignment=[[1], [2], [3], []])
    assert clients[3].local_classes == {0}


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 5), st.integers(0, 1000))
def test_partition_is_true_partition(k, seed):
    ds = synthesize_cert_like(SynthSpec(samples_per_class=(200, 9, 8, 7, 6, 5), feature_dim=3, seed=seed))
    clients = partition_non_iid(ds, k, np.random.default_rng(seed))
    rows = np.vstack([c.features for c in clients])
    assert len(rows) == ds.n_samples
    # rows are unique almost surely, so row-set equality is disjoint + exhaustive
    assert len({r.tobytes() for r in rows}) == ds.n_samples
    assert {r.tobytes() for r in rows} == {r.tobytes() for r in ds.features}
    for s in range(1, ds.num_classes):
        assert sum(s in c.local_classes for c in clients) == 1
    assert all(0 in c.local_classes for c in clients)


# ---- split


def test_split_fraction():
    labels = np.repeat(np.arange(3), 100)
    ds = Dataset(np.random.default_rng(0).standard_normal((300, 2)), labels, ["normal", "a", "b"])
    tr, te = train_test_split(ds, 0.2, np.random.default_rng(5))
    assert te.class_counts().tolist() == [20, 20, 20]
    tr2, te2 = train_test_split(ds, 0.2, np.random.default_rng(5))
    assert np.array_equal(te.features, te2.features)


def test_split_round_half_up():
    ds = Dataset(np.zeros((55, 1)), [0] * 50 + [1] * 5, ["normal", "a"])
    tr, te = train_test_split(ds, 0.2, np.random.default_rng(0))
    assert te.class_counts().tolist() == [10, 1]
    assert tr.class_counts().tolist() == [40, 4]


def test_split_singleton_class_warns():
    ds = Dataset(np.zeros((11, 1)), [0] * 10 + [1], ["normal", "a"])
    with pytest.warns(UserWarning):
        tr, te = train_test_split(ds, 0.3, np.random.default_rng(0))
    assert tr.class_counts()[1] == 1 and te.class_counts()[1] == 0
