import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import fedat.federation as fed
from fedat.data import SynthSpec, standardize, synthesize_cert_like, train_test_split
from fedat.errors import AggregationError, DivergenceError, InvalidHyperparameterError, ProtocolError
from fedat.federation import (
    AugmentConfig,
    FedConfig,
    GanConfig,
    fedavg_aggregate,
    fedprox_local_loss,
    run_federation,
)
from fedat.nn import ModelWeights


def _w(*vals):
    return ModelWeights([(np.array([[v]], dtype=np.float64), np.array([v], dtype=np.float64)) for v in vals])


def small_problem(seed=0, counts=(400, 30, 25, 20), separation=2.0):
    ds = synthesize_cert_like(SynthSpec(samples_per_class=counts, feature_dim=6, separation=separation, seed=seed))
    tr, te = train_test_split(ds, 0.2, np.random.default_rng(seed))
    tr, (te,) = standardize(tr, [te])
    return tr, te


def _log(result):
    return [(r.round, r.precision, r.recall, r.f1, r.mean_train_loss) for r in result.reports]


# ---- aggregation


def test_fedavg_oracle():
    out = fedavg_aggregate([(_w(0.0), 1), (_w(4.0), 3)])
    assert out.layers[0][0][0, 0] == 3.0 and out.layers[0][1][0] == 3.0


def test_fedavg_identical_updates_bit_exact():
    w = ModelWeights([(np.random.default_rng(0).standard_normal((5, 3)), np.random.default_rng(1).standard_normal(3))])
    out = fedavg_aggregate([(w.copy(), 7), (w.copy(), 3), (w.copy(), 11)])
    assert out.bit_equal(w)


def test_fedavg_single_client_identity():
    w = _w(0.123456789, -2.5)
    assert fedavg_aggregate([(w, 42)]).bit_equal(w)


def test_fedavg_errors():
    with pytest.raises(ProtocolError):
        fedavg_aggregate([])
    with pytest.raises(AggregationError):
        fedavg_aggregate([(_w(1.0), 0)])
    with pytest.raises(AggregationError):
        fedavg_aggregate([(_w(1.0), 1), (_w(1.0, 2.0), 1)])


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(st.floats(-100, 100, allow_nan=False), st.integers(1, 1000)),
        min_size=1,
        max_size=6,
    )
)
def test_fedavg_matches_weighted_mean(pairs):
    out = fedavg_aggregate([(_w(v), n) for v, n in pairs])
    want = sum(v * n for v, n in pairs) / sum(n for _, n in pairs)
    assert out.layers[0][0][0, 0] == pytest.approx(want, rel=1e-12, abs=1e-9)
    lo, hi = min(v for v, _ in pairs), max(v for v, _ in pairs)
    assert lo - 1e-9 <= out.layers[0][0][0, 0] <= hi + 1e-9


def test_prox_loss_values():
    assert fedprox_local_loss(1.0, _w(1.0), _w(1.0), 0.5) == 1.0
    # two parameters each off by 1 -> ||d||^2 = 2
    assert fedprox_local_loss(0.0, _w(2.0), _w(1.0), 0.5) == pytest.approx(0.5)
    assert fedprox_local_loss(0.7, _w(3.0), _w(-1.0), 0.0) == 0.7
    with pytest.raises(InvalidHyperparameterError):
        fedprox_local_loss(0.0, _w(1.0), _w(1.0), -1.0)


def test_config_validation():
    with pytest.raises(InvalidHyperparameterError):
        FedConfig(local_epochs=0)
    with pytest.raises(InvalidHyperparameterError):
        FedConfig(eta=0)
    with pytest.raises(ValueError):
        FedConfig(aggregator="fedsgd")
    with pytest.raises(InvalidHyperparameterError):
        GanConfig(epochs=-1)
    assert FedConfig(mu=0.3).prox_mu == 0.0
    assert FedConfig(mu=0.3, aggregator="fedprox").prox_mu == 0.3


# ---- full runs


def test_reports_per_round_and_aux_union():
    tr, te = small_problem()
    res = run_federation(FedConfig(rounds=3, mode="classical_fl"), tr, te, "snn_mlp", hidden=(8,))
    assert [r.round for r in res.reports] == [1, 2, 3]
    assert all(r.n_responders == 3 for r in res.reports)
    assert res.aux_labels == {0, 1, 2, 3}
    for r in res.reports:
        assert 0 <= r.precision <= 1 and 0 <= r.recall <= 1 and 0 <= r.f1 <= 1


def test_fedprox_mu_zero_equals_fedavg():
    tr, te = small_problem()
    a = run_federation(FedConfig(rounds=4, mode="classical_fl", aggregator="fedavg"), tr, te, hidden=(8,))
    b = run_federation(FedConfig(rounds=4, mode="classical_fl", aggregator="fedprox", mu=0.0), tr, te, hidden=(8,))
    assert _log(a) == _log(b)
    assert a.weights.bit_equal(b.weights)


def test_fedprox_positive_mu_changes_training():
    tr, te = small_problem()
    a = run_federation(FedConfig(rounds=2, mode="classical_fl", eta=0.05), tr, te, hidden=(8,))
    b = run_federation(FedConfig(rounds=2, mode="classical_fl", eta=0.05, aggregator="fedprox", mu=1.0), tr, te, hidden=(8,))
    assert not a.weights.bit_equal(b.weights)


def test_fedat_without_gan_epochs_equals_classical():
    tr, te = small_problem()
    a = run_federation(FedConfig(rounds=3, mode="classical_fl"), tr, te, hidden=(8,))
    b = run_federation(FedConfig(rounds=3, mode="fedat"), tr, te, hidden=(8,), gan_cfg=GanConfig(epochs=0, hidden=(8,)))
    assert _log(a) == _log(b)
    assert a.weights.bit_equal(b.weights)
    assert all(synth == 0 for *_, synth in b.augmentation)


def test_classical_never_touches_the_gan(monkeypatch):
    calls = []
    monkeypatch.setattr(fed, "train_acgan", lambda *a, **k: calls.append(a))
    tr, te = small_problem()
    run_federation(FedConfig(rounds=2, mode="classical_fl"), tr, te, hidden=(8,))
    assert calls == []
    run_federation(FedConfig(rounds=2, mode="fedat"), tr, te, hidden=(8,), gan_cfg=GanConfig(epochs=1, hidden=(8,)))
    assert len(calls) == 2 * 3


def test_run_is_deterministic():
    tr, te = small_problem()
    cfg = FedConfig(rounds=2, mode="fedat", seed=4)
    gan = GanConfig(epochs=2, hidden=(8,))
    aug = AugmentConfig("global_union", 5)
    a = run_federation(cfg, tr, te, hidden=(8,), gan_cfg=gan, aug=aug)
    b = run_federation(cfg, tr, te, hidden=(8,), gan_cfg=gan, aug=aug)
    assert _log(a) == _log(b) and a.weights.bit_equal(b.weights) and a.augmentation == b.augmentation


def test_global_union_synthesizes_absent_classes_after_first_round():
    tr, te = small_problem()
    res = run_federation(
        FedConfig(rounds=2, mode="fedat"),
        tr,
        te,
        hidden=(8,),
        gan_cfg=GanConfig(epochs=1, hidden=(8,)),
        aug=AugmentConfig("global_union", 7),
    )
    first = [row for row in res.augmentation if row[1] == 0]
    second = [row for row in res.augmentation if row[1] == 1]
    assert all(synth == 0 for *_, synth in first)  # aux set is empty before round 1 completes
    for client in range(3):
        rows = {cls_: (real, synth) for cid, _, cls_, real, synth in second if cid == client}
        assert rows[0][1] == 0  # normal class never augmented
        absent = [c for c, (real, _) in rows.items() if real == 0]
        assert len(absent) == 2 and all(rows[c][1] == 7 for c in absent)


def test_failing_client_is_excluded(monkeypatch, caplog):
    real_update = fed.client_update

    def flaky(state, *a, **k):
        if state.client_id == 1:
            raise DivergenceError("boom")
        return real_update(state, *a, **k)

    monkeypatch.setattr(fed, "client_update", flaky)
    tr, te = small_problem()
    res = run_federation(FedConfig(rounds=2, mode="classical_fl"), tr, te, hidden=(8,))
    assert all(r.n_responders == 2 for r in res.reports)
    assert 2 not in res.aux_labels  # client 1 held scenario 2 and never reported
    assert "excluded" in caplog.text


def test_all_clients_failing_is_a_protocol_error(monkeypatch):
    def broken(*a, **k):
        raise DivergenceError("boom")

    monkeypatch.setattr(fed, "client_update", broken)
    tr, te = small_problem()
    with pytest.raises(ProtocolError):
        run_federation(FedConfig(rounds=1, mode="classical_fl"), tr, te, hidden=(8,))


def test_identical_clients_match_single_client():
    # K copies of the same data with the same stream give the K=1 result
    tr, te = small_problem()
    cfg1 = FedConfig(n_clients=1, rounds=2, mode="classical_fl")
    one = run_federation(cfg1, tr, te, hidden=(8,))
    cen = run_federation(FedConfig(n_clients=1, rounds=2, mode="centralized"), tr, te, hidden=(8,))
    assert one.weights.bit_equal(cen.weights)


def test_centralized_uses_single_pooled_client():
    tr, te = small_problem()
    res = run_federation(FedConfig(n_clients=3, rounds=1, mode="centralized"), tr, te, hidden=(8,))
    assert res.reports[0].n_responders == 1 and res.aux_labels == {0, 1, 2, 3}


def test_more_clients_than_scenarios_needs_assignment():
    tr, te = small_problem()
    with pytest.raises(Exception, match="scenario|assignment"):
        run_federation(FedConfig(n_clients=5, rounds=1, mode="classical_fl"), tr, te, hidden=(8,))
    res = run_federation(
        FedConfig(n_clients=2, rounds=1, mode="classical_fl"), tr, te, hidden=(8,), assignment=[[1, 2], [3]]
    )
    assert res.reports[0].n_responders == 2
