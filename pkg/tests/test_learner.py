import numpy as np
import pytest

from acta.eeg import FeatureVector
from acta.errors import ClassImbalanceFatal, DimensionMismatch, EmptyDataset
from acta.learner import (
    AttentionModel,
    Dataset,
    DatasetRecord,
    RecordOrigin,
    RetrainPolicy,
    evaluate,
    loss_and_grad,
    predict,
    retrain_schedule,
    semi_supervised_update,
    train,
)
from acta.protocol import AttentionLabel, FeedbackEvent, FeedbackKind, Rationale


def make_dataset(x, y, origin=RecordOrigin.PHASE1):
    data = Dataset("p1", feature_names=tuple(f"f{i}" for i in range(x.shape[1])))
    for xi, yi in zip(x, y):
        data.append(
            DatasetRecord(
                features=np.asarray(xi, dtype=float),
                label=AttentionLabel.ATTENTION if yi else AttentionLabel.NON_ATTENTION,
                origin=origin,
            )
        )
    return data


def separable_dataset(rng, n=100, d=4, gap=6.0):
    x0 = rng.normal(0.0, 1.0, (n // 2, d))
    x1 = rng.normal(gap, 1.0, (n - n // 2, d))
    x = np.vstack([x0, x1])
    y = np.concatenate([np.zeros(n // 2), np.ones(n - n // 2)])
    return make_dataset(x, y)


# ---------------------------------------------------------------- training

def test_train_separable_perfect_accuracy(rng):
    data = separable_dataset(rng)
    model = train(data)
    report = evaluate(model, data)
    assert report.accuracy == 1.0


def test_train_shuffled_labels_chance_accuracy(rng):
    x = rng.normal(0, 1, (500, 10))
    y = rng.integers(0, 2, 500)
    data = make_dataset(x, y)
    model = train(data)
    report = evaluate(model, data)
    assert report.accuracy == pytest.approx(0.5, abs=0.1)


def test_gradient_matches_central_differences(rng):
    x = rng.normal(0, 1, (40, 5))
    y = rng.integers(0, 2, 40).astype(float)
    sw = np.where(y == 1.0, 1.2, 0.8)
    l2 = 1e-3
    eps = 1e-6
    for _ in range(10):
        w = rng.normal(0, 1, 5)
        b = float(rng.normal())
        _, gw, gb = loss_and_grad(w, b, x, y, sw, l2)
        for k in range(5):
            wp, wm = w.copy(), w.copy()
            wp[k] += eps
            wm[k] -= eps
            lp, _, _ = loss_and_grad(wp, b, x, y, sw, l2)
            lm, _, _ = loss_and_grad(wm, b, x, y, sw, l2)
            fd = (lp - lm) / (2 * eps)
            assert gw[k] == pytest.approx(fd, rel=1e-5, abs=1e-10)
        lp, _, _ = loss_and_grad(w, b + eps, x, y, sw, l2)
        lm, _, _ = loss_and_grad(w, b - eps, x, y, sw, l2)
        assert gb == pytest.approx((lp - lm) / (2 * eps), rel=1e-5, abs=1e-10)


def test_loss_non_increasing(rng):
    for gap in (0.0, 2.0, 6.0):
        data = separable_dataset(rng, n=80, gap=gap)
        model = train(data, step_size=0.1)
        losses = model.training_meta["loss_history"]
        assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_train_missing_class_fatal(rng):
    x = rng.normal(0, 1, (30, 3))
    data = make_dataset(x, np.ones(30))
    with pytest.raises(ClassImbalanceFatal):
        train(data)


def test_train_thin_class_fatal(rng):
    x = rng.normal(0, 1, (30, 3))
    y = np.concatenate([np.ones(25), np.zeros(5)])
    with pytest.raises(ClassImbalanceFatal):
        train(make_dataset(x, y))


def test_constant_feature_gets_zero_weight(rng):
    x = rng.normal(0, 1, (60, 4))
    x[:, 2] = 7.0
    y = (x[:, 0] > 0).astype(float)
    model = train(make_dataset(x, y))
    assert model.weights[2] == 0.0
    assert model.constant_mask[2]
    assert model.norm_std[2] == 1.0


def test_train_deterministic(rng):
    x = rng.normal(0, 1, (80, 6))
    y = rng.integers(0, 2, 80)
    m1 = train(make_dataset(x, y), seed=5)
    m2 = train(make_dataset(x, y), seed=5)
    np.testing.assert_array_equal(m1.weights, m2.weights)
    assert m1.bias == m2.bias


# ---------------------------------------------------------------- predict

def _identity_model(d=3, weights=None, bias=0.0):
    return AttentionModel(
        weights=np.zeros(d) if weights is None else np.asarray(weights, dtype=float),
        bias=bias,
        norm_mean=np.zeros(d),
        norm_std=np.ones(d),
        constant_mask=np.zeros(d, dtype=bool),
    )


def test_predict_tie_goes_to_non_attention():
    model = _identity_model()
    label, conf = predict(model, FeatureVector(np.zeros(3), 0.0))
    assert conf == 0.5
    assert label is AttentionLabel.NON_ATTENTION


def test_predict_sigmoid_symmetry(rng):
    w = rng.normal(0, 1, 4)
    m_pos = _identity_model(4, weights=w, bias=0.3)
    m_neg = _identity_model(4, weights=-w, bias=-0.3)
    for _ in range(20):
        fv = FeatureVector(rng.normal(0, 2, 4), 0.0)
        _, cp = predict(m_pos, fv)
        _, cn = predict(m_neg, fv)
        assert cp + cn == pytest.approx(1.0, abs=1e-12)


def test_predict_dimension_mismatch():
    model = _identity_model(3)
    with pytest.raises(DimensionMismatch):
        predict(model, FeatureVector(np.zeros(5), 0.0))


def test_predict_matches_eval_counts(rng):
    data = separable_dataset(rng, n=60, gap=1.0)
    model = train(data)
    report = evaluate(model, data)
    pos = sum(
        1 for r in data.records if predict(model, r.features)[0] is AttentionLabel.ATTENTION
    )
    assert pos == report.tp + report.fp
    assert report.n == len(data)


def test_predict_invariant_to_feature_rescaling(rng):
    x = rng.normal(0, 1, (80, 5))
    y = (x[:, 1] + 0.3 * rng.normal(0, 1, 80) > 0).astype(float)
    scaled = x.copy()
    scaled[:, 1] *= 37.5
    m_raw = train(make_dataset(x, y))
    m_scaled = train(make_dataset(scaled, y))
    probes = rng.normal(0, 1, (30, 5))
    for p in probes:
        q = p.copy()
        q[1] *= 37.5
        assert predict(m_raw, FeatureVector(p, 0.0))[0] is predict(
            m_scaled, FeatureVector(q, 0.0)
        )[0]


# ---------------------------------------------------------------- evaluate

def test_evaluate_empty_dataset():
    with pytest.raises(EmptyDataset):
        evaluate(_identity_model(), Dataset("p"))


def test_evaluate_order_independent(rng):
    data = separable_dataset(rng, n=40, gap=1.5)
    model = train(data)
    a = evaluate(model, data)
    reversed_data = Dataset("p", data.feature_names, records=list(reversed(data.records)))
    b = evaluate(model, reversed_data)
    assert a == b


# ---------------------------------------------------------------- updates

def _fv(values, ts=1.0):
    return FeatureVector(np.asarray(values, dtype=float), ts)


def test_semi_supervised_appends_on_encourage(rng):
    data = separable_dataset(rng, n=30, gap=2.0)
    n0 = len(data)
    event = FeedbackEvent(1.0, FeedbackKind.NFB_ENCOURAGE, "lm1", Rationale.CASE_A)
    out = semi_supervised_update(data, _fv(np.zeros(4)), event)
    assert len(out) == n0 + 1
    assert out.records[-1].label is AttentionLabel.ATTENTION
    assert out.records[-1].origin is RecordOrigin.SEMI_SUPERVISED


def test_semi_supervised_reinforce_label(rng):
    data = separable_dataset(rng, n=30, gap=2.0)
    event = FeedbackEvent(1.0, FeedbackKind.NFB_REINFORCE, "nr1", Rationale.CASE_B)
    out = semi_supervised_update(data, _fv(np.zeros(4)), event)
    assert out.records[-1].label is AttentionLabel.NON_ATTENTION


def test_semi_supervised_ignores_other_events(rng):
    data = separable_dataset(rng, n=30, gap=2.0)
    n0 = len(data)
    for kind in (FeedbackKind.NOOP, FeedbackKind.NUDGE, FeedbackKind.REWARD):
        out = semi_supervised_update(data, _fv(np.zeros(4)), FeedbackEvent(1.0, kind))
        assert len(out) == n0


def test_semi_supervised_append_only(rng):
    data = separable_dataset(rng, n=30, gap=2.0)
    before = list(data.records)
    event = FeedbackEvent(1.0, FeedbackKind.NFB_ENCOURAGE, "lm1", Rationale.CASE_A)
    out = semi_supervised_update(data, _fv(np.zeros(4)), event)
    assert out.records[: len(before)] == before


def test_semi_supervised_dimension_mismatch(rng):
    data = separable_dataset(rng, n=30, gap=2.0)
    event = FeedbackEvent(1.0, FeedbackKind.NFB_ENCOURAGE, "lm1", Rationale.CASE_A)
    with pytest.raises(DimensionMismatch):
        semi_supervised_update(data, _fv(np.zeros(9)), event)


# ---------------------------------------------------------------- retrain

def _with_semi(data, k):
    event = FeedbackEvent(1.0, FeedbackKind.NFB_ENCOURAGE, "lm1", Rationale.CASE_A)
    for _ in range(k):
        semi_supervised_update(data, _fv(np.zeros(data.n_features())), event)
    return data


def test_retrain_below_threshold(rng):
    data = separable_dataset(rng, n=40, gap=2.0)
    train(data)
    _with_semi(data, 49)
    assert retrain_schedule(data, between_sessions=True) is False


def test_retrain_at_threshold_between_sessions(rng):
    data = separable_dataset(rng, n=40, gap=2.0)
    train(data)
    _with_semi(data, 50)
    assert retrain_schedule(data, between_sessions=True) is True


def test_retrain_never_mid_session(rng):
    data = separable_dataset(rng, n=40, gap=2.0)
    train(data)
    _with_semi(data, 50)
    assert retrain_schedule(data, between_sessions=False) is False


def test_retrain_custom_policy(rng):
    data = separable_dataset(rng, n=40, gap=2.0)
    train(data)
    _with_semi(data, 5)
    assert retrain_schedule(data, RetrainPolicy(min_new_records=5), between_sessions=True)
