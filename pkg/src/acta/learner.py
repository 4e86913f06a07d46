"""Binary attention classifier: dataset store, regularized logistic training,
prediction, evaluation and the semi-supervised updates fed by closed-loop
agreement cases.

The model is a z-scored logistic regressor fit by full-batch gradient descent
with inverse-frequency class weights; per-feature weights keep it explainable
and it hides behind plain functions so other model families can slot in.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import expit

from .errors import ClassImbalanceFatal, DimensionMismatch, EmptyDataset
from .protocol import AttentionLabel, FeedbackKind

DEFAULT_EPOCHS = 400
DEFAULT_STEP_SIZE = 0.1
DEFAULT_L2 = 1e-3
MIN_RECORDS_PER_CLASS = 10


class RecordOrigin(Enum):
    PHASE1 = "phase1"
    SEMI_SUPERVISED = "semi_supervised"


@dataclass(frozen=True)
class DatasetRecord:
    features: np.ndarray
    label: AttentionLabel
    origin: RecordOrigin
    ts: float = 0.0


@dataclass
class Dataset:
    participant_id: str
    feature_names: tuple = ()
    records: list = field(default_factory=list)
    trained_watermark: int = 0  # records before this index are already trained on

    def append(self, record):
        if self.records and record.features.shape != self.records[0].features.shape:
            raise DimensionMismatch(
                f"record has {record.features.shape[0]} features, "
                f"dataset has {self.records[0].features.shape[0]}"
            )
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def n_features(self):
        return self.records[0].features.shape[0] if self.records else len(self.feature_names)

    def matrices(self):
        x = np.stack([r.features for r in self.records])
        y = np.array([1.0 if r.label is AttentionLabel.ATTENTION else 0.0 for r in self.records])
        return x, y

    def class_counts(self):
        pos = sum(1 for r in self.records if r.label is AttentionLabel.ATTENTION)
        return pos, len(self.records) - pos

    def mark_trained(self):
        self.trained_watermark = len(self.records)

    def new_semi_supervised_count(self):
        return sum(
            1
            for r in self.records[self.trained_watermark :]
            if r.origin is RecordOrigin.SEMI_SUPERVISED
        )


@dataclass(frozen=True)
class AttentionModel:
    weights: np.ndarray
    bias: float
    norm_mean: np.ndarray
    norm_std: np.ndarray  # 1.0 where the feature was constant
    constant_mask: np.ndarray
    feature_names: tuple = ()
    training_meta: dict = field(default_factory=dict)

    def n_features(self):
        return self.weights.shape[0]


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class RetrainPolicy:
    min_new_records: int = 50


def loss_and_grad(weights, bias, x, y, sample_weights, l2):
    """Weighted cross-entropy with L2 on the weights; returns (loss, gw, gb)."""
    z = x @ weights + bias
    # log(1 + e^z) - y z, numerically stable for large |z|
    ce = np.logaddexp(0.0, z) - y * z
    loss = float(np.mean(sample_weights * ce) + 0.5 * l2 * np.dot(weights, weights))
    p = expit(z)
    resid = sample_weights * (p - y) / x.shape[0]
    grad_w = x.T @ resid + l2 * weights
    grad_b = float(np.sum(resid))
    return loss, grad_w, grad_b


def _normalize(x):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std == 0.0
    std = np.where(constant, 1.0, std)
    return (x - mean) / std, mean, std, constant


def train(data, epochs=DEFAULT_EPOCHS, step_size=DEFAULT_STEP_SIZE, seed=0, l2=DEFAULT_L2):
    """Fit the logistic attention model by full-batch gradient descent."""
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    pos, neg = data.class_counts()
    if pos < MIN_RECORDS_PER_CLASS or neg < MIN_RECORDS_PER_CLASS:
        raise ClassImbalanceFatal(
            f"need >= {MIN_RECORDS_PER_CLASS} records per class, got {pos}/{neg}"
        )
    x_raw, y = data.matrices()
    x, mean, std, constant = _normalize(x_raw)
    n = x.shape[0]
    sample_weights = np.where(y == 1.0, n / (2.0 * pos), n / (2.0 * neg))
    weights = np.zeros(x.shape[1])
    bias = 0.0
    losses = []
    for _ in range(epochs):
        loss, gw, gb = loss_and_grad(weights, bias, x, y, sample_weights, l2)
        losses.append(loss)
        weights = weights - step_size * gw
        bias = bias - step_size * gb
    weights = np.where(constant, 0.0, weights)
    final_loss, _, _ = loss_and_grad(weights, bias, x, y, sample_weights, l2)
    data.mark_trained()
    return AttentionModel(
        weights=weights,
        bias=bias,
        norm_mean=mean,
        norm_std=std,
        constant_mask=constant,
        feature_names=tuple(data.feature_names),
        training_meta={
            "epochs": epochs,
            "step_size": step_size,
            "seed": seed,
            "l2": l2,
            "final_loss": final_loss,
            "loss_history": losses,
            "n_records": n,
        },
    )


def predict(model, fv):
    """(label, confidence) for one feature vector; ties go to non-attention."""
    values = fv.values if hasattr(fv, "values") else np.asarray(fv, dtype=float)
    if values.shape[0] != model.n_features():
        raise DimensionMismatch(
            f"feature vector has {values.shape[0]} values, model expects {model.n_features()}"
        )
    z = (values - model.norm_mean) / model.norm_std
    confidence = float(expit(np.dot(model.weights, z) + model.bias))
    label = AttentionLabel.ATTENTION if confidence > 0.5 else AttentionLabel.NON_ATTENTION
    return label, confidence


def evaluate(model, data):
    """Confusion-matrix accounting of the model over a dataset."""
    if len(data) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    tp = fp = tn = fn = 0
    for r in data.records:
        label, _ = predict(model, r.features)
        if r.label is AttentionLabel.ATTENTION:
            if label is AttentionLabel.ATTENTION:
                tp += 1
            else:
                fn += 1
        elif label is AttentionLabel.ATTENTION:
            fp += 1
        else:
            tn += 1
    n = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return EvalReport(
        accuracy=(tp + tn) / n, precision=precision, recall=recall, tp=tp, fp=fp, tn=tn, fn=fn
    )


def semi_supervised_update(data, fv, event):
    """Append an agreement-case record; any other event leaves data as is."""
    if event.kind is FeedbackKind.NFB_ENCOURAGE:
        label = AttentionLabel.ATTENTION
    elif event.kind is FeedbackKind.NFB_REINFORCE:
        label = AttentionLabel.NON_ATTENTION
    else:
        return data
    if len(data) and fv.values.shape[0] != data.n_features():
        raise DimensionMismatch("feature vector does not match dataset dimensionality")
    data.append(
        DatasetRecord(
            features=np.array(fv.values, dtype=float),
            label=label,
            origin=RecordOrigin.SEMI_SUPERVISED,
            ts=fv.ts,
        )
    )
    return data


def retrain_schedule(data, policy=RetrainPolicy(), between_sessions=False):
    """Retrain only between sessions, once enough new labels accumulated."""
    if not between_sessions:
        return False
    return data.new_semi_supervised_count() >= policy.min_new_records
