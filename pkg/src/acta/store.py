"""Text persistence for trained models and labeled datasets.

Floats are written with repr() so reloading reproduces bit-identical values;
the wire/log 6-decimal rendering is only for stream records.
"""

import numpy as np

from .errors import CorruptLog
from .learner import AttentionModel, Dataset, DatasetRecord, RecordOrigin
from .protocol import AttentionLabel

MODEL_MAGIC = "acta-model"
DATASET_MAGIC = "acta-dataset"
FORMAT_VERSION = 1


def _floats_csv(arr):
    return ",".join(repr(float(v)) for v in arr)


def _parse_floats(s):
    return np.array([float(v) for v in s.split(",")], dtype=float) if s else np.array([])


def model_fields(model):
    """Single-record embedding of a model (used in session logs)."""
    meta = model.training_meta
    return [
        ("features", ",".join(model.feature_names)),
        ("weights", _floats_csv(model.weights)),
        ("bias", repr(float(model.bias))),
        ("mean", _floats_csv(model.norm_mean)),
        ("std", _floats_csv(model.norm_std)),
        ("constant", ",".join("1" if c else "0" for c in model.constant_mask)),
        ("epochs", str(meta.get("epochs", 0))),
        ("step_size", repr(float(meta.get("step_size", 0.0)))),
        ("l2", repr(float(meta.get("l2", 0.0)))),
        ("final_loss", repr(float(meta.get("final_loss", 0.0)))),
        ("n_records", str(meta.get("n_records", 0))),
    ]


def model_from_fields(fields):
    return AttentionModel(
        weights=_parse_floats(fields["weights"]),
        bias=float(fields["bias"]),
        norm_mean=_parse_floats(fields["mean"]),
        norm_std=_parse_floats(fields["std"]),
        constant_mask=np.array([c == "1" for c in fields["constant"].split(",")])
        if fields["constant"]
        else np.array([], dtype=bool),
        feature_names=tuple(fields["features"].split(",")) if fields["features"] else (),
        training_meta={
            "epochs": int(fields.get("epochs", 0)),
            "step_size": float(fields.get("step_size", 0.0)),
            "l2": float(fields.get("l2", 0.0)),
            "final_loss": float(fields.get("final_loss", 0.0)),
            "n_records": int(fields.get("n_records", 0)),
        },
    )


def save_model(model, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{MODEL_MAGIC} {FORMAT_VERSION}\n")
        for key, value in model_fields(model):
            fh.write(f"{key} {value}\n")


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(MODEL_MAGIC):
        raise CorruptLog(f"{path} is not a model file")
    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition(" ")
        fields[key] = value
    return model_from_fields(fields)


def save_dataset(dataset, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{DATASET_MAGIC} {FORMAT_VERSION}\n")
        fh.write(f"participant {dataset.participant_id}\n")
        fh.write(f"features {','.join(dataset.feature_names)}\n")
        for r in dataset.records:
            fh.write(
                f"record ts={repr(float(r.ts))} label={r.label.value} "
                f"origin={r.origin.value} values={_floats_csv(r.features)}\n"
            )


def load_dataset(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith(DATASET_MAGIC):
        raise CorruptLog(f"{path} is not a dataset file")
    participant = lines[1].partition(" ")[2]
    feature_names = tuple(n for n in lines[2].partition(" ")[2].split(",") if n)
    data = Dataset(participant, feature_names=feature_names)
    for line in lines[3:]:
        if not line.startswith("record "):
            continue
        fields = {}
        for part in line.split(" ")[1:]:
            k, _, v = part.partition("=")
            fields[k] = v
        data.append(
            DatasetRecord(
                features=_parse_floats(fields["values"]),
                label=AttentionLabel(fields["label"]),
                origin=RecordOrigin(fields["origin"]),
                ts=float(fields["ts"]),
            )
        )
    return data


def dataset_from_windows(participant_id, windows, config):
    """Build a phase-1 dataset from labeled windows."""
    from .eeg import extract_features, feature_names

    data = Dataset(participant_id, feature_names=feature_names(config))
    for w in windows:
        fv = extract_features(w, config)
        data.append(
            DatasetRecord(
                features=fv.values, label=w.label, origin=RecordOrigin.PHASE1, ts=w.start_ts
            )
        )
    return data
