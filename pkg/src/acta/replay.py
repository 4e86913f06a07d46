"""Replay: rebuild every derived record (window labels, classifier outputs,
metric series, eval, behavioral report) from a log's raw streams and compare
against what the run recorded, byte for byte.

A log is self-contained: it carries the route, the configs and the seeds, so
replay needs no scenario file.
"""

from dataclasses import dataclass, field
from types import SimpleNamespace

from .eeg import EegConfig
from .geo import GeoPoint, PathSpec, Place, PlaceKind, Trajectory
from .netmetrics import metric_series
from .learner import Dataset, DatasetRecord, RecordOrigin, evaluate, predict
from .protocol import AttentionLabel
from .runner import (
    EegAssembler,
    behavior_record,
    behavioral_from_streams,
    classify_window_statuses,
    clf_record,
    derive_seed,
    eval_record,
    metrics_record,
    window_features,
    window_record,
)
from .sessionlog import SessionLogReader, fmt6, render_record, unqstr
from .store import model_from_fields


@dataclass
class ReplayReport:
    ok: bool
    sessions: dict = field(default_factory=dict)  # index -> list of mismatch strings
    summaries: dict = field(default_factory=dict)  # index -> {record name: count}


def _rebuild_path(reader):
    places = {"landmarks": [], "non_relevant": [], "start": None, "destination": None}
    for f in reader.select("place"):
        place = Place(
            id=unqstr(f["id"]),
            kind=PlaceKind(f["kind"]),
            center=GeoPoint(float(f["lat"]), float(f["lon"])),
            radius_m=float(f["radius"]),
            index=int(f["index"]),
        )
        if place.kind is PlaceKind.LANDMARK:
            places["landmarks"].append(place)
        elif place.kind is PlaceKind.NON_RELEVANT:
            places["non_relevant"].append(place)
        elif place.kind is PlaceKind.START:
            places["start"] = place
        else:
            places["destination"] = place
    poly = reader.select("polyline")[0]
    polyline = tuple(
        GeoPoint(float(lat), float(lon))
        for lat, lon in (pt.split(":") for pt in poly["pts"].split(";"))
    )
    places["landmarks"].sort(key=lambda p: p.index)
    return PathSpec(
        unqstr(poly["id"]), places["start"], places["destination"],
        tuple(places["landmarks"]), tuple(places["non_relevant"]), polyline,
    )


def _header(reader):
    head = {}
    head["log"] = reader.select("acta-log")[0]
    head["seeds"] = {f["name"]: int(f["value"]) for f in reader.select("seed")}
    eeg = reader.select("eegcfg")[0]
    head["eeg"] = EegConfig(
        channels=tuple(eeg["channels"].split(",")),
        fs_hz=float(eeg["fs"]),
        window_s=float(eeg["window_s"]),
        overlap=float(eeg["overlap"]),
    )
    head["metrics"] = reader.select("metricscfg")[0]
    head["learner"] = reader.select("learnercfg")[0]
    head["sensors"] = reader.select("sensorcfg")[0]
    return head


def _session_streams(records, reader, head):
    """Raw per-sensor streams for one session's records."""
    eeg_cfg = head["eeg"]
    gps = []
    accel = []
    assembler = EegAssembler(
        len(eeg_cfg.channels), eeg_cfg.fs_hz, eeg_cfg.window_samples, eeg_cfg.hop_samples,
        int(head["sensors"]["eeg_batch"]),
    )
    accel_rate = float(head["sensors"]["accel_rate"])
    model = None
    disturbances = []
    logged = {"window": [], "clf": [], "metrics": [], "metricgap": [], "eval": [],
              "behavior": []}
    for name, f in records:
        if name == "msg":
            corrected = float(f["corrected_ts"])
            if f["kind"] == "gps":
                lat, lon = f["payload"].split(";")[0].split(",")
                gps.append((corrected, GeoPoint(float(lat), float(lon))))
            elif f["kind"] == "accel":
                values = [float(v) for v in f["payload"].split(";")]
                for i, v in enumerate(values):
                    accel.append((round(corrected + i / accel_rate, 6), v))
            elif f["kind"] == "eeg":
                _, offset, count = f["payload"].split(":")
                flat = reader.sidecar(int(offset), int(count))
                n = int(f["n"])
                payload = flat.reshape(len(eeg_cfg.channels), n)
                msg = SimpleNamespace(seq=int(f["seq"]), payload=payload)
                assembler.ingest(msg, corrected)
        elif name == "model":
            model = model_from_fields(f)
        elif name == "disturbance":
            ack = None if f["ack"] == "na" else float(f["ack"])
            disturbances.append((f["id"], float(f["ts"]), ack))
        elif name in logged:
            logged[name].append(render_record(name, list(f.items())))
    assembler.finalize()
    return gps, accel, assembler.windows, model, disturbances, logged


def replay(log_path):
    """Recompute all derived records; every mismatch is reported."""
    reader = SessionLogReader(log_path)
    head = _header(reader)
    path = _rebuild_path(reader)
    eeg_cfg = head["eeg"]
    feature_source = head["learner"]["feature_source"]
    metrics_threshold = float(head["metrics"]["threshold"])
    metrics_enabled = head["metrics"]["enabled"] == "1"
    rewires = int(head["metrics"]["rewires"])

    report = ReplayReport(ok=True)
    for k, records in reader.sessions().items():
        mismatches = []
        gps, accel, windows, model, disturbances, logged = _session_streams(
            records, reader, head
        )
        recomputed = {"window": [], "clf": [], "metrics": [], "metricgap": [],
                      "eval": [], "behavior": []}
        if len(gps) >= 2:
            traj = Trajectory(tuple(gps))
            statuses = classify_window_statuses(windows, traj, path)
            for win, status in statuses:
                recomputed["window"].append(
                    render_record("window", window_record(win.start_ts, status))
                )
            if model is not None:
                eval_data = Dataset("replay", feature_names=())
                for win, status in statuses:
                    if status == "dropped":
                        continue
                    fv = window_features(win, eeg_cfg, feature_source, metrics_threshold)
                    eval_data.append(DatasetRecord(
                        features=fv.values, label=AttentionLabel(status),
                        origin=RecordOrigin.PHASE1, ts=win.start_ts,
                    ))
                if len(eval_data):
                    recomputed["eval"].append(
                        render_record("eval", eval_record(evaluate(model, eval_data)))
                    )
            behavior = behavioral_from_streams(traj, path, accel, disturbances)
            recomputed["behavior"].append(
                render_record("behavior", behavior_record(behavior))
            )
        if model is not None:
            for win in windows:
                fv = window_features(win, eeg_cfg, feature_source, metrics_threshold)
                label, confidence = predict(model, fv)
                recomputed["clf"].append(
                    render_record("clf", clf_record(win.start_ts, label, confidence))
                )
        if metrics_enabled and windows:
            series = metric_series(
                windows, metrics_threshold, seed=derive_seed(head["seeds"]["metrics"], k),
                node_labels=eeg_cfg.channels, rewires=rewires,
            )
            from .sessionlog import qstr

            for ts, reason in series.gaps:
                recomputed["metricgap"].append(
                    render_record("metricgap", [("ts", fmt6(ts)), ("reason", qstr(reason))])
                )
            for row in series.rows:
                recomputed["metrics"].append(render_record("metrics", metrics_record(row)))

        for name in recomputed:
            if recomputed[name] != logged[name]:
                mismatches.append(
                    f"{name}: recomputed {len(recomputed[name])} records, "
                    f"logged {len(logged[name])}, first divergence: "
                    f"{_first_divergence(recomputed[name], logged[name])}"
                )
        report.sessions[k] = mismatches
        report.summaries[k] = {name: len(v) for name, v in logged.items()}
        if mismatches:
            report.ok = False
    return report


def _first_divergence(a, b):
    for x, y in zip(a, b):
        if x != y:
            return f"'{x}' vs '{y}'"
    return "length difference"


def report_text(log_path, rep=None):
    """Human-readable replay report."""
    rep = rep or replay(log_path)
    reader = SessionLogReader(log_path)
    head = reader.select("acta-log")[0]
    lines = [
        f"log: {log_path}",
        f"scenario: {head['scenario']}  seed set: {head['seedset']}  phase: {head['phase']}",
        f"replay verification: {'OK' if rep.ok else 'MISMATCH'}",
        "",
    ]
    sessions = reader.sessions()
    for k in sorted(sessions):
        lines.append(f"session {k}:")
        for name, f in sessions[k]:
            if name == "behavior":
                lines.append(
                    f"  deviation {f['deviation_m']} m, peak speed {f['peak_speed_mps']} m/s, "
                    f"steps {f['steps']}, completion {f['completion']}"
                )
            elif name == "eval":
                lines.append(
                    f"  classifier: n={f['n']} accuracy={f['accuracy']} "
                    f"precision={f['precision']} recall={f['recall']}"
                )
        counts = {}
        for name, f in sessions[k]:
            counts[name] = counts.get(name, 0) + 1
        lines.append(
            f"  records: {counts.get('msg', 0)} telemetry, {counts.get('event', 0)} events, "
            f"{counts.get('metrics', 0)} metric rows, {counts.get('window', 0)} windows"
        )
        for m in rep.sessions.get(k, []):
            lines.append(f"  MISMATCH {m}")
        lines.append("")
    return "\n".join(lines) + "\n"
