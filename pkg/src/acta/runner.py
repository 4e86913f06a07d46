"""End-to-end session engine: composes the walker, EEG generator, telemetry
pipeline, protocol state machine and classifier into seeded phase-1/phase-2
runs, writes replayable session logs, and supports paced execution with
operator commands.

All derived records (behavior, window labels, metrics, classifier outputs,
eval) are computed from cloud-delivered, source-quantized streams, so
`replay` regenerates them byte-identically from the log alone.
"""

import json
import math
import queue
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import protocol as proto
from .eeg import EegWindow, extract_features, feature_names, generate_eeg, window_label
from .errors import CommandRejected, ModelMissing, ScenarioInvalid
from .geo import (
    GeoPoint,
    PathSpec,
    Place,
    PlaceKind,
    Trajectory,
    completion_rate,
    max_path_deviation,
    peak_speed,
    reaction_time,
    step_count,
)
from .learner import Dataset, DatasetRecord, RecordOrigin, evaluate, predict, retrain_schedule, train
from .netmetrics import build_graph, char_path_length, clustering_coefficient, greedy_partition, metric_series, modularity
from .pipeline import BatteryState, CloudStore, LinkModel, Scheduler, SensorAgent, TelemetryPipeline, fmt6
from .sessionlog import SessionLogWriter, fmt8, qstr
from .store import model_fields
from .walker import attention_intervals, simulate_walker

# Fixed per-sensor clock errors (offset seconds, drift ppm); the gateway sync
# handshake estimates and removes the offsets.
SENSOR_CLOCKS = {"gps0": (0.0, 0.0), "eeg0": (0.3, 30.0), "hr0": (-0.2, 20.0),
                 "accel0": (0.1, 10.0)}
ACK_DELAY_RANGE_S = (1.5, 4.0)
ASSEMBLER_SLACK_WINDOWS = 8
GRAPH_FEATURE_NAMES = ("graph:q", "graph:c", "graph:l")


def derive_seed(base, *parts):
    ss = np.random.SeedSequence([int(base)] + [int(p) for p in parts])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def hr_sample(t):
    return round(72.0 + 4.0 * math.sin(2 * math.pi * t / 60.0)
                 + 1.5 * math.sin(2 * math.pi * t / 7.3), 6)


def accel_sample(t, step_rate_hz, amp):
    return round(9.81 + amp * math.sin(2 * math.pi * step_rate_hz * t), 6)


# ------------------------------------------------------------------ features

def window_features(window, eeg_cfg, feature_source, metrics_threshold):
    """Feature vector for one window per the configured feature source."""
    fv = extract_features(window, eeg_cfg)
    if feature_source != "band_power_graph":
        return fv
    g = build_graph(window, metrics_threshold, node_labels=eeg_cfg.channels)
    if g.n_edges == 0:
        extra = np.zeros(3)
    else:
        q = modularity(g, greedy_partition(g))
        extra = np.array([q, clustering_coefficient(g), char_path_length(g).value])
    return replace(
        fv,
        values=np.concatenate([fv.values, extra]),
        names=tuple(fv.names) + GRAPH_FEATURE_NAMES,
    )


def active_feature_names(eeg_cfg, feature_source):
    names = feature_names(eeg_cfg)
    if feature_source == "band_power_graph":
        names = tuple(names) + GRAPH_FEATURE_NAMES
    return names


# ------------------------------------------------------------------ assembler

class EegAssembler:
    """Rebuilds the sample stream from cloud-delivered EEG messages and emits
    complete windows in start order; windows overlapping lost samples are
    skipped once the received watermark has moved far enough past them."""

    def __init__(self, n_channels, fs_hz, window_samples, hop_samples, batch_size):
        self.n_channels = n_channels
        self.fs_hz = fs_hz
        self.w = window_samples
        self.hop = hop_samples
        self.batch = batch_size
        self.period = 1.0 / fs_hz
        self._data = np.zeros((n_channels, 0), dtype=np.float32)
        self._mask = np.zeros(0, dtype=bool)
        self._first = None  # (first_idx, corrected_ts)
        self._next_window = 0
        self.skipped = 0
        self.windows = []

    def _grow(self, upto):
        if upto <= self._mask.shape[0]:
            return
        new = max(upto, 2 * self._mask.shape[0] + 1024)
        data = np.zeros((self.n_channels, new), dtype=np.float32)
        data[:, : self._data.shape[1]] = self._data
        mask = np.zeros(new, dtype=bool)
        mask[: self._mask.shape[0]] = self._mask
        self._data, self._mask = data, mask

    def time_of(self, idx):
        first_idx, first_ts = self._first
        return round(first_ts + (idx - first_idx) * self.period, 6)

    def ingest(self, msg, corrected_ts):
        start = (msg.seq - 1) * self.batch
        if self._first is None or start < self._first[0]:
            self._first = (start, corrected_ts)
        block = np.asarray(msg.payload, dtype=np.float32)
        self._grow(start + block.shape[1])
        self._data[:, start : start + block.shape[1]] = block
        self._mask[start : start + block.shape[1]] = True
        return self._drain()

    def _watermark(self):
        nz = np.flatnonzero(self._mask)
        return int(nz[-1]) + 1 if nz.size else 0

    def _drain(self, force=False):
        out = []
        wm = self._watermark()
        slack = ASSEMBLER_SLACK_WINDOWS * self.w
        while True:
            a = self._next_window * self.hop
            b = a + self.w
            if b > self._mask.shape[0] or b > wm:
                if not force:
                    break
                if a >= wm:
                    break
            if b <= self._mask.shape[0] and self._mask[a:b].all():
                out.append(
                    EegWindow(
                        start_ts=self.time_of(a),
                        fs_hz=self.fs_hz,
                        samples=self._data[:, a:b].astype(np.float64),
                    )
                )
                self._next_window += 1
            elif force or wm - b > slack:
                self.skipped += 1
                self._next_window += 1
            else:
                break
        self.windows.extend(out)
        return out

    def finalize(self):
        return self._drain(force=True)


# ------------------------------------------------------------------ records

def window_record(w_start, status):
    return [("ts", fmt6(w_start)), ("label", status)]


def clf_record(ts, label, confidence):
    return [("ts", fmt6(ts)), ("label", label.value), ("confidence", fmt6(confidence))]


def metrics_record(row):
    sigma = "na" if row.small_world is None else fmt6(row.small_world)
    return [
        ("ts", fmt6(row.ts)),
        ("q", fmt6(row.modularity)),
        ("c", fmt6(row.clustering)),
        ("l", fmt6(row.path_length)),
        ("sigma", sigma),
        ("connected", "1" if row.connected else "0"),
    ]


def behavior_record(report):
    if report.reaction_times_s:
        reactions = ";".join(
            f"{k}:{'na' if v is None else fmt6(v)}"
            for k, v in sorted(report.reaction_times_s.items())
        )
    else:
        reactions = "na"
    return [
        ("deviation_m", fmt6(report.path_efficiency_m)),
        ("peak_speed_mps", fmt6(report.peak_speed_mps)),
        ("steps", str(report.step_count)),
        ("completion", fmt6(report.completion_rate)),
        ("reactions", reactions),
    ]


def eval_record(report):
    return [
        ("n", str(report.n)),
        ("accuracy", fmt6(report.accuracy)),
        ("precision", fmt6(report.precision)),
        ("recall", fmt6(report.recall)),
        ("tp", str(report.tp)),
        ("fp", str(report.fp)),
        ("tn", str(report.tn)),
        ("fn", str(report.fn)),
    ]


def classify_window_statuses(windows, traj, path):
    """(window, status) for every complete window; out-of-span and
    transition-straddling windows are 'dropped'."""
    out = []
    t0, t1 = traj.span()
    for w in windows:
        if w.start_ts < t0 or w.end_ts > t1:
            out.append((w, "dropped"))
            continue
        label = window_label(traj, path, w.start_ts, w.end_ts)
        out.append((w, label.value if label else "dropped"))
    return out


def behavioral_from_streams(traj, path, accel_samples, disturbances):
    """BehavioralReport from cloud streams (shared by run and replay).

    disturbances: list of (stimulus_id, trigger_ts, ack_ts_or_None).
    """
    reactions = {}
    for sid, trigger, ack in disturbances:
        t0, t1 = traj.span()
        if not t0 <= trigger <= t1:
            reactions[sid] = None
            continue
        reactions[sid] = reaction_time(trigger, traj, ack_ts=ack)
    steps = step_count(np.array(accel_samples)) if len(accel_samples) else 0
    from .geo import BehavioralReport

    return BehavioralReport(
        path_efficiency_m=max_path_deviation(traj, path),
        peak_speed_mps=peak_speed(traj),
        reaction_times_s=reactions,
        step_count=steps,
        completion_rate=completion_rate(traj, path, ordered=True),
    )


# ------------------------------------------------------------------ engine

@dataclass
class _Command:
    action: dict
    done: threading.Event = field(default_factory=threading.Event)
    ok: bool = False
    info: str = ""


@dataclass
class RunResult:
    log_path: str
    dataset: Dataset
    model: object = None
    behavioral: list = field(default_factory=list)


class Engine:
    """Owns all simulation state; one engine runs one scenario end to end.

    The ops endpoint talks to a running engine only through `submit` (command
    queue, applied between events) and read-only snapshots.
    """

    def __init__(self, scenario, seed_set="default", out_path="session.log", model=None,
                 dataset=None, pace=None):
        self.scenario = scenario
        self.seed_set = seed_set
        self.seeds = scenario.seeds(seed_set)
        self.out_path = str(out_path)
        self.model = model
        self.pace = pace
        if scenario.phase is proto.Phase.CLOSED_LOOP_NFB and model is None:
            raise ModelMissing("phase 2 requires a trained model")
        names = active_feature_names(scenario.eeg, scenario.learner.feature_source)
        self.dataset = dataset or Dataset(scenario.participant.id, feature_names=names)
        self.writer = None
        self.on_line = None  # live log-record subscriber (ops hub)
        self.commands = queue.Queue()
        self.paused = False
        self.finished = threading.Event()
        self.live = {"sim_time": 0.0, "session": 0, "paused": False, "running": False}
        self._ctx = None
        self.results = RunResult(self.out_path, self.dataset, model)

    # ---------------------------------------------------------- ops surface

    def submit(self, action, timeout=10.0):
        """Thread-safe operator command; blocks until applied or rejected."""
        cmd = _Command(action=dict(action))
        self.commands.put(cmd)
        if not cmd.done.wait(timeout):
            return False, "engine did not answer in time"
        return cmd.ok, cmd.info

    def snapshot(self):
        state = dict(self.live)
        ctx = self._ctx
        if ctx is not None:
            state["probabilities"] = list(ctx["plan"].nudge_probability)
            state["pure_nfb"] = ctx["plan"].pure_nfb
            state["case_c_policy"] = ctx["plan"].case_c_policy.value
            state["position"] = ctx.get("last_pos")
            state["battery"] = {
                a.sensor_id: {
                    "drawn_mah": a.battery.drawn_mah,
                    "capacity_mah": a.battery.capacity_mah,
                }
                for a in ctx["pipeline"].agents
                if a.battery is not None
            }
            state["events"] = ctx["event_tail"][-20:]
            state["confidence"] = ctx["clf_tail"][-60:]
            state["metrics"] = ctx["metric_tail"][-60:]
            state["encounter_active"] = ctx["state"].encounter_active()
        state["n_records"] = len(self.writer.lines) if self.writer else 0
        state["model_loaded"] = self.model is not None
        return state

    # ---------------------------------------------------------- main run

    def run(self):
        sc = self.scenario
        self.live["running"] = True
        self.writer = SessionLogWriter(
            self.out_path, scenario_hash=sc.content_hash, seed_set=self.seed_set,
            phase=sc.phase.value,
        )
        if self.on_line:
            self.writer.on_line = self.on_line
            for i, line in enumerate(self.writer.lines):
                self.on_line(i, line)
        w = self.writer
        for name in sorted(self.seeds):
            w.record("seed", [("name", name), ("value", self.seeds[name])])
        w.record("participant", [("id", qstr(sc.participant.id)),
                                 ("age", sc.participant.age_years)])
        w.record("eegcfg", [
            ("channels", ",".join(sc.eeg.channels)),
            ("fs", fmt6(sc.eeg.fs_hz)),
            ("window_s", fmt6(sc.eeg.window_s)),
            ("overlap", fmt6(sc.eeg.overlap)),
        ])
        w.record("metricscfg", [
            ("enabled", "1" if sc.metrics.enabled else "0"),
            ("threshold", fmt6(sc.metrics.threshold)),
            ("rewires", sc.metrics.sigma_rewires),
        ])
        w.record("learnercfg", [("feature_source", sc.learner.feature_source)])
        w.record("sensorcfg", [
            ("gps_rate", fmt6(sc.walker.gps_rate_hz)),
            ("eeg_batch", sc.sensors.eeg_batch),
            ("hr_rate", fmt6(sc.sensors.hr_rate_hz)),
            ("accel_rate", fmt6(sc.sensors.accel_rate_hz)),
            ("accel_batch", sc.sensors.accel_batch),
            ("step_rate", fmt6(sc.sensors.step_rate_hz)),
        ])
        self._log_path(sc.path)

        plans = proto.plan_sessions(
            sc.path, sc.n_sessions, sc.phase, disturbances=sc.task2,
            case_c_policy=sc.protocol.case_c_policy,
            decision_delay_s=sc.protocol.decision_delay_s
            if sc.phase is proto.Phase.CLOSED_LOOP_NFB else 0.0,
        )
        prev_behavior = None
        try:
            for k, plan in enumerate(plans, start=1):
                if sc.protocol.adaptive_plan and prev_behavior is not None:
                    plan = proto.adjust_plan(plan, prev_behavior)
                self._between_sessions(k)
                prev_behavior = self._run_session(k, plan)
        finally:
            self.writer.close()
            self.live["running"] = False
            self._ctx = None
            self.finished.set()
        return self.results

    def _log_path(self, path):
        w = self.writer
        for place in path.places():
            w.record("place", [
                ("id", qstr(place.id)),
                ("kind", place.kind.value),
                ("lat", fmt8(place.center.lat)),
                ("lon", fmt8(place.center.lon)),
                ("radius", fmt6(place.radius_m)),
                ("index", place.index),
            ])
        pts = ";".join(f"{fmt8(p.lat)}:{fmt8(p.lon)}" for p in path.polyline)
        w.record("polyline", [("id", qstr(path.id)), ("pts", pts)])

    def _between_sessions(self, next_index):
        """Boundary work: queued retrain commands and the retrain schedule."""
        self._apply_commands(between_sessions=True)
        sc = self.scenario
        if sc.phase is not proto.Phase.CLOSED_LOOP_NFB or next_index == 1:
            return
        if retrain_schedule(self.dataset, between_sessions=True):
            pos, neg = self.dataset.class_counts()
            if pos >= 10 and neg >= 10:
                self.model = train(self.dataset, seed=derive_seed(self.seeds["protocol"],
                                                                  next_index, 99))
                self.results.model = self.model
                self.writer.record("retrain", [
                    ("before_session", next_index),
                    ("n_records", len(self.dataset)),
                ])

    # ---------------------------------------------------------- sessions

    def _run_session(self, k, plan):
        sc = self.scenario
        seeds = self.seeds
        traj = simulate_walker(
            sc.path, sc.walker, derive_seed(seeds["walker"], k), disturbances=plan.disturbances
        )
        duration = traj.samples[-1][0]
        intervals = attention_intervals(traj, sc.path)
        profile = replace(sc.attention, intervals=intervals)
        stream = generate_eeg(sc.eeg, profile, duration, derive_seed(seeds["eeg"], k))

        physio_rng = np.random.default_rng(derive_seed(seeds["physio"], k))
        ack_delays = {
            i: round(physio_rng.uniform(*ACK_DELAY_RANGE_S), 6)
            for i in range(len(plan.disturbances))
        }

        agents = self._make_agents(traj, stream, duration)
        scheduler = Scheduler()
        cloud = CloudStore()
        session_id = f"{sc.id}:{k}"
        ctx = {
            "plan": plan,
            "state": proto.EncounterState(sc.path),
            "proto_rng": np.random.default_rng(derive_seed(seeds["protocol"], k)),
            "assembler": EegAssembler(
                len(sc.eeg.channels), sc.eeg.fs_hz, sc.eeg.window_samples,
                sc.eeg.hop_samples, sc.sensors.eeg_batch,
            ),
            "latest": None,  # (label, fv, window_start)
            "ack_delays": ack_delays,
            "session_index": k,
            "event_tail": [],
            "clf_tail": [],
            "metric_tail": [],
            "last_pos": None,
            "cloud": cloud,
            "session_id": session_id,
        }
        pipe = TelemetryPipeline(
            scheduler=scheduler,
            agents=agents,
            link_sensor=LinkModel(
                sc.link_sensor.latency_ms, sc.link_sensor.jitter_ms,
                sc.link_sensor.loss_rate, seed=derive_seed(seeds["link_sensor"], k),
            ),
            link_cloud=LinkModel(
                sc.link_cloud.latency_ms, sc.link_cloud.jitter_ms,
                sc.link_cloud.loss_rate, seed=derive_seed(seeds["link_cloud"], k),
            ),
            cloud=cloud,
            session_id=session_id,
            on_cloud_delivery=lambda batch, now: self._on_delivery(ctx, batch, now),
        )
        ctx["pipeline"] = pipe
        self._ctx = ctx

        w = self.writer
        w.record("session-begin", [
            ("index", k),
            ("pure_nfb", "1" if plan.pure_nfb else "0"),
            ("probs", ",".join(fmt6(p) for p in plan.nudge_probability) or "na"),
            ("duration", fmt6(duration)),
        ])
        if sc.phase is proto.Phase.CLOSED_LOOP_NFB:
            w.record("model", model_fields(self.model))
        pipe.sync_clocks(0.0)
        for sid in sorted(pipe.gateway.offset_estimates):
            w.record("sync", [("sensor", sid), ("offset", fmt6(pipe.gateway.offset_estimates[sid]))])

        pipe.start(duration)
        self._drive(scheduler)
        for win in ctx["assembler"].finalize():
            self._on_window(ctx, win)

        self._post_session(ctx)
        self.writer.end_session(k)
        return ctx.get("behavior")

    def _make_agents(self, traj, stream, duration):
        sc = self.scenario
        t_end = traj.samples[-1][0]

        def gps_source(t):
            if t > t_end:
                return None
            pos = traj.position_at(t)
            return (round(pos.lat, 8), round(pos.lon, 8))

        stream32 = stream.samples.astype(np.float32)
        n_eeg = stream32.shape[1]

        def eeg_source(t):
            idx = int(round(t * sc.eeg.fs_hz)) - 1
            if idx < 0 or idx >= n_eeg:
                return None
            return stream32[:, idx]

        def accel_source(t):
            return accel_sample(t, sc.sensors.step_rate_hz, sc.sensors.accel_amp_ms2)

        def make_battery():
            return BatteryState(sc.sensors.battery_capacity_mah, load_profile=dict(sc.sensors.loads))

        def clock(sid):
            return SENSOR_CLOCKS.get(sid, (0.0, 0.0))

        return [
            SensorAgent("gps0", "gps", sc.walker.gps_rate_hz, gps_source,
                        clock_offset_s=clock("gps0")[0], clock_drift_ppm=clock("gps0")[1],
                        battery=make_battery(), active_loads=("gps", "radio"),
                        end_time_s=duration),
            SensorAgent("eeg0", "eeg", sc.eeg.fs_hz, eeg_source,
                        batch_size=sc.sensors.eeg_batch,
                        clock_offset_s=clock("eeg0")[0], clock_drift_ppm=clock("eeg0")[1],
                        battery=make_battery(), active_loads=("radio",),
                        end_time_s=duration),
            SensorAgent("hr0", "hr", sc.sensors.hr_rate_hz, hr_sample,
                        clock_offset_s=clock("hr0")[0], clock_drift_ppm=clock("hr0")[1],
                        battery=make_battery(), active_loads=("radio",),
                        end_time_s=duration),
            SensorAgent("accel0", "accel", sc.sensors.accel_rate_hz, accel_source,
                        batch_size=sc.sensors.accel_batch,
                        clock_offset_s=clock("accel0")[0], clock_drift_ppm=clock("accel0")[1],
                        battery=make_battery(), active_loads=("cpu",),
                        end_time_s=duration),
        ]

    # ---------------------------------------------------------- event loop

    def _drive(self, scheduler):
        """Unpaced: drain the queue. Paced: advance sim time at a real-time
        ratio, applying operator commands between events."""
        if self.pace is None:
            while len(scheduler):
                self._apply_commands()
                scheduler.step()
            return
        anchor_wall = time.monotonic()
        anchor_sim = scheduler.now
        while len(scheduler):
            self._apply_commands()
            if self.paused:
                time.sleep(0.02)
                anchor_wall = time.monotonic()
                anchor_sim = scheduler.now
                continue
            next_ts = scheduler.peek_ts()
            target = anchor_wall + (next_ts - anchor_sim) / self.pace
            delay = target - time.monotonic()
            if delay > 0.002:
                time.sleep(min(delay, 0.05))
                continue
            scheduler.step()
            self.live["sim_time"] = scheduler.now
            self.live["session"] = self._ctx["session_index"] if self._ctx else 0
            self.live["paused"] = self.paused

    # ---------------------------------------------------------- commands

    def _apply_commands(self, between_sessions=False):
        if self.commands.empty():
            return
        while True:
            try:
                cmd = self.commands.get_nowait()
            except queue.Empty:
                return
            try:
                info = self._apply_command(cmd.action, between_sessions)
                cmd.ok = True
                cmd.info = info
            except CommandRejected as exc:
                cmd.ok = False
                cmd.info = str(exc)
            ctx = self._ctx
            ts = ctx["pipeline"].scheduler.now if ctx else 0.0
            self.writer.record("command", [
                ("ts", fmt6(ts)),
                ("action", qstr(json.dumps(cmd.action, sort_keys=True))),
                ("result", "applied" if cmd.ok else "rejected"),
                ("reason", qstr(cmd.info) if cmd.info else "na"),
            ])
            cmd.done.set()

    def _apply_command(self, action, between_sessions):
        kind = action.get("action")
        ctx = self._ctx
        if kind == "pause":
            self.paused = True
            return "paused"
        if kind == "resume":
            self.paused = False
            return "resumed"
        if kind == "retrain":
            if not between_sessions:
                raise CommandRejected("mid-session retrain is forbidden")
            return "retrain considered at boundary"
        if ctx is None:
            raise CommandRejected("no active session")
        state, plan = ctx["state"], ctx["plan"]
        if state.encounter_active():
            raise CommandRejected("encounter active; try again after it resolves")
        if kind == "set_probability":
            idx = int(action.get("landmark_index", 0))
            value = float(action.get("value", -1.0))
            if not 1 <= idx <= len(plan.nudge_probability):
                raise CommandRejected(f"unknown landmark index {idx}")
            if not 0.0 <= value <= 1.0:
                raise CommandRejected("probability must be in [0, 1]")
            landmark = self.scenario.path.landmarks[idx - 1]
            if state.status[landmark.id] is not proto.PlaceStatus.UNVISITED:
                raise CommandRejected(f"landmark {landmark.id} already encountered")
            plan.nudge_probability[idx - 1] = value
            return f"probability[{idx}] = {value}"
        if kind == "schedule_disturbance":
            offset = float(action.get("offset_s", -1.0))
            now = ctx["pipeline"].scheduler.now
            if offset <= now:
                raise CommandRejected("disturbance offset already in the past")
            d = proto.DisturbanceSpec(round(offset, 6), str(action.get("payload", "question")),
                                      float(action.get("response_deadline_s", 10.0)))
            plan.disturbances.append(d)
            ctx["ack_delays"][len(plan.disturbances) - 1] = round(
                np.random.default_rng(derive_seed(self.seeds["physio"],
                                                  ctx["session_index"],
                                                  len(plan.disturbances))).uniform(
                    *ACK_DELAY_RANGE_S), 6)
            return f"disturbance scheduled at {offset}"
        if kind == "cancel_disturbance":
            idx = int(action.get("index", -1))
            if not 0 <= idx < len(plan.disturbances):
                raise CommandRejected(f"unknown disturbance index {idx}")
            if idx in plan._consumed:
                raise CommandRejected("disturbance already delivered")
            plan._consumed.add(idx)
            return f"disturbance {idx} cancelled"
        if kind == "set_case_c_policy":
            try:
                plan.case_c_policy = proto.CaseCPolicy(action.get("policy"))
            except ValueError:
                raise CommandRejected("policy must be 'noop' or 'nudge'") from None
            return f"case-c policy = {plan.case_c_policy.value}"
        raise CommandRejected(f"unknown action '{kind}'")

    # ---------------------------------------------------------- deliveries

    def _on_delivery(self, ctx, batch, now):
        w = self.writer
        for msg, corrected in batch.messages:
            if msg.kind == "eeg":
                offset, count = w.sidecar_write(msg.payload)
                ref = f"sidecar:{offset}:{count}"
                w.record("msg", _msg_pairs(msg, corrected, ref))
            else:
                w.record("msg", _msg_pairs(msg, corrected))
        if batch.kind == "gps":
            for msg, corrected in batch.messages:
                self._on_gps(ctx, msg, corrected)
        elif batch.kind == "eeg":
            for msg, corrected in batch.messages:
                for win in ctx["assembler"].ingest(msg, corrected):
                    self._on_window(ctx, win)

    def _on_gps(self, ctx, msg, corrected):
        plan, state = ctx["plan"], ctx["state"]
        lat, lon = msg.payload[0]
        pos = GeoPoint(lat, lon)
        ctx["last_pos"] = {"ts": corrected, "lat": lat, "lon": lon}
        self._deliver_disturbances(ctx, corrected)
        if state.session_done or not state.active:
            return
        label = ctx["latest"][0] if ctx["latest"] else None
        events = proto.on_position(
            state, pos, corrected, plan, self.scenario.path,
            classifier_label=label, rng=ctx["proto_rng"],
        )
        for event in events:
            self._log_event(ctx, event)

    def _deliver_disturbances(self, ctx, now):
        plan = ctx["plan"]
        before = set(plan._consumed)
        due = proto.inject_disturbances(plan, now)
        if not due:
            return
        new_idx = sorted(set(plan._consumed) - before)
        for i, d in zip(new_idx, due):
            ack_delay = ctx["ack_delays"].get(i)
            ack = round(d.trigger_ts_offset_s + ack_delay, 6) if ack_delay is not None else None
            if ack is not None and ack_delay > d.response_deadline_s:
                ack = None
            self.writer.record("disturbance", [
                ("id", f"d{i + 1}"),
                ("ts", fmt6(d.trigger_ts_offset_s)),
                ("payload", qstr(d.payload)),
                ("ack", "na" if ack is None else fmt6(ack)),
                ("deadline", fmt6(d.response_deadline_s)),
            ])
            ctx.setdefault("disturbance_log", []).append(
                (f"d{i + 1}", d.trigger_ts_offset_s, ack)
            )

    def _log_event(self, ctx, event):
        self.writer.record("event", [
            ("ts", fmt6(event.ts)),
            ("kind", event.kind.value),
            ("place", qstr(event.place_id) if event.place_id else "na"),
            ("rationale", event.rationale.value if event.rationale else "na"),
        ])
        ctx["event_tail"].append(
            {"ts": event.ts, "kind": event.kind.value, "place": event.place_id,
             "rationale": event.rationale.value if event.rationale else None}
        )
        ctx.setdefault("events", []).append(event)
        if (
            self.scenario.phase is proto.Phase.CLOSED_LOOP_NFB
            and event.kind in (proto.FeedbackKind.NFB_ENCOURAGE, proto.FeedbackKind.NFB_REINFORCE)
            and ctx["latest"] is not None
        ):
            from .learner import semi_supervised_update

            fv = ctx["latest"][1]
            semi_supervised_update(self.dataset, fv, event)
            self.writer.record("ssupdate", [
                ("ts", fmt6(event.ts)),
                ("window", fmt6(fv.ts)),
                ("label", "attention" if event.kind is proto.FeedbackKind.NFB_ENCOURAGE
                 else "non_attention"),
            ])

    def _on_window(self, ctx, win):
        if self.scenario.phase is not proto.Phase.CLOSED_LOOP_NFB:
            return
        fv = window_features(win, self.scenario.eeg, self.scenario.learner.feature_source,
                             self.scenario.metrics.threshold)
        label, confidence = predict(self.model, fv)
        ctx["latest"] = (label, fv, win.start_ts)
        self.writer.record("clf", clf_record(win.start_ts, label, confidence))
        ctx["clf_tail"].append({"ts": win.start_ts, "label": label.value,
                                "confidence": confidence})

    # ---------------------------------------------------------- post-run

    def _post_session(self, ctx):
        sc = self.scenario
        w = self.writer
        cloud, session_id = ctx["cloud"], ctx["session_id"]
        pipe = ctx["pipeline"]
        k = ctx["session_index"]

        gps_msgs = cloud.messages(session_id, "gps0")
        traj_samples = tuple(
            (corrected, GeoPoint(msg.payload[0][0], msg.payload[0][1]))
            for msg, corrected in gps_msgs
        )
        windows = ctx["assembler"].windows

        if len(traj_samples) >= 2:
            traj = Trajectory(traj_samples)
            statuses = classify_window_statuses(windows, traj, sc.path)
            for win, status in statuses:
                w.record("window", window_record(win.start_ts, status))
                if status != "dropped" and sc.phase is proto.Phase.OPEN_LOOP_NUDGES:
                    fv = window_features(win, sc.eeg, sc.learner.feature_source,
                                         sc.metrics.threshold)
                    self.dataset.append(DatasetRecord(
                        features=fv.values,
                        label=proto.AttentionLabel(status),
                        origin=RecordOrigin.PHASE1,
                        ts=win.start_ts,
                    ))
            if sc.phase is proto.Phase.CLOSED_LOOP_NFB:
                eval_data = Dataset(sc.participant.id,
                                    feature_names=self.dataset.feature_names)
                for win, status in statuses:
                    if status == "dropped":
                        continue
                    fv = window_features(win, sc.eeg, sc.learner.feature_source,
                                         sc.metrics.threshold)
                    eval_data.append(DatasetRecord(
                        features=fv.values, label=proto.AttentionLabel(status),
                        origin=RecordOrigin.PHASE1, ts=win.start_ts,
                    ))
                if len(eval_data):
                    report = evaluate(self.model, eval_data)
                    w.record("eval", eval_record(report))
                    ctx["eval"] = report

            accel = [
                (round(corrected + i * msg.sample_period_s, 6), msg.payload[i])
                for msg, corrected in cloud.messages(session_id, "accel0")
                for i in range(msg.batch_size)
            ]
            behavior = behavioral_from_streams(
                traj, sc.path, accel, ctx.get("disturbance_log", [])
            )
            ctx["behavior"] = behavior
            self.results.behavioral.append(behavior)
            w.record("behavior", behavior_record(behavior))

        if sc.metrics.enabled and windows:
            series = metric_series(
                windows, sc.metrics.threshold, seed=derive_seed(self.seeds["metrics"], k),
                node_labels=sc.eeg.channels, rewires=sc.metrics.sigma_rewires,
            )
            for ts, reason in series.gaps:
                w.record("metricgap", [("ts", fmt6(ts)), ("reason", qstr(reason))])
            for row in series.rows:
                w.record("metrics", metrics_record(row))
                ctx["metric_tail"].append({"ts": row.ts, "q": row.modularity,
                                           "c": row.clustering, "l": row.path_length,
                                           "sigma": row.small_world})

        for agent in pipe.agents:
            w.record("battery", [
                ("sensor", agent.sensor_id),
                ("drawn_mah", fmt6(agent.battery.drawn_mah)),
                ("capacity_mah", fmt6(agent.battery.capacity_mah)),
                ("exhausted_at", "na" if agent.exhausted_at is None
                 else fmt6(agent.exhausted_at)),
            ])
        for sid, acc in pipe.accounting().items():
            w.record("telemetry", [
                ("sensor", sid),
                ("emitted", acc["emitted"]),
                ("link_dropped", acc["link1_dropped"]),
                ("late_dropped", acc["late_dropped"]),
                ("cloud_dropped", acc["link2_dropped"]),
                ("stored", acc["cloud"]),
            ])


def _msg_pairs(msg, corrected, sidecar_ref=None):
    if msg.kind == "eeg":
        body = sidecar_ref
    elif msg.kind == "gps":
        body = ";".join(f"{fmt8(lat)},{fmt8(lon)}" for lat, lon in msg.payload)
    else:
        body = ";".join(fmt6(v) for v in msg.payload)
    return [
        ("sensor", msg.sensor_id),
        ("kind", msg.kind),
        ("seq", msg.seq),
        ("device_ts", fmt6(msg.device_ts_s)),
        ("corrected_ts", fmt6(corrected)),
        ("n", msg.batch_size),
        ("payload", body),
    ]


# ------------------------------------------------------------------ phases

def run_phase1(scenario, seed_set="default", out_path="phase1.log"):
    """Open-loop nudge sessions; returns (RunResult with the labeled dataset)."""
    if scenario.phase is not proto.Phase.OPEN_LOOP_NUDGES:
        raise ScenarioInvalid("scenario.phase must be phase1 for run_phase1")
    return Engine(scenario, seed_set, out_path).run()


def run_phase2(scenario, model, seed_set="default", out_path="phase2.log", dataset=None):
    """Closed-loop NFB sessions with a trained model."""
    if scenario.phase is not proto.Phase.CLOSED_LOOP_NFB:
        raise ScenarioInvalid("scenario.phase must be phase2 for run_phase2")
    if model is None:
        raise ModelMissing("run_phase2 needs a model")
    return Engine(scenario, seed_set, out_path, model=model, dataset=dataset).run()
