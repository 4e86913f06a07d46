"""Three-tier telemetry simulation: sensor agents -> smartphone gateway ->
cloud store, over lossy reordering links, driven by one deterministic
discrete-event scheduler.

Actors own their state exclusively and interact only through scheduled
message events; there is no wall-clock dependence, so identical (scenario,
seeds) yield identical cloud contents and counters.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeRoundTrip, UnknownSession

GATEWAY_WINDOW_MS = 1000.0
GATEWAY_REORDER_HORIZON_MS = 500.0


# ------------------------------------------------------------------ scheduler

class Scheduler:
    """Timestamp-ordered event queue with stable FIFO tie-breaking."""

    def __init__(self):
        self._heap = []
        self._counter = 0
        self.now = 0.0

    def schedule(self, ts, callback):
        if ts < self.now:
            ts = self.now
        heapq.heappush(self._heap, (ts, self._counter, callback))
        self._counter += 1

    def __len__(self):
        return len(self._heap)

    def peek_ts(self):
        return self._heap[0][0] if self._heap else None

    def step(self):
        if not self._heap:
            return False
        ts, _, callback = heapq.heappop(self._heap)
        self.now = ts
        callback()
        return True

    def run(self, until=None):
        while self._heap:
            if until is not None and self._heap[0][0] > until:
                break
            self.step()


# ------------------------------------------------------------------ registry

@dataclass(frozen=True)
class DeviceProfile:
    brand_product: str
    wireless: bool
    fs_hz: float  # highest stated sampling rate
    channels_min: int
    channels_max: int
    price_usd: float | None = None
    noise_reduction: str | None = None
    notes: str = ""

    def __post_init__(self):
        if self.fs_hz <= 0:
            raise ValueError("sampling rate must be positive")
        if self.channels_min < 1 or self.channels_max < self.channels_min:
            raise ValueError("invalid channel range")


DEVICE_REGISTRY = {
    "ant-neuro-mini": DeviceProfile(
        "ANT Neuro mini-serie", False, 2048.0, 8, 8,
        noise_reduction="active shielding", notes="fs < 2048 Hz; price on quote",
    ),
    "open-bci": DeviceProfile(
        "Open BCI", True, 250.0, 8, 21, price_usd=1000.0,
        notes="BLE/WiFi; 8/16/21 channel configurations",
    ),
    "mbraintrain": DeviceProfile(
        "mBrainTrain", True, 500.0, 24, 24, price_usd=66750.0,
        noise_reduction="high SNR claimed", notes="BT-EDR; 250/500 Hz",
    ),
    "unicorn": DeviceProfile(
        "Unicorn EEG", True, 250.0, 8, 8, price_usd=1200.0,
        noise_reduction="high SNR claimed", notes="BT",
    ),
    "wearable-sensing": DeviceProfile(
        "Wearable Sensing", True, 300.0, 7, 24, notes="BT; price n.a.",
    ),
    "emotiv-epoc-x": DeviceProfile(
        "Emotiv EPOC-X", True, 256.0, 14, 14, price_usd=850.0,
        noise_reduction="notch filter", notes="BLE; 128-256 Hz",
    ),
    "bitbrain-hero": DeviceProfile(
        "Bitbrain Hero", True, 250.0, 9, 9,
        noise_reduction="active shielding", notes="BT 2.1+EDR; price on quote",
    ),
    "brain-live-amp": DeviceProfile(
        "Brain Live Amp", True, 1000.0, 8, 32, price_usd=18200.0, notes="fs <= 1000 Hz",
    ),
    "neurosky-mindwave": DeviceProfile(
        "Neurosky - MindWave", True, 512.0, 1, 1, price_usd=180.0,
    ),
}


def default_eeg_profile():
    """The modal registry configuration: wireless, 250 Hz, 8 channels."""
    return DEVICE_REGISTRY["unicorn"]


# ------------------------------------------------------------------ battery

@dataclass
class BatteryState:
    capacity_mah: float
    drawn_mah: float = 0.0
    load_profile: dict = field(default_factory=lambda: {"gps": 30.0, "radio": 5.0,
                                                        "cpu": 8.0, "display": 12.0})

    def __post_init__(self):
        if not 0.0 <= self.drawn_mah <= self.capacity_mah:
            raise ValueError("drawn charge must be within [0, capacity]")

    @property
    def exhausted(self):
        return self.drawn_mah >= self.capacity_mah

    def current_ma(self, loads):
        return sum(self.load_profile[k] for k in loads)

    def draw(self, ma, dt_s):
        """Integrate a constant load; returns the exhaustion time offset within
        dt_s if the battery dies during it, else None."""
        if ma <= 0 or dt_s <= 0 or self.exhausted:
            return None
        delta = ma * dt_s / 3600.0
        remaining = self.capacity_mah - self.drawn_mah
        if delta >= remaining:
            self.drawn_mah = self.capacity_mah
            return remaining / ma * 3600.0
        self.drawn_mah += delta
        return None


# ------------------------------------------------------------------ messages

@dataclass(frozen=True)
class TelemetryMessage:
    sensor_id: str
    kind: str  # eeg | hr | gps | accel
    seq: int
    device_ts_s: float
    payload: tuple  # samples; eeg payload is a float32 array (channels x batch)
    batch_size: int
    sample_period_s: float

    def __post_init__(self):
        n = self.payload.shape[1] if isinstance(self.payload, np.ndarray) else len(self.payload)
        if n != self.batch_size:
            raise ValueError("batch_size must equal payload length")


def fmt6(x):
    return f"{x:.6f}"


def render_message(msg, corrected_ts=None, sidecar_ref=None):
    """One wire-format line; fixed field order, floats at 6 decimals."""
    corrected = "na" if corrected_ts is None else fmt6(corrected_ts)
    if msg.kind == "eeg":
        body = sidecar_ref if sidecar_ref else "inline-eeg-unsupported"
    elif msg.kind == "gps":
        body = ";".join(f"{lat:.8f},{lon:.8f}" for lat, lon in msg.payload)
    else:
        body = ";".join(fmt6(v) for v in msg.payload)
    return (
        f"msg sensor={msg.sensor_id} kind={msg.kind} seq={msg.seq} "
        f"device_ts={fmt6(msg.device_ts_s)} corrected_ts={corrected} "
        f"n={msg.batch_size} payload={body}"
    )


def parse_kv_line(line):
    """Parse a `name k=v k=v` record line into (name, dict)."""
    parts = line.rstrip("\n").split(" ")
    fields = {}
    for p in parts[1:]:
        k, _, v = p.partition("=")
        fields[k] = v
    return parts[0], fields


# ------------------------------------------------------------------ sensors

class SensorAgent:
    """First-tier sensor: samples a source callback at a fixed rate, batches
    samples into sequenced messages, drains its battery while active."""

    def __init__(self, sensor_id, kind, rate_hz, source, batch_size=1,
                 clock_offset_s=0.0, clock_drift_ppm=0.0, battery=None,
                 active_loads=(), end_time_s=None):
        self.sensor_id = sensor_id
        self.kind = kind
        self.rate_hz = rate_hz
        self.source = source
        self.batch_size = batch_size
        self.clock_offset_s = clock_offset_s
        self.clock_drift_ppm = clock_drift_ppm
        self.battery = battery
        self.active_loads = tuple(active_loads)
        self.end_time_s = end_time_s
        self.seq = 0
        self.emitted = 0
        self.exhausted_at = None
        self._next_sample_t = 1.0 / rate_hz  # first sample one period in
        self._last_drain_t = 0.0
        self._buffer = []
        self._buffer_t0 = None

    def device_time(self, t):
        return round(t * (1.0 + self.clock_drift_ppm * 1e-6) + self.clock_offset_s, 6)

    def _drain_battery(self, now):
        if self.battery is None:
            return None
        dt = now - self._last_drain_t
        self._last_drain_t = now
        if dt <= 0:
            return self.exhausted_at
        offset = self.battery.draw(self.battery.current_ma(self.active_loads), dt)
        if offset is not None and self.exhausted_at is None:
            self.exhausted_at = now - dt + offset
        return self.exhausted_at


def emit(agent, sim_now_s):
    """Messages that have come due since the last emit call.

    A dead battery silences the agent from its exact exhaustion time; samples
    due before that moment are still delivered.
    """
    agent._drain_battery(sim_now_s)
    cutoff = sim_now_s
    if agent.exhausted_at is not None:
        cutoff = min(cutoff, agent.exhausted_at)
    if agent.end_time_s is not None:
        cutoff = min(cutoff, agent.end_time_s)
    out = []
    period = 1.0 / agent.rate_hz
    while agent._next_sample_t <= cutoff + 1e-9:
        t = agent._next_sample_t
        sample = agent.source(t)
        agent._next_sample_t += period
        if sample is None:
            continue
        if agent._buffer_t0 is None:
            agent._buffer_t0 = t
        agent._buffer.append(sample)
        if len(agent._buffer) >= agent.batch_size:
            out.append(_flush_buffer(agent))
    return out


def _flush_buffer(agent):
    agent.seq += 1
    agent.emitted += 1
    if agent.kind == "eeg":
        payload = np.column_stack(agent._buffer).astype(np.float32)
    else:
        payload = tuple(agent._buffer)
    msg = TelemetryMessage(
        sensor_id=agent.sensor_id,
        kind=agent.kind,
        seq=agent.seq,
        device_ts_s=agent.device_time(agent._buffer_t0),
        payload=payload,
        batch_size=len(agent._buffer),
        sample_period_s=1.0 / agent.rate_hz,
    )
    agent._buffer = []
    agent._buffer_t0 = None
    return msg


# ------------------------------------------------------------------ links

class LinkModel:
    """Single-hop lossy link: fixed base latency, uniform jitter, Bernoulli
    loss; deterministic given seed and call order."""

    def __init__(self, latency_ms=30.0, jitter_ms=10.0, loss_rate=0.0, seed=0):
        if not 0.0 <= loss_rate < 1.0:
            raise ValueError("loss_rate must be in [0, 1)")
        if latency_ms < 0 or jitter_ms < 0:
            raise ValueError("latency and jitter must be >= 0")
        self.latency_ms = latency_ms
        self.jitter_ms = jitter_ms
        self.loss_rate = loss_rate
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.sent = 0
        self.dropped = 0

    def delay_s(self):
        jitter = self.rng.uniform(-self.jitter_ms, self.jitter_ms) if self.jitter_ms else 0.0
        return max(0.0, (self.latency_ms + jitter) / 1000.0)

    def transmit(self, msg, sim_now):
        self.sent += 1
        if self.loss_rate > 0.0 and self.rng.random() < self.loss_rate:
            self.dropped += 1
            return []
        return [(sim_now + self.delay_s(), msg)]


# ------------------------------------------------------------------ gateway

@dataclass(frozen=True)
class GatewayBatch:
    sensor_id: str
    kind: str
    messages: tuple  # (msg, corrected_ts) in seq order


class GatewayState:
    """Second tier: per-sensor dedup + seq reordering within a horizon, clock
    offset correction, periodic batch uploads."""

    def __init__(self, window_ms=GATEWAY_WINDOW_MS, reorder_horizon_ms=GATEWAY_REORDER_HORIZON_MS):
        self.window_s = window_ms / 1000.0
        self.horizon_s = reorder_horizon_ms / 1000.0
        self.next_seq = {}
        self.buffers = {}  # sensor -> {seq: (msg, arrival_ts)}
        self.offset_estimates = {}
        self.duplicates = {}
        self.late_dropped = {}
        self.forwarded = {}
        self.gap_records = []  # (sensor_id, missing_seq)

    def _init_sensor(self, sid):
        self.next_seq.setdefault(sid, 1)
        self.buffers.setdefault(sid, {})
        self.duplicates.setdefault(sid, 0)
        self.late_dropped.setdefault(sid, 0)
        self.forwarded.setdefault(sid, 0)


def gateway_ingest(gw, msg, arrival_ts):
    """Buffer one arriving message; late duplicates are dropped and counted."""
    sid = msg.sensor_id
    gw._init_sensor(sid)
    if msg.seq < gw.next_seq[sid]:
        gw.late_dropped[sid] += 1
        return
    if msg.seq in gw.buffers[sid]:
        gw.duplicates[sid] += 1
        return
    gw.buffers[sid][msg.seq] = (msg, arrival_ts)


def gateway_flush(gw, now):
    """In-order batches ready at `now`; gaps older than the reorder horizon
    are declared missing and skipped."""
    batches = []
    for sid in sorted(gw.buffers):
        buf = gw.buffers[sid]
        ready = []
        while buf:
            nxt = gw.next_seq[sid]
            if nxt in buf:
                msg, _ = buf.pop(nxt)
                ready.append(msg)
                gw.next_seq[sid] = nxt + 1
                continue
            oldest_arrival = min(ts for _, ts in buf.values())
            if now - oldest_arrival <= gw.horizon_s:
                break  # still hoping for the missing seq
            first_present = min(buf)
            for missing in range(nxt, first_present):
                gw.gap_records.append((sid, missing))
            gw.next_seq[sid] = first_present
        if ready:
            offset = gw.offset_estimates.get(sid, 0.0)
            msgs = tuple((m, round(m.device_ts_s - offset, 6)) for m in ready)
            gw.forwarded[sid] += len(ready)
            batches.append(GatewayBatch(sensor_id=sid, kind=ready[0].kind, messages=msgs))
    return batches


def estimate_offset(gw, sensor_id, exchange):
    """Round-trip midpoint offset estimate from (t_req_gw, t_at_sensor,
    t_resp_gw); positive offset = sensor clock ahead of the gateway."""
    t_req, t_at_sensor, t_resp = exchange
    if t_resp < t_req:
        raise NegativeRoundTrip(f"response {t_resp} precedes request {t_req}")
    offset = t_at_sensor - (t_req + t_resp) / 2.0
    gw.offset_estimates[sensor_id] = offset
    return offset


# ------------------------------------------------------------------ cloud

class CloudStore:
    """Third tier: idempotent per-(sensor, seq) storage with range queries."""

    def __init__(self):
        self._sessions = {}

    def ensure_session(self, session_id):
        self._sessions.setdefault(session_id, {})

    def store(self, session_id, batch):
        """Idempotent batch ingestion; returns the number of new messages."""
        self.ensure_session(session_id)
        session = self._sessions[session_id]
        fresh = 0
        for msg, corrected_ts in batch.messages:
            per_sensor = session.setdefault(msg.sensor_id, {})
            if msg.seq in per_sensor:
                continue
            per_sensor[msg.seq] = (msg, corrected_ts)
            fresh += 1
        return fresh

    def _session(self, session_id):
        if session_id not in self._sessions:
            raise UnknownSession(session_id)
        return self._sessions[session_id]

    def sensors(self, session_id):
        return sorted(self._session(session_id))

    def message_count(self, session_id, sensor_id):
        return len(self._session(session_id).get(sensor_id, {}))

    def messages(self, session_id, sensor_id):
        """(msg, corrected_ts) pairs in seq order."""
        per_sensor = self._session(session_id).get(sensor_id, {})
        return [per_sensor[seq] for seq in sorted(per_sensor)]

    def query(self, session_id, sensor_kind, t0, t1):
        """Corrected-timestamp-ordered samples with ts in [t0, t1)."""
        out = []
        for sid in self.sensors(session_id):
            for msg, corrected in self.messages(session_id, sid):
                if msg.kind != sensor_kind:
                    break
                for i in range(msg.batch_size):
                    ts = round(corrected + i * msg.sample_period_s, 6)
                    if t0 <= ts < t1:
                        if isinstance(msg.payload, np.ndarray):
                            out.append((ts, msg.payload[:, i]))
                        else:
                            out.append((ts, msg.payload[i]))
        out.sort(key=lambda pair: pair[0])
        return out


# ------------------------------------------------------------------ pipeline

class TelemetryPipeline:
    """Wires agents -> sensor link -> gateway -> cloud link -> cloud over a
    scheduler, with exact per-sensor conservation accounting."""

    def __init__(self, scheduler, agents, link_sensor, link_cloud, cloud, session_id,
                 gateway=None, on_cloud_delivery=None):
        self.scheduler = scheduler
        self.agents = list(agents)
        self.link_sensor = link_sensor
        self.link_cloud = link_cloud
        self.gateway = gateway or GatewayState()
        self.cloud = cloud
        self.session_id = session_id
        self.on_cloud_delivery = on_cloud_delivery
        self.link1_dropped = {a.sensor_id: 0 for a in self.agents}
        self.link2_dropped = {a.sensor_id: 0 for a in self.agents}
        cloud.ensure_session(session_id)
        self._draining = False

    def sync_clocks(self, now=0.0):
        """One request/response exchange per sensor; applies midpoint offsets."""
        for agent in self.agents:
            leg1 = self.link_sensor.delay_s()
            leg2 = self.link_sensor.delay_s()
            t_at_sensor = agent.device_time(now + leg1)
            estimate_offset(self.gateway, agent.sensor_id, (now, t_at_sensor, now + leg1 + leg2))

    def start(self, duration_s):
        for agent in self.agents:
            if agent.end_time_s is None:
                agent.end_time_s = duration_s
            interval = agent.batch_size / agent.rate_hz
            self.scheduler.schedule(0.0, self._make_tick(agent, interval))
        self.scheduler.schedule(self.gateway.window_s, self._flush_tick)
        self._duration = duration_s

    def _make_tick(self, agent, interval):
        def tick():
            now = self.scheduler.now
            for msg in emit(agent, now):
                deliveries = self.link_sensor.transmit(msg, now)
                if not deliveries:
                    self.link1_dropped[msg.sensor_id] += 1
                for ts, m in deliveries:
                    self.scheduler.schedule(ts, lambda m=m: gateway_ingest(
                        self.gateway, m, self.scheduler.now))
            done = agent._next_sample_t > agent.end_time_s or agent.exhausted_at is not None
            if not done:
                self.scheduler.schedule(now + interval, tick)
        return tick

    def _flush_tick(self):
        now = self.scheduler.now
        self._upload(gateway_flush(self.gateway, now))
        horizon = self._duration + self.gateway.horizon_s + self.gateway.window_s
        if now <= horizon:
            self.scheduler.schedule(now + self.gateway.window_s, self._flush_tick)
        elif not self._draining:
            self._draining = True
            self.scheduler.schedule(now + self.gateway.horizon_s + self.gateway.window_s,
                                    self._final_flush)

    def _upload(self, batches):
        now = self.scheduler.now
        for batch in batches:
            deliveries = self.link_cloud.transmit(batch, now)
            if not deliveries:
                self.link2_dropped[batch.sensor_id] += len(batch.messages)
            for ts, b in deliveries:
                self.scheduler.schedule(ts, lambda b=b: self._deliver(b))

    def _final_flush(self):
        # past the horizon every buffered gap is declared, emptying the buffers
        self._upload(gateway_flush(self.gateway, self.scheduler.now))

    def _deliver(self, batch):
        self.cloud.store(self.session_id, batch)
        if self.on_cloud_delivery:
            self.on_cloud_delivery(batch, self.scheduler.now)

    def run(self, duration_s):
        self.start(duration_s)
        self.scheduler.run()

    def accounting(self):
        """Per-sensor {emitted, link1_dropped, late_dropped, link2_dropped,
        cloud} — emitted equals the sum of the rest when drained."""
        out = {}
        for agent in self.agents:
            sid = agent.sensor_id
            out[sid] = {
                "emitted": agent.emitted,
                "link1_dropped": self.link1_dropped[sid],
                "late_dropped": self.gateway.late_dropped.get(sid, 0),
                "link2_dropped": self.link2_dropped[sid],
                "cloud": self.cloud.message_count(self.session_id, sid),
            }
        return out
