"""Scenario configuration: participant eligibility, the versioned scenario
file schema (YAML: key/value + nested lists), and validation.

Unknown keys are rejected at every nesting level so typos fail loudly.
"""

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum

import yaml

from .eeg import AttentionProfile, EegConfig
from .errors import ScenarioInvalid
from .geo import GeoPoint, PathSpec, Place, PlaceKind
from .protocol import CaseCPolicy, DisturbanceSpec, Phase

SCHEMA_VERSION = 1
REQUIRED_SEEDS = ("walker", "eeg", "protocol", "link_sensor", "link_cloud", "physio", "metrics")

AGE_MIN, AGE_MAX = 65, 85


class Exclusion(Enum):
    SEVERE_PSYCHIATRIC = "severe_psychiatric"
    CONTINUOUS_MEDICAL_ASSISTANCE = "continuous_medical_assistance"
    NOT_INDEPENDENT_DAILY = "not_independent_daily"
    MOTOR_IMPAIRMENT = "motor_impairment"


@dataclass(frozen=True)
class ParticipantProfile:
    id: str
    age_years: int
    mci_diagnosed: bool
    informatics_entry_level: bool
    exclusions: frozenset = frozenset()

    def __post_init__(self):
        if self.age_years < 0:
            raise ValueError("age must be >= 0")


@dataclass(frozen=True)
class EligibilityResult:
    eligible: bool
    reasons: tuple = ()


def validate_profile(p):
    """Enrollment check: age window, MCI diagnosis, informatics entry level,
    and an empty exclusion list; every violated criterion is reported."""
    reasons = []
    if not AGE_MIN <= p.age_years <= AGE_MAX:
        reasons.append(f"age {p.age_years} outside {AGE_MIN}-{AGE_MAX}")
    if not p.mci_diagnosed:
        reasons.append("no MCI diagnosis")
    if not p.informatics_entry_level:
        reasons.append("no informatics entry level")
    for exclusion in sorted(p.exclusions, key=lambda e: e.value):
        reasons.append(f"exclusion: {exclusion.value}")
    return EligibilityResult(eligible=not reasons, reasons=tuple(reasons))


@dataclass(frozen=True)
class WalkerParams:
    speed_mps: float = 1.2
    lateral_noise_m: float = 2.0
    speed_noise_mps: float = 0.1
    gps_rate_hz: float = 1.0


@dataclass(frozen=True)
class LinkConfig:
    latency_ms: float = 30.0
    jitter_ms: float = 10.0
    loss_rate: float = 0.0


@dataclass(frozen=True)
class SensorConfig:
    eeg_batch: int = 25
    hr_rate_hz: float = 1.0
    accel_rate_hz: float = 25.0
    accel_batch: int = 5
    step_rate_hz: float = 1.8
    accel_amp_ms2: float = 2.5
    battery_capacity_mah: float = 100.0
    loads: dict = field(
        default_factory=lambda: {"gps": 30.0, "radio": 5.0, "cpu": 8.0, "display": 12.0}
    )


@dataclass(frozen=True)
class ProtocolConfig:
    case_c_policy: CaseCPolicy = CaseCPolicy.NOOP
    decision_delay_s: float = 4.0
    adaptive_plan: bool = False


@dataclass(frozen=True)
class MetricsConfig:
    enabled: bool = True
    threshold: float = 0.5
    sigma_rewires: int = 20


@dataclass(frozen=True)
class LearnerConfig:
    feature_source: str = "band_power"  # band_power | band_power_graph


@dataclass(frozen=True)
class Scenario:
    id: str
    path: PathSpec
    participant: ParticipantProfile
    phase: Phase
    n_sessions: int
    eeg: EegConfig
    attention: AttentionProfile  # template; intervals are filled per session
    link_sensor: LinkConfig
    link_cloud: LinkConfig
    walker: WalkerParams
    sensors: SensorConfig
    protocol: ProtocolConfig
    metrics: MetricsConfig
    learner: LearnerConfig
    task2: tuple
    seed_sets: dict
    content_hash: str

    def seeds(self, seed_set="default"):
        if seed_set not in self.seed_sets:
            raise ScenarioInvalid(f"unknown seed set '{seed_set}'")
        return self.seed_sets[seed_set]


class _Section:
    """Dict wrapper that tracks consumed keys and rejects leftovers."""

    def __init__(self, data, where):
        if not isinstance(data, dict):
            raise ScenarioInvalid(f"{where}: expected a mapping")
        self.data = dict(data)
        self.where = where

    def take(self, key, kind=None, default="__required__"):
        if key in self.data:
            value = self.data.pop(key)
        elif default != "__required__":
            return default
        else:
            raise ScenarioInvalid(f"{self.where}: missing required key '{key}'")
        if kind is bool and not isinstance(value, bool):
            raise ScenarioInvalid(f"{self.where}.{key}: expected a boolean")
        if kind is float:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ScenarioInvalid(f"{self.where}.{key}: expected a number")
            value = float(value)
        if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
            raise ScenarioInvalid(f"{self.where}.{key}: expected an integer")
        if kind is str and not isinstance(value, str):
            raise ScenarioInvalid(f"{self.where}.{key}: expected a string")
        if kind is list and not isinstance(value, list):
            raise ScenarioInvalid(f"{self.where}.{key}: expected a list")
        if kind is dict and not isinstance(value, dict):
            raise ScenarioInvalid(f"{self.where}.{key}: expected a mapping")
        return value

    def done(self):
        if self.data:
            raise ScenarioInvalid(f"{self.where}: unknown keys {sorted(self.data)}")


def _parse_place(raw, where, kind, index=0):
    sec = _Section(raw, where)
    place = Place(
        id=sec.take("id", str),
        kind=kind,
        center=GeoPoint(round(sec.take("lat", float), 8), round(sec.take("lon", float), 8)),
        radius_m=round(sec.take("radius_m", float, 20.0), 6),
        index=index,
    )
    sec.done()
    return place


def _parse_path(raw):
    sec = _Section(raw, "path")
    path_id = sec.take("id", str)
    start = _parse_place(sec.take("start", dict), "path.start", PlaceKind.START)
    dest = _parse_place(sec.take("destination", dict), "path.destination", PlaceKind.DESTINATION)
    landmarks = tuple(
        _parse_place(p, f"path.landmarks[{i}]", PlaceKind.LANDMARK, index=i + 1)
        for i, p in enumerate(sec.take("landmarks", list))
    )
    non_relevant = tuple(
        _parse_place(p, f"path.non_relevant[{i}]", PlaceKind.NON_RELEVANT)
        for i, p in enumerate(sec.take("non_relevant", list, []))
    )
    poly_raw = sec.take("polyline", list)
    try:
        polyline = tuple(GeoPoint(round(float(lat), 8), round(float(lon), 8)) for lat, lon in poly_raw)
    except (TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"path.polyline: {exc}") from None
    sec.done()
    try:
        return PathSpec(path_id, start, dest, landmarks, non_relevant, polyline)
    except ValueError as exc:
        raise ScenarioInvalid(f"path: {exc}") from None


def _parse_participant(raw):
    sec = _Section(raw, "participant")
    try:
        exclusions = frozenset(Exclusion(e) for e in sec.take("exclusions", list, []))
    except ValueError as exc:
        raise ScenarioInvalid(f"participant.exclusions: {exc}") from None
    profile = ParticipantProfile(
        id=sec.take("id", str),
        age_years=sec.take("age_years", int),
        mci_diagnosed=sec.take("mci_diagnosed", bool),
        informatics_entry_level=sec.take("informatics_entry_level", bool),
        exclusions=exclusions,
    )
    sec.done()
    return profile


def _parse_disturbance(raw, where):
    sec = _Section(raw, where)
    d = DisturbanceSpec(
        trigger_ts_offset_s=round(sec.take("offset_s", float), 6),
        payload=sec.take("payload", str),
        response_deadline_s=round(sec.take("response_deadline_s", float, 10.0), 6),
    )
    sec.done()
    return d


def load_scenario(text):
    """Parse + validate a scenario document; raises ScenarioInvalid."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioInvalid(f"not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise ScenarioInvalid("scenario must be a mapping")
    content_hash = hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]

    sec = _Section(raw, "scenario")
    version = sec.take("version", int)
    if version != SCHEMA_VERSION:
        raise ScenarioInvalid(f"unsupported schema version {version} (expected {SCHEMA_VERSION})")
    scenario_id = sec.take("id", str)
    participant = _parse_participant(sec.take("participant", dict))
    eligibility = validate_profile(participant)
    if not eligibility.eligible:
        raise ScenarioInvalid("participant ineligible: " + "; ".join(eligibility.reasons))
    phase_raw = sec.take("phase", str)
    try:
        phase = Phase(phase_raw)
    except ValueError:
        raise ScenarioInvalid(f"phase must be one of {[p.value for p in Phase]}") from None
    n_sessions = sec.take("n_sessions", int)
    if n_sessions < 2:
        raise ScenarioInvalid("n_sessions must be >= 2")
    path = _parse_path(sec.take("path", dict))

    eeg_sec = _Section(sec.take("eeg", dict, {}), "eeg")
    try:
        eeg = EegConfig(
            channels=tuple(eeg_sec.take("channels", list, list(EegConfig().channels))),
            fs_hz=eeg_sec.take("fs_hz", float, 250.0),
            window_s=eeg_sec.take("window_s", float, 2.0),
            overlap=eeg_sec.take("overlap", float, 0.5),
        )
    except ValueError as exc:
        raise ScenarioInvalid(f"eeg: {exc}") from None
    eeg_sec.done()

    att_sec = _Section(sec.take("attention_sim", dict, {}), "attention_sim")
    attention = AttentionProfile(
        intervals=(),
        d_theta=att_sec.take("d_theta", float, 0.5),
        d_alpha=att_sec.take("d_alpha", float, 0.5),
        amp_theta_uv=att_sec.take("amp_theta_uv", float, 4.0),
        amp_alpha_uv=att_sec.take("amp_alpha_uv", float, 6.0),
        amp_beta_uv=att_sec.take("amp_beta_uv", float, 3.0),
        noise_uv=att_sec.take("noise_uv", float, 10.0),
    )
    att_sec.done()

    links_sec = _Section(sec.take("links", dict, {}), "links")
    link_cfgs = {}
    for name in ("sensor_gateway", "gateway_cloud"):
        link_sec = _Section(links_sec.take(name, dict, {}), f"links.{name}")
        cfg = LinkConfig(
            latency_ms=link_sec.take("latency_ms", float, 30.0 if name == "sensor_gateway" else 80.0),
            jitter_ms=link_sec.take("jitter_ms", float, 10.0 if name == "sensor_gateway" else 20.0),
            loss_rate=link_sec.take("loss_rate", float, 0.0),
        )
        if not 0.0 <= cfg.loss_rate < 1.0:
            raise ScenarioInvalid(f"links.{name}.loss_rate must be in [0, 1)")
        link_sec.done()
        link_cfgs[name] = cfg
    links_sec.done()

    walker_sec = _Section(sec.take("walker", dict, {}), "walker")
    walker = WalkerParams(
        speed_mps=walker_sec.take("speed_mps", float, 1.2),
        lateral_noise_m=walker_sec.take("lateral_noise_m", float, 2.0),
        speed_noise_mps=walker_sec.take("speed_noise_mps", float, 0.1),
        gps_rate_hz=walker_sec.take("gps_rate_hz", float, 1.0),
    )
    walker_sec.done()

    sensors_sec = _Section(sec.take("sensors", dict, {}), "sensors")
    sensors = SensorConfig(
        eeg_batch=sensors_sec.take("eeg_batch", int, 25),
        hr_rate_hz=sensors_sec.take("hr_rate_hz", float, 1.0),
        accel_rate_hz=sensors_sec.take("accel_rate_hz", float, 25.0),
        accel_batch=sensors_sec.take("accel_batch", int, 5),
        step_rate_hz=sensors_sec.take("step_rate_hz", float, 1.8),
        accel_amp_ms2=sensors_sec.take("accel_amp_ms2", float, 2.5),
        battery_capacity_mah=sensors_sec.take("battery_capacity_mah", float, 100.0),
        loads=sensors_sec.take("loads", dict, SensorConfig().loads),
    )
    sensors_sec.done()

    proto_sec = _Section(sec.take("protocol", dict, {}), "protocol")
    policy_raw = proto_sec.take("case_c_policy", str, "noop")
    try:
        policy = CaseCPolicy(policy_raw)
    except ValueError:
        raise ScenarioInvalid(
            f"protocol.case_c_policy must be one of {[p.value for p in CaseCPolicy]}"
        ) from None
    protocol = ProtocolConfig(
        case_c_policy=policy,
        decision_delay_s=proto_sec.take("decision_delay_s", float, 4.0),
        adaptive_plan=proto_sec.take("adaptive_plan", bool, False),
    )
    proto_sec.done()

    metrics_sec = _Section(sec.take("metrics", dict, {}), "metrics")
    metrics = MetricsConfig(
        enabled=metrics_sec.take("enabled", bool, True),
        threshold=metrics_sec.take("threshold", float, 0.5),
        sigma_rewires=metrics_sec.take("sigma_rewires", int, 20),
    )
    metrics_sec.done()

    learner_sec = _Section(sec.take("learner", dict, {}), "learner")
    feature_source = learner_sec.take("feature_source", str, "band_power")
    if feature_source not in ("band_power", "band_power_graph"):
        raise ScenarioInvalid("learner.feature_source must be band_power or band_power_graph")
    learner = LearnerConfig(feature_source=feature_source)
    learner_sec.done()

    task2 = tuple(
        _parse_disturbance(d, f"task2[{i}]") for i, d in enumerate(sec.take("task2", list, []))
    )

    seed_sets_raw = sec.take("seed_sets", dict)
    seed_sets = {}
    for name, seeds in seed_sets_raw.items():
        seeds_sec = _Section(seeds, f"seed_sets.{name}")
        seed_sets[name] = {k: seeds_sec.take(k, int) for k in REQUIRED_SEEDS}
        seeds_sec.done()
    if "default" not in seed_sets:
        raise ScenarioInvalid("seed_sets must include 'default'")
    sec.done()

    return Scenario(
        id=scenario_id,
        path=path,
        participant=participant,
        phase=phase,
        n_sessions=n_sessions,
        eeg=eeg,
        attention=attention,
        link_sensor=link_cfgs["sensor_gateway"],
        link_cloud=link_cfgs["gateway_cloud"],
        walker=walker,
        sensors=sensors,
        protocol=protocol,
        metrics=metrics,
        learner=learner,
        task2=task2,
        seed_sets=seed_sets,
        content_hash=content_hash,
    )


def load_scenario_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read())
