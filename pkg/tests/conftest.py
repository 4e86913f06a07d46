import math

import numpy as np
import pytest

from acta.geo import GeoPoint, PathSpec, Place, PlaceKind, Trajectory

# Degrees of latitude per meter travelled north on the R=6371km sphere.
DEG_PER_M_LAT = 1.0 / (6_371_000.0 * math.pi / 180.0)

BASE = GeoPoint(45.0, 9.0)


def deg_per_m_lon(lat):
    return 1.0 / (6_371_000.0 * math.cos(math.radians(lat)) * math.pi / 180.0)


def point_north(origin, meters_north, meters_east=0.0):
    """Offset a point by meters in the local planar frame."""
    return GeoPoint(
        origin.lat + meters_north * DEG_PER_M_LAT,
        origin.lon + meters_east * deg_per_m_lon(origin.lat),
    )


def meridian_path(
    path_id="test-path",
    length_m=400.0,
    n_landmarks=4,
    radius_m=20.0,
    n_non_relevant=2,
    origin=BASE,
    n_vertices=9,
):
    """Straight northbound route with evenly spaced landmarks.

    Non-relevant places sit halfway between consecutive landmarks, offset a
    few meters east so the circles stay disjoint from the landmark circles.
    """
    start = Place("start", PlaceKind.START, origin, radius_m)
    dest_center = point_north(origin, length_m)
    dest = Place("dest", PlaceKind.DESTINATION, dest_center, radius_m)
    landmarks = []
    lm_arcs = []
    for k in range(1, n_landmarks + 1):
        arc = length_m * k / (n_landmarks + 1)
        lm_arcs.append(arc)
        landmarks.append(
            Place(f"lm{k}", PlaceKind.LANDMARK, point_north(origin, arc), radius_m, index=k)
        )
    non_relevant = []
    for j in range(n_non_relevant):
        if j + 1 >= len(lm_arcs):
            break
        arc = (lm_arcs[j] + lm_arcs[j + 1]) / 2.0
        gap = (lm_arcs[j + 1] - lm_arcs[j]) / 2.0
        nr_radius = min(0.75 * radius_m, gap - radius_m - 2.0)
        if nr_radius <= 2.0:
            continue  # route too dense to fit an on-route distractor
        non_relevant.append(
            Place(
                f"nr{j + 1}",
                PlaceKind.NON_RELEVANT,
                point_north(origin, arc),
                nr_radius,
            )
        )
    polyline = tuple(
        point_north(origin, length_m * i / (n_vertices - 1)) for i in range(n_vertices)
    )
    return PathSpec(path_id, start, dest, tuple(landmarks), tuple(non_relevant), polyline)


def trajectory_along(path, speed_mps=1.0, dt_s=1.0, lateral_m=0.0, rng=None):
    """Walk the (meridian) route at constant speed, optional lateral noise."""
    origin = path.polyline[0]
    length = path.length_m()
    samples = []
    t = 0.0
    arc = 0.0
    while arc < length:
        lateral = lateral_m if rng is None else rng.normal(0.0, lateral_m)
        samples.append((t, point_north(origin, arc, meters_east=lateral)))
        t += dt_s
        arc += speed_mps * dt_s
    samples.append((t, point_north(origin, length)))
    return Trajectory(tuple(samples))


@pytest.fixture
def path4():
    return meridian_path()


@pytest.fixture
def rng():
    return np.random.default_rng(20260809)


# ------------------------------------------------------------ scenario text

def scenario_yaml(
    phase="phase1",
    n_sessions=2,
    length_m=160.0,
    landmarks=(40.0, 80.0, 120.0),
    non_relevant=(60.0, 100.0),
    radius_m=10.0,
    nr_radius_m=7.0,
    speed=1.5,
    loss=0.0,
    metrics_enabled=False,
    channels=("Fp1", "Fp2", "O1", "O2"),
    fs=100.0,
    eeg_batch=10,
    d_theta=0.5,
    d_alpha=0.5,
    seeds=None,
    task2=(),
    extra_protocol="",
):
    """Small fast scenario document for harness tests."""
    seeds = seeds or {}
    base = {"walker": 11, "eeg": 22, "protocol": 33, "link_sensor": 44,
            "link_cloud": 55, "physio": 66, "metrics": 77}
    base.update(seeds)
    lm_lines = "\n".join(
        f"    - {{id: lm{i}, lat: {45.0 + m * DEG_PER_M_LAT:.8f}, lon: 9.0, radius_m: {radius_m}}}"
        for i, m in enumerate(landmarks, 1)
    )
    nr_lines = "\n".join(
        f"    - {{id: nr{i}, lat: {45.0 + m * DEG_PER_M_LAT:.8f}, lon: 9.0, radius_m: {nr_radius_m}}}"
        for i, m in enumerate(non_relevant, 1)
    )
    n_vertices = 5
    poly = "\n".join(
        f"    - [{45.0 + (length_m * i / (n_vertices - 1)) * DEG_PER_M_LAT:.8f}, 9.0]"
        for i in range(n_vertices)
    )
    task_lines = "\n".join(
        f"  - {{offset_s: {off}, payload: \"{payload}\", response_deadline_s: 10.0}}"
        for off, payload in task2
    )
    return f"""version: 1
id: mini
participant:
  id: p001
  age_years: 72
  mci_diagnosed: true
  informatics_entry_level: true
  exclusions: []
phase: {phase}
n_sessions: {n_sessions}
path:
  id: mini-route
  start: {{id: start, lat: 45.0, lon: 9.0, radius_m: {radius_m}}}
  destination: {{id: dest, lat: {45.0 + length_m * DEG_PER_M_LAT:.8f}, lon: 9.0, radius_m: {radius_m}}}
  landmarks:
{lm_lines}
  non_relevant:
{nr_lines}
  polyline:
{poly}
eeg:
  channels: [{', '.join(channels)}]
  fs_hz: {fs}
  window_s: 2.0
  overlap: 0.5
attention_sim:
  d_theta: {d_theta}
  d_alpha: {d_alpha}
links:
  sensor_gateway: {{latency_ms: 30.0, jitter_ms: 10.0, loss_rate: {loss}}}
  gateway_cloud: {{latency_ms: 80.0, jitter_ms: 20.0, loss_rate: {loss}}}
walker:
  speed_mps: {speed}
  lateral_noise_m: 1.5
  speed_noise_mps: 0.1
sensors:
  eeg_batch: {eeg_batch}
metrics:
  enabled: {str(metrics_enabled).lower()}
{extra_protocol}task2:
{task_lines if task_lines else '  []' if not task2 else ''}
seed_sets:
  default: {{walker: {base['walker']}, eeg: {base['eeg']}, protocol: {base['protocol']}, link_sensor: {base['link_sensor']}, link_cloud: {base['link_cloud']}, physio: {base['physio']}, metrics: {base['metrics']}}}
"""
