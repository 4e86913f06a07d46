"""Geospatial primitives, route model, proximity checks and walking metrics.

Distances use a spherical earth (R = 6,371,000 m). Point-to-route distances
are computed in a local planar (equirectangular) frame anchored at the route;
for routes capped at 3 km the projection error is below a centimetre.
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import EmptyTrajectory, InsufficientSamples, StimulusOutOfRange
from .kernels import count_peaks, polyline_min_dist

EARTH_RADIUS_M = 6_371_000.0
MAX_PATH_LENGTH_M = 3_000.0

DEFAULT_PLACE_RADIUS_M = 20.0  # consumer-GPS urban accuracy
STEP_THRESHOLD_MS2 = 11.0
STEP_REFRACTORY_S = 0.3
SPEED_CHANGE_THRESHOLD_MPS = 0.3
SPEED_SMOOTH_WINDOW = 3


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError("GeoPoint coordinates must be finite")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of [-180, 180]")


class PlaceKind(Enum):
    LANDMARK = "landmark"
    NON_RELEVANT = "non_relevant"
    START = "start"
    DESTINATION = "destination"


@dataclass(frozen=True)
class Place:
    id: str
    kind: PlaceKind
    center: GeoPoint
    radius_m: float = DEFAULT_PLACE_RADIUS_M
    index: int = 0  # 1-based visiting order, landmarks only

    def __post_init__(self):
        if self.radius_m <= 0:
            raise ValueError("place radius must be positive")
        if self.kind is PlaceKind.LANDMARK and self.index < 1:
            raise ValueError("landmark index must be 1-based")


@dataclass(frozen=True)
class PathSpec:
    id: str
    start: Place
    destination: Place
    landmarks: tuple
    non_relevant: tuple
    polyline: tuple

    def __post_init__(self):
        if len(self.polyline) < 2:
            raise ValueError("polyline needs at least 2 points")
        indices = [p.index for p in self.landmarks]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError("landmark indices must form a contiguous 1..K sequence")
        length = self.length_m()
        if length > MAX_PATH_LENGTH_M:
            raise ValueError(f"polyline length {length:.1f} m exceeds {MAX_PATH_LENGTH_M:.0f} m")
        self._check_no_overlap()
        self._check_landmark_order()

    def length_m(self):
        return sum(
            haversine_distance(a, b) for a, b in zip(self.polyline, self.polyline[1:])
        )

    def places(self):
        """All geofenced places, landmarks first in index order."""
        return tuple(self.landmarks) + tuple(self.non_relevant) + (self.start, self.destination)

    def place_by_id(self, place_id):
        for p in self.places():
            if p.id == place_id:
                return p
        return None

    def _check_no_overlap(self):
        circles = list(self.landmarks) + list(self.non_relevant)
        for i, a in enumerate(circles):
            for b in circles[i + 1 :]:
                if haversine_distance(a.center, b.center) <= a.radius_m + b.radius_m:
                    raise ValueError(f"place radii overlap: {a.id} / {b.id}")

    def _check_landmark_order(self):
        """The route must dip inside each landmark radius, in index order."""
        ref = self.polyline[0]
        vx, vy = _to_planar(self.polyline, ref)
        seg_len = np.hypot(np.diff(vx), np.diff(vy))
        arc0 = np.concatenate([[0.0], np.cumsum(seg_len)])
        last_entry = -1.0
        for lm in self.landmarks:
            cx, cy = _to_planar([lm.center], ref)
            entry = _first_arc_within(cx[0], cy[0], lm.radius_m, vx, vy, arc0)
            if entry is None:
                raise ValueError(f"polyline never enters landmark {lm.id}")
            if entry < last_entry:
                raise ValueError(f"landmarks not in index order along polyline ({lm.id})")
            last_entry = entry


@dataclass(frozen=True)
class Trajectory:
    samples: tuple  # of (timestamp_s, GeoPoint)

    def __post_init__(self):
        ts = [t for t, _ in self.samples]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("trajectory timestamps must be strictly increasing")

    def __len__(self):
        return len(self.samples)

    def _arrays(self):
        cached = self.__dict__.get("_cache")
        if cached is None:
            cached = (
                np.array([t for t, _ in self.samples], dtype=np.float64),
                np.array([p.lat for _, p in self.samples], dtype=np.float64),
                np.array([p.lon for _, p in self.samples], dtype=np.float64),
            )
            object.__setattr__(self, "_cache", cached)
        return cached

    def timestamps(self):
        return self._arrays()[0]

    def points(self):
        return [p for _, p in self.samples]

    def span(self):
        return self.samples[0][0], self.samples[-1][0]

    def interp_latlon(self, ts_array):
        """Vectorized linear interpolation (lat, lon arrays) for in-span times."""
        times, lat, lon = self._arrays()
        ts_array = np.asarray(ts_array, dtype=np.float64)
        return np.interp(ts_array, times, lat), np.interp(ts_array, times, lon)

    def position_at(self, ts):
        """Linearly interpolated position at `ts` (must lie within the span)."""
        t0, t1 = self.span()
        if not t0 <= ts <= t1:
            raise StimulusOutOfRange(f"time {ts} outside trajectory span [{t0}, {t1}]")
        times, lat, lon = self._arrays()
        return GeoPoint(float(np.interp(ts, times, lat)), float(np.interp(ts, times, lon)))


@dataclass(frozen=True)
class BehavioralReport:
    path_efficiency_m: float  # max deviation from the ideal route
    peak_speed_mps: float
    reaction_times_s: dict = field(default_factory=dict)  # stimulus id -> seconds or None
    step_count: int = 0
    completion_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.completion_rate <= 1.0:
            raise ValueError("completion_rate must be in [0, 1]")
        for name, value in (
            ("path_efficiency_m", self.path_efficiency_m),
            ("peak_speed_mps", self.peak_speed_mps),
        ):
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0")
        if self.step_count < 0:
            raise ValueError("step_count must be >= 0")


def haversine_distance(a, b):
    """Great-circle distance in meters between two points."""
    lat1, lat2 = math.radians(a.lat), math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.atan2(math.sqrt(h), math.sqrt(1 - h))


def haversine_to_center(lat_arr, lon_arr, center):
    """Vectorized great-circle distances from (lat, lon) arrays to one point."""
    lat1 = np.radians(np.asarray(lat_arr, dtype=np.float64))
    lon1 = np.radians(np.asarray(lon_arr, dtype=np.float64))
    lat2 = math.radians(center.lat)
    dlat = lat2 - lat1
    dlon = math.radians(center.lon) - lon1
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * math.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arctan2(np.sqrt(h), np.sqrt(1 - h))


def inside_any_landmark(traj, path, ts_array):
    """Boolean mask: interpolated position within any landmark radius."""
    lat, lon = traj.interp_latlon(ts_array)
    inside = np.zeros(len(lat), dtype=bool)
    for lm in path.landmarks:
        inside |= haversine_to_center(lat, lon, lm.center) <= lm.radius_m
    return inside


def is_within(pos, place):
    """Inclusive geofence test: on the boundary counts as inside."""
    return haversine_distance(pos, place.center) <= place.radius_m


def _to_planar(points, ref):
    """Project lat/lon points to meters east/north of `ref` (equirectangular)."""
    lat = np.array([p.lat for p in points], dtype=np.float64)
    lon = np.array([p.lon for p in points], dtype=np.float64)
    x = np.radians(lon - ref.lon) * math.cos(math.radians(ref.lat)) * EARTH_RADIUS_M
    y = np.radians(lat - ref.lat) * EARTH_RADIUS_M
    return x, y


def _from_planar(x, y, ref):
    lat = ref.lat + math.degrees(y / EARTH_RADIUS_M)
    lon = ref.lon + math.degrees(x / (EARTH_RADIUS_M * math.cos(math.radians(ref.lat))))
    return GeoPoint(lat, lon)


def _first_arc_within(cx, cy, radius, vx, vy, arc0):
    """Earliest arc position where the polyline is within `radius` of (cx, cy)."""
    for j in range(len(vx) - 1):
        dx, dy = vx[j + 1] - vx[j], vy[j + 1] - vy[j]
        seg2 = dx * dx + dy * dy
        if seg2 == 0.0:
            t = 0.0
        else:
            t = min(max(((cx - vx[j]) * dx + (cy - vy[j]) * dy) / seg2, 0.0), 1.0)
        ex, ey = cx - (vx[j] + t * dx), cy - (vy[j] + t * dy)
        if math.hypot(ex, ey) <= radius:
            return arc0[j] + t * math.sqrt(seg2)
    return None


def min_route_distances(traj, path):
    """Distance from every trajectory sample to the nearest point of the route."""
    if len(traj) == 0:
        raise EmptyTrajectory("trajectory has no samples")
    ref = path.polyline[0]
    px, py = _to_planar(traj.points(), ref)
    vx, vy = _to_planar(path.polyline, ref)
    return polyline_min_dist(px, py, vx, vy)


def max_path_deviation(traj, path):
    """Largest distance any sample strays from the ideal route, meters."""
    return float(np.max(min_route_distances(traj, path)))


def smoothed_speeds(traj):
    """Per-sample speed (m/s), 3-sample moving average.

    speeds[i] is the smoothed speed of arrival at sample i; speeds[0]
    duplicates speeds[1].
    """
    if len(traj) < 2:
        raise InsufficientSamples("need at least 2 samples for speeds")
    pts = traj.points()
    ts = traj.timestamps()
    raw = np.array(
        [haversine_distance(a, b) for a, b in zip(pts, pts[1:])], dtype=np.float64
    ) / np.diff(ts)
    half = SPEED_SMOOTH_WINDOW // 2
    smooth = np.array(
        [raw[max(0, i - half) : i + half + 1].mean() for i in range(len(raw))]
    )
    return np.concatenate([[smooth[0]], smooth])


def peak_speed(traj):
    """Max smoothed speed over the trajectory, m/s."""
    return float(np.max(smoothed_speeds(traj)))


def _speed_at(ts_array, speeds, t):
    i = int(np.searchsorted(ts_array, t, side="right")) - 1
    return speeds[min(max(i, 0), len(speeds) - 1)]


def reaction_time(stimulus_ts, traj, ack_ts=None):
    """Seconds from a stimulus to the first reaction, or None if no reaction.

    Reaction = explicit acknowledgment or a smoothed-speed change above
    0.3 m/s relative to the speed at stimulus time, whichever is earlier.
    """
    t0, t1 = traj.span()
    if not t0 <= stimulus_ts <= t1:
        raise StimulusOutOfRange(f"stimulus at {stimulus_ts} outside [{t0}, {t1}]")
    ts = traj.timestamps()
    speeds = smoothed_speeds(traj)
    baseline = _speed_at(ts, speeds, stimulus_ts)
    candidates = []
    if ack_ts is not None and ack_ts >= stimulus_ts:
        candidates.append(ack_ts - stimulus_ts)
    after = np.flatnonzero(ts > stimulus_ts)
    for i in after:
        if abs(speeds[i] - baseline) > SPEED_CHANGE_THRESHOLD_MPS:
            candidates.append(ts[i] - stimulus_ts)
            break
    return min(candidates) if candidates else None


def completion_rate(traj, path, ordered=True):
    """Fraction of landmarks visited by the trajectory.

    Ordered mode credits landmark k only once 1..k-1 have been credited;
    unordered mode credits any entry into a landmark radius.
    """
    landmarks = path.landmarks
    if not landmarks:
        return 0.0
    if len(traj) == 0:
        return 0.0
    visited = set()
    next_ordered = 1
    for _, pos in traj.samples:
        for lm in landmarks:
            if ordered:
                if lm.index == next_ordered and is_within(pos, lm):
                    visited.add(lm.index)
                    next_ordered += 1
            elif is_within(pos, lm):
                visited.add(lm.index)
    return len(visited) / len(landmarks)


def step_count(samples, threshold=STEP_THRESHOLD_MS2, refractory_s=STEP_REFRACTORY_S):
    """Steps in an accelerometer-magnitude series of (timestamp_s, m/s^2)."""
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        return 0
    return int(count_peaks(arr[:, 1], arr[:, 0], threshold, refractory_s))
