"""Synthetic participant: walks the route one-way at the GPS sampling rate
with Gaussian speed and lateral noise, slowing briefly after disturbances.

Positions are quantized to 1e-8 degrees at generation so every consumer of
the trajectory (GPS agent, labeler, log, replay) sees identical values.
"""

import math

import numpy as np

from .geo import GeoPoint, Trajectory, _from_planar, _to_planar

DISTURBANCE_SLOWDOWN_S = 3.0
DISTURBANCE_SPEED_FACTOR = 0.5
MIN_SPEED_MPS = 0.05


def _quantize(p):
    return GeoPoint(round(p.lat, 8), round(p.lon, 8))


class _RoutePosition:
    """Arc-length position lookup along a planar-projected polyline."""

    def __init__(self, polyline):
        self.ref = polyline[0]
        self.vx, self.vy = _to_planar(polyline, self.ref)
        seg = np.hypot(np.diff(self.vx), np.diff(self.vy))
        self.arc0 = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.arc0[-1])

    def at(self, arc, lateral=0.0):
        arc = min(max(arc, 0.0), self.length)
        j = int(np.searchsorted(self.arc0, arc, side="right")) - 1
        j = min(max(j, 0), len(self.vx) - 2)
        seg_len = self.arc0[j + 1] - self.arc0[j]
        f = (arc - self.arc0[j]) / seg_len if seg_len > 0 else 0.0
        x = self.vx[j] + f * (self.vx[j + 1] - self.vx[j])
        y = self.vy[j] + f * (self.vy[j + 1] - self.vy[j])
        if lateral != 0.0 and seg_len > 0:
            dx = (self.vx[j + 1] - self.vx[j]) / seg_len
            dy = (self.vy[j + 1] - self.vy[j]) / seg_len
            x += -dy * lateral
            y += dx * lateral
        return _from_planar(x, y, self.ref)


def simulate_walker(path, params, seed, disturbances=()):
    """One-way walk along the route; returns the Trajectory (terminates on the
    destination center)."""
    route = _RoutePosition(path.polyline)
    rng = np.random.default_rng(seed)
    dt = 1.0 / params.gps_rate_hz
    slow_windows = [
        (d.trigger_ts_offset_s, d.trigger_ts_offset_s + DISTURBANCE_SLOWDOWN_S)
        for d in disturbances
    ]
    samples = [(0.0, _quantize(route.at(0.0)))]
    t = 0.0
    arc = 0.0
    lateral = 0.0
    rho = 0.9  # GPS error is strongly correlated between consecutive fixes
    innovation = math.sqrt(1.0 - rho * rho)
    while arc < route.length:
        t += dt
        speed = params.speed_mps
        if params.speed_noise_mps > 0:
            speed += rng.normal(0.0, params.speed_noise_mps)
        if any(a <= t < b for a, b in slow_windows):
            speed *= DISTURBANCE_SPEED_FACTOR
        speed = max(speed, MIN_SPEED_MPS)
        arc += speed * dt
        if arc >= route.length:
            samples.append((t, _quantize(route.at(route.length))))
            break
        if params.lateral_noise_m > 0:
            lateral = rho * lateral + innovation * rng.normal(0.0, params.lateral_noise_m)
        samples.append((t, _quantize(route.at(arc, lateral))))
    return Trajectory(tuple(samples))


def attention_intervals(traj, path):
    """Ground-truth attention spans: sample-resolution intervals while the
    walker is inside any landmark radius."""
    from .geo import is_within

    ts = [t for t, _ in traj.samples]
    inside = [
        any(is_within(pos, lm) for lm in path.landmarks) for _, pos in traj.samples
    ]
    intervals = []
    start = None
    for i, flag in enumerate(inside):
        if flag and start is None:
            start = ts[i]
        elif not flag and start is not None:
            intervals.append((start, ts[i]))
            start = None
    if start is not None:
        intervals.append((start, ts[-1] + (ts[-1] - ts[-2] if len(ts) > 1 else 1.0)))
    return tuple(intervals)
