"""Numpy/scipy implementations of the hot kernels.

Used when the compiled extension is unavailable (or forced off via
ACTA_PURE_PYTHON=1). Each function mirrors the arithmetic of its compiled
twin operation-for-operation so both backends agree to the last bit.
"""

import numpy as np
from scipy.signal import lfilter

# Three-pole pinking filter (summed first-order sections), fixed coefficients.
_PINK_POLES = (0.99765, 0.96300, 0.57000)
_PINK_GAINS = (0.0990460, 0.2965164, 1.0526913)
_PINK_DIRECT = 0.1848


def pink_filter(white):
    """Filter a white-noise array into pink-ish noise (1/f-leaning PSD)."""
    white = np.asarray(white, dtype=np.float64)
    y0 = lfilter([_PINK_GAINS[0]], [1.0, -_PINK_POLES[0]], white)
    y1 = lfilter([_PINK_GAINS[1]], [1.0, -_PINK_POLES[1]], white)
    y2 = lfilter([_PINK_GAINS[2]], [1.0, -_PINK_POLES[2]], white)
    return ((y0 + y1) + y2) + _PINK_DIRECT * white


def polyline_min_dist(px, py, vx, vy):
    """Min distance from each point (px, py) to a polyline (vx, vy).

    All coordinates are planar meters. Zero-length segments collapse to
    their first vertex.
    """
    px = np.asarray(px, dtype=np.float64)[:, None]
    py = np.asarray(py, dtype=np.float64)[:, None]
    vx = np.asarray(vx, dtype=np.float64)
    vy = np.asarray(vy, dtype=np.float64)
    ax, ay = vx[None, :-1], vy[None, :-1]
    dx, dy = (vx[1:] - vx[:-1])[None, :], (vy[1:] - vy[:-1])[None, :]
    seg2 = dx * dx + dy * dy
    with np.errstate(divide="ignore", invalid="ignore"):
        t = ((px - ax) * dx + (py - ay) * dy) / seg2
    t = np.where(seg2 == 0.0, 0.0, np.clip(t, 0.0, 1.0))
    ex = px - (ax + t * dx)
    ey = py - (ay + t * dy)
    return np.sqrt(np.min(ex * ex + ey * ey, axis=1))


def count_peaks(values, ts, threshold, refractory_s):
    """Count local maxima above `threshold` at least `refractory_s` apart."""
    values = np.asarray(values, dtype=np.float64)
    ts = np.asarray(ts, dtype=np.float64)
    n = values.shape[0]
    if n < 3:
        return 0
    mid = values[1:-1]
    cand = np.flatnonzero((mid > values[:-2]) & (mid >= values[2:]) & (mid > threshold)) + 1
    count = 0
    last_ts = -np.inf
    for i in cand:
        if ts[i] - last_ts >= refractory_s:
            count += 1
            last_ts = ts[i]
    return count
