"""Synthetic EEG stream, windowing, band-power features and GPS-driven
window labeling.

The generator mixes pink-ish background noise with per-band sinusoids whose
amplitudes are modulated by a piecewise-constant attention indicator:
attention raises frontal theta and suppresses occipital alpha. Everything is
deterministic given (config, profile, seed).
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import BandOutOfRange, StreamTooShort, TimestampOutOfRange
from .geo import inside_any_landmark
from .kernels import pink_filter
from .protocol import AttentionLabel

# Electrode labels of the 10-20 montage plus the common 10-10 extensions.
MONTAGE_LABELS = frozenset(
    "Fp1 Fp2 Fpz AF3 AF4 AF7 AF8 AFz F1 F2 F3 F4 F5 F6 F7 F8 F9 F10 Fz "
    "FC1 FC2 FC3 FC4 FC5 FC6 FCz FT7 FT8 FT9 FT10 "
    "C1 C2 C3 C4 C5 C6 Cz T3 T4 T5 T6 T7 T8 TP7 TP8 TP9 TP10 "
    "CP1 CP2 CP3 CP4 CP5 CP6 CPz P1 P2 P3 P4 P5 P6 P7 P8 P9 P10 Pz "
    "PO3 PO4 PO7 PO8 POz O1 O2 Oz Iz A1 A2 M1 M2".split()
)

DEFAULT_CHANNELS = ("Fp1", "Fp2", "C3", "C4", "P3", "P4", "O1", "O2")

# Oscillator frequency used for each named band's sinusoid component.
BAND_TONE_HZ = {"theta": 6.0, "alpha": 10.0, "beta": 20.0}


@dataclass(frozen=True)
class Band:
    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0.0 < self.lo_hz < self.hi_hz:
            raise ValueError(f"band {self.name}: need 0 < lo < hi")


DEFAULT_BANDS = (Band("theta", 4.0, 8.0), Band("alpha", 8.0, 13.0), Band("beta", 13.0, 30.0))


@dataclass(frozen=True)
class EegConfig:
    channels: tuple = DEFAULT_CHANNELS
    fs_hz: float = 250.0
    window_s: float = 2.0
    overlap: float = 0.5
    bands: tuple = DEFAULT_BANDS

    def __post_init__(self):
        unknown = [c for c in self.channels if c not in MONTAGE_LABELS]
        if unknown:
            raise ValueError(f"channels not in the 10-20/10-10 montage: {unknown}")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("duplicate channel labels")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError("overlap must be in [0, 1)")
        top = max(b.hi_hz for b in self.bands)
        if self.fs_hz <= 2 * top:
            raise ValueError(f"fs {self.fs_hz} must exceed twice the top band edge {top}")

    @property
    def window_samples(self):
        return int(round(self.fs_hz * self.window_s))

    @property
    def hop_samples(self):
        hop = int(round(self.window_samples * (1.0 - self.overlap)))
        return max(hop, 1)


@dataclass(frozen=True)
class AttentionProfile:
    """Ground-truth attention indicator (union of [t0, t1) intervals) and the
    band modulation depths applied while it is on."""

    intervals: tuple = ()
    d_theta: float = 0.5  # frontal theta amplitude x (1 + d)
    d_alpha: float = 0.5  # occipital alpha amplitude x (1 - d)
    amp_theta_uv: float = 4.0
    amp_alpha_uv: float = 6.0
    amp_beta_uv: float = 3.0
    noise_uv: float = 10.0

    def indicator(self, ts):
        return any(t0 <= ts < t1 for t0, t1 in self.intervals)

    def indicator_array(self, ts):
        out = np.zeros(len(ts), dtype=bool)
        for t0, t1 in self.intervals:
            out |= (ts >= t0) & (ts < t1)
        return out


@dataclass
class EegWindow:
    start_ts: float
    fs_hz: float
    samples: np.ndarray  # channels x n
    label: AttentionLabel | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("EEG window contains non-finite samples")

    @property
    def duration_s(self):
        return self.samples.shape[1] / self.fs_hz

    @property
    def mid_ts(self):
        return self.start_ts + self.duration_s / 2.0

    @property
    def end_ts(self):
        return self.start_ts + self.duration_s


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    ts: float
    names: tuple = ()


@dataclass(frozen=True)
class EegStream:
    t0: float
    fs_hz: float
    channels: tuple
    samples: np.ndarray  # channels x n

    @property
    def duration_s(self):
        return self.samples.shape[1] / self.fs_hz

    def times(self):
        return self.t0 + np.arange(self.samples.shape[1]) / self.fs_hz


def is_frontal(label):
    u = label.upper()
    return u.startswith(("FP", "AF")) or (u.startswith("F") and not u.startswith(("FC", "FT")))


def is_occipital(label):
    u = label.upper()
    return u.startswith(("O", "PO", "IZ"))


def generate_eeg(config, profile, duration_s, seed, t0=0.0):
    """Synthesize a multichannel stream: pink noise + theta/alpha/beta tones,
    attention-modulated on frontal theta and occipital alpha."""
    n = int(round(duration_s * config.fs_hz))
    if n <= 0:
        raise ValueError("duration too short for one sample")
    rng = np.random.default_rng(seed)
    t = t0 + np.arange(n) / config.fs_hz
    att = profile.indicator_array(t)
    amps = {
        "theta": profile.amp_theta_uv,
        "alpha": profile.amp_alpha_uv,
        "beta": profile.amp_beta_uv,
    }
    data = np.empty((len(config.channels), n), dtype=np.float64)
    for ci, ch in enumerate(config.channels):
        white = rng.normal(0.0, 1.0, n)
        pink = pink_filter(white)
        std = pink.std()
        x = pink * (profile.noise_uv / std) if std > 0 else pink
        for band_name, freq in BAND_TONE_HZ.items():
            phase = rng.uniform(0.0, 2.0 * math.pi)
            envelope = np.full(n, amps[band_name])
            if band_name == "theta" and is_frontal(ch):
                envelope = envelope * np.where(att, 1.0 + profile.d_theta, 1.0)
            elif band_name == "alpha" and is_occipital(ch):
                envelope = envelope * np.where(att, 1.0 - profile.d_alpha, 1.0)
            x = x + envelope * np.sin(2.0 * math.pi * freq * t + phase)
        data[ci] = x
    return EegStream(t0=t0, fs_hz=config.fs_hz, channels=tuple(config.channels), samples=data)


def window_stream(stream, config):
    """Cut a stream into overlapping fixed-length windows (trailing partial
    window dropped)."""
    w = config.window_samples
    hop = config.hop_samples
    n = stream.samples.shape[1]
    if n < w:
        raise StreamTooShort(f"{n} samples < one {w}-sample window")
    count = (n - w) // hop + 1
    out = []
    for i in range(count):
        a = i * hop
        out.append(
            EegWindow(
                start_ts=stream.t0 + a / stream.fs_hz,
                fs_hz=stream.fs_hz,
                samples=stream.samples[:, a : a + w],
            )
        )
    return out


def spectrum_power(samples, fs_hz, lo_hz, hi_hz):
    """Hann-tapered periodogram power in [lo, hi) per channel, normalized so
    the total over a full partition equals the tapered signal's mean square.

    hi == fs/2 additionally includes the Nyquist bin, so contiguous bands
    ending there tile the whole spectrum.
    """
    if not 0.0 <= lo_hz < hi_hz or hi_hz > fs_hz / 2.0 + 1e-12:
        raise BandOutOfRange(f"band [{lo_hz}, {hi_hz}) invalid for fs {fs_hz}")
    x = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    n = x.shape[1]
    taper = np.hanning(n)
    spec = np.fft.rfft(x * taper, axis=1)
    power = (np.abs(spec) ** 2) / (n * n)
    coeff = np.full(power.shape[1], 2.0)
    coeff[0] = 1.0
    if n % 2 == 0:
        coeff[-1] = 1.0
    power = power * coeff
    freqs = np.fft.rfftfreq(n, 1.0 / fs_hz)
    mask = (freqs >= lo_hz) & (freqs < hi_hz)
    if hi_hz >= fs_hz / 2.0 - 1e-12:
        mask |= np.isclose(freqs, fs_hz / 2.0)
    return power[:, mask].sum(axis=1)


def band_power(window, band):
    """Per-channel mean power (uV^2) of `window` within `band`."""
    return spectrum_power(window.samples, window.fs_hz, band.lo_hz, band.hi_hz)


def feature_names(config, bands=None):
    bands = bands or config.bands
    return tuple(f"{ch}:{b.name}" for ch in config.channels for b in bands)


def extract_features(window, config, bands=None):
    """Concatenate band powers channel-major into a FeatureVector."""
    bands = bands or config.bands
    powers = np.stack([band_power(window, b) for b in bands], axis=1)  # ch x band
    return FeatureVector(
        values=powers.reshape(-1), ts=window.start_ts, names=feature_names(config, bands)
    )


def window_label(traj, path, start_ts, end_ts, straddle_grid=21, straddle_frac=0.25):
    """Label for a window by its midpoint position; None when the window
    straddles a landmark-radius transition by more than `straddle_frac`.

    The probe grid is odd so its center probe is exactly the midpoint.
    """
    t0, t1 = traj.span()
    if start_ts < t0 or end_ts > t1:
        raise TimestampOutOfRange(
            f"window [{start_ts}, {end_ts}] outside trajectory span [{t0}, {t1}]"
        )
    probes = np.linspace(start_ts, end_ts, straddle_grid)
    inside = inside_any_landmark(traj, path, probes)
    frac = inside.mean()
    if min(frac, 1.0 - frac) > straddle_frac:
        return None
    if inside[straddle_grid // 2]:
        return AttentionLabel.ATTENTION
    return AttentionLabel.NON_ATTENTION


def label_windows(windows, traj, path):
    """GPS-label windows; transition-straddling windows are dropped."""
    out = []
    for w in windows:
        label = window_label(traj, path, w.start_ts, w.end_ts)
        if label is not None:
            out.append(replace(w, label=label))
    return out
