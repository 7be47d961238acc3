"""Signal processing for touch reactions and walking motion.

Touch side: the scalar magnitudes of acceleration and angular velocity are
compared against a pre-touch baseline to measure how hard a touch shakes
and rotates the device.

Motion side: raw device-frame acceleration is aligned to the gravity axis,
band-pass filtered around human gait frequencies, split into vertical and
horizontal components, segmented into steps at upward zero crossings, and
integrated per step. All filters are causal (forward-only) so the pipeline
can run on a live stream; per-step aggregates tolerate the phase lag.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DspConfig
from .trace import ImuSeries, TouchEvent

GRAVITY = 9.81


class DspError(Exception):
    pass


@dataclass(frozen=True)
class EarthAccel:
    """Earth-frame acceleration stream: gravity removed from the vertical
    axis, horizontal heading arbitrary (only its magnitude is used)."""
    t: np.ndarray        # ms
    north: np.ndarray
    east: np.ndarray
    vertical: np.ndarray


@dataclass(frozen=True)
class Step:
    t_start: int
    t_end: int
    i_start: int   # index range into the filtered series
    i_end: int     # exclusive

    @property
    def duration_ms(self) -> int:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class ReactionFeatures:
    vibration: float   # mean |F_tap - baseline|, m/s^2
    rotation: float    # mean |AV_tap - baseline|, rad/s


def magnitude3(v) -> float:
    """Euclidean norm of a 3-vector."""
    v = np.asarray(v, dtype=np.float64)
    return float(math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))


def magnitudes(rows: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean norms of an (n, 3) array."""
    return np.sqrt(np.einsum("ij,ij->i", rows, rows))


def _one_pole_alpha(cutoff_hz: float, fs: float) -> float:
    rc = 1.0 / (2.0 * math.pi * cutoff_hz)
    dt = 1.0 / fs
    return dt / (rc + dt)


def lowpass_stream(x: np.ndarray, cutoff_hz: float, fs: float,
                   init: np.ndarray | None = None) -> np.ndarray:
    """Causal first-order low-pass along axis 0; init seeds the filter state."""
    a = _one_pole_alpha(cutoff_hz, fs)
    x = np.asarray(x, dtype=np.float64)
    flat = x.ndim == 1
    cols = x[:, None] if flat else x
    y = np.empty_like(cols)
    state0 = cols[0] if init is None else np.asarray(init, dtype=np.float64)
    for j in range(cols.shape[1]):
        s = float(state0[j])
        col = cols[:, j]
        out = y[:, j]
        for i in range(len(col)):
            s += a * (col[i] - s)
            out[i] = s
    return y[:, 0] if flat else y


def estimate_gravity(imu: ImuSeries, cutoff_hz: float = 0.3) -> np.ndarray:
    """Gravity direction from a window of at least 1 s of accelerometer data.

    Low-passes the accel stream and rescales the final state to |g|.
    """
    if len(imu) < imu.fs:
        raise DspError("gravity window shorter than 1 s")
    g = gravity_stream(imu.accel, cutoff_hz, imu.fs)[-1]
    return g


def gravity_stream(accel: np.ndarray, cutoff_hz: float, fs: float) -> np.ndarray:
    """Per-sample gravity estimate for a whole accel stream.

    The filter state is seeded with the mean of the first second so the
    estimate is usable from the start; every output is renormalized to |g|.
    """
    if len(accel) == 0:
        return accel.copy()
    n0 = max(1, min(len(accel), int(round(fs))))
    init = accel[:n0].mean(axis=0)
    y = lowpass_stream(accel, cutoff_hz, fs, init=init)
    norms = np.maximum(magnitudes(y), 1e-12)
    return y * (GRAVITY / norms)[:, None]


def _rotation_to_vertical(gravity: np.ndarray) -> np.ndarray:
    """Minimal rotation matrix mapping the gravity vector onto (0, 0, |g|)."""
    g = np.asarray(gravity, dtype=np.float64)
    gn = magnitude3(g)
    if gn < 1.0:
        raise DspError(f"degenerate gravity vector (|g|={gn:.3f} m/s^2)")
    u = g / gn
    z = np.array([0.0, 0.0, 1.0])
    c = float(np.dot(u, z))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # antiparallel: rotate half-turn about X
        return np.diag([1.0, -1.0, -1.0])
    axis = np.cross(u, z)
    s = magnitude3(axis)
    axis = axis / s
    kx, ky, kz = axis
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + s * K + (1.0 - c) * (K @ K)


def to_earth(sample: np.ndarray, gravity: np.ndarray, t: int = 0) -> EarthAccel:
    """Rotate one device-frame accel sample into the earth frame and remove
    gravity from the vertical component."""
    R = _rotation_to_vertical(gravity)
    v = R @ np.asarray(sample, dtype=np.float64)
    return EarthAccel(t=np.array([t], dtype=np.int64),
                      north=np.array([v[0]]),
                      east=np.array([v[1]]),
                      vertical=np.array([v[2] - magnitude3(gravity)]))


def earth_stream(imu: ImuSeries, cutoff_hz: float = 0.3) -> EarthAccel:
    """Earth-frame acceleration for a whole series, using the per-sample
    causal gravity estimate.

    The minimal rotation taking the gravity estimate onto the vertical axis
    is applied row-wise via the Rodrigues formula: R v = v + s(k x v) +
    (1-c) k x (k x v) with k the unit rotation axis.
    """
    if len(imu) == 0:
        e = np.empty(0)
        return EarthAccel(imu.t, e.copy(), e.copy(), e.copy())
    grav = gravity_stream(imu.accel, cutoff_hz, imu.fs)
    u = grav / GRAVITY
    v = imu.accel
    c = u[:, 2]
    axis = np.stack([u[:, 1], -u[:, 0], np.zeros(len(u))], axis=1)  # u x z
    s = np.hypot(u[:, 0], u[:, 1])
    safe = np.maximum(s, 1e-15)
    k = axis / safe[:, None]
    kxv = np.cross(k, v)
    kxkxv = np.cross(k, kxv)
    rot = v + s[:, None] * kxv + (1.0 - c)[:, None] * kxkxv
    aligned = s < 1e-12
    if aligned.any():
        # gravity already (anti)parallel to z: flip Y/Z when pointing down
        rot[aligned] = v[aligned]
        down = aligned & (c < 0)
        rot[down, 1] *= -1.0
        rot[down, 2] *= -1.0
    return EarthAccel(imu.t, rot[:, 0], rot[:, 1], rot[:, 2] - GRAVITY)


class Biquad:
    """Second-order Butterworth band-pass section holding per-stream state.

    Coefficients come from the bilinear transform of the analog prototype
    B*s / (s^2 + B*s + w0^2) with prewarped band edges, so the digital
    -3 dB points land on the requested frequencies.
    """

    def __init__(self, low_hz: float, high_hz: float, fs: float):
        if low_hz >= high_hz:
            raise DspError(f"invalid band: low {low_hz} >= high {high_hz}")
        if fs <= 2.0 * high_hz:
            raise DspError(f"fs {fs} must exceed twice the upper edge {high_hz}")
        K = 2.0 * fs
        w1 = K * math.tan(math.pi * low_hz / fs)
        w2 = K * math.tan(math.pi * high_hz / fs)
        bw = w2 - w1
        w0sq = w1 * w2
        a0 = K * K + bw * K + w0sq
        self.b = np.array([bw * K / a0, 0.0, -bw * K / a0])
        self.a = np.array([1.0, (2.0 * w0sq - 2.0 * K * K) / a0,
                           (K * K - bw * K + w0sq) / a0])
        self._z1 = 0.0
        self._z2 = 0.0

    def reset(self):
        self._z1 = self._z2 = 0.0

    def step(self, x: float) -> float:
        # transposed direct form II
        y = self.b[0] * x + self._z1
        self._z1 = self.b[1] * x - self.a[1] * y + self._z2
        self._z2 = self.b[2] * x - self.a[2] * y
        return y

    def process(self, x: np.ndarray) -> np.ndarray:
        b0, b1, b2 = self.b
        a1, a2 = self.a[1], self.a[2]
        z1, z2 = self._z1, self._z2
        y = np.empty(len(x), dtype=np.float64)
        for i, xi in enumerate(x):
            yi = b0 * xi + z1
            z1 = b1 * xi - a1 * yi + z2
            z2 = b2 * xi - a2 * yi
            y[i] = yi
        self._z1, self._z2 = z1, z2
        return y

    def response_at(self, f_hz: float, fs: float) -> complex:
        """Frequency response H(e^{jw}) of this section."""
        w = 2.0 * math.pi * f_hz / fs
        z = complex(math.cos(w), math.sin(w))
        num = self.b[0] + self.b[1] / z + self.b[2] / z ** 2
        den = self.a[0] + self.a[1] / z + self.a[2] / z ** 2
        return num / den


def bandpass(x: np.ndarray, fs: float, low_hz: float = 0.8, high_hz: float = 3.0) -> np.ndarray:
    """Causal band-pass of one scalar stream from zero initial state."""
    return Biquad(low_hz, high_hz, fs).process(np.asarray(x, dtype=np.float64))


def split_vh(e: EarthAccel) -> tuple[np.ndarray, np.ndarray]:
    """Vertical component and horizontal magnitude of a filtered stream."""
    return e.vertical, np.hypot(e.north, e.east)


def detect_steps(ea_v: np.ndarray, t: np.ndarray, cfg: DspConfig | None = None) -> list[Step]:
    """Segment filtered vertical acceleration into steps.

    Boundaries are negative-to-positive zero crossings; the stream start
    counts as a boundary when the signal begins non-negative, and the stream
    end closes a trailing candidate. A candidate becomes a step only if its
    duration is inside [step_min_ms, step_max_ms] and its peak reaches the
    amplitude threshold, which discards the micro-crossings of sensor noise.
    """
    cfg = cfg or DspConfig()
    n = len(ea_v)
    if n == 0:
        return []
    # boundaries as (sample index, crossing time); the crossing instant is
    # linearly interpolated between samples so step durations are not
    # quantized to the sample grid
    bounds: list[tuple[int, float]] = []
    if ea_v[0] >= 0.0:
        bounds.append((0, float(t[0])))
    idx = np.nonzero((ea_v[:-1] < 0.0) & (ea_v[1:] >= 0.0))[0] + 1
    for i in idx:
        a, b = ea_v[i - 1], ea_v[i]
        frac = -a / (b - a) if b > a else 1.0
        bounds.append((int(i), float(t[i - 1]) + frac * float(t[i] - t[i - 1])))
    bounds.append((n - 1, float(t[n - 1])))
    steps: list[Step] = []
    for (i0, tc0), (i1, tc1) in zip(bounds, bounds[1:]):
        if i1 <= i0 + 1:
            continue
        dur = tc1 - tc0
        if dur < cfg.step_min_ms or dur > cfg.step_max_ms:
            continue
        if float(ea_v[i0:i1].max()) < cfg.step_amp_threshold:
            continue
        steps.append(Step(int(round(tc0)), int(round(tc1)), i0, i1))
    return steps


def step_displacement(ea_v: np.ndarray, t: np.ndarray, step: Step, fs: float) -> float:
    """Peak-to-trough vertical displacement over one step, in meters.

    The within-step mean is removed before double trapezoidal integration
    to keep drift bounded; integration state resets every step.
    """
    seg = np.asarray(ea_v[step.i_start:step.i_end], dtype=np.float64)
    if len(seg) < 3:
        raise DspError(f"step too short to integrate ({len(seg)} samples)")
    dt = 1.0 / fs
    a = seg - seg.mean()
    v = np.concatenate(([0.0], np.cumsum((a[1:] + a[:-1]) * 0.5 * dt)))
    v -= v.mean()  # the free integration constant; leaving it drifts x linearly
    x = np.concatenate(([0.0], np.cumsum((v[1:] + v[:-1]) * 0.5 * dt)))
    return float(x.max() - x.min())


def fft_spectrum(x: np.ndarray, fs: float) -> list[tuple[float, float]]:
    """Power spectrum of a mean-removed, Hann-windowed stream up to fs/2."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 64:
        raise DspError(f"stream too short for a spectrum ({n} < 64 samples)")
    w = np.hanning(n)
    spec = np.fft.rfft((x - x.mean()) * w)
    freqs = np.fft.rfftfreq(n, d=1.0 / fs)
    power = (spec.real ** 2 + spec.imag ** 2)
    return list(zip(freqs.tolist(), power.tolist()))


def dominant_frequency(x: np.ndarray, fs: float) -> float:
    spectrum = fft_spectrum(x, fs)
    return max(spectrum, key=lambda fp: fp[1])[0]


def tap_reaction(imu: ImuSeries, e: TouchEvent, cfg: DspConfig | None = None) -> ReactionFeatures:
    """Mean perturbation of acceleration magnitude and rotation magnitude
    caused by one touch, relative to a pre-touch baseline window."""
    cfg = cfg or DspConfig()
    t0 = e.t_down - cfg.baseline_pre_ms
    t1 = e.t_up + cfg.reaction_tail_ms
    if len(imu) == 0 or imu.t[0] > t0 or imu.t[-1] < t1:
        raise DspError(
            f"IMU does not cover reaction window [{t0}, {t1}] for touch {e.id}")
    base = imu.slice_ms(t0, e.t_down - cfg.baseline_gap_ms)
    react = imu.slice_ms(e.t_down, t1)
    if len(base) == 0 or len(react) == 0:
        raise DspError(f"empty baseline or reaction window for touch {e.id}")
    f_base = magnitudes(base.accel).mean()
    av_base = magnitudes(base.gyro).mean()
    vib = float(np.abs(magnitudes(react.accel) - f_base).mean())
    rot = float(np.abs(magnitudes(react.gyro) - av_base).mean())
    return ReactionFeatures(vibration=vib, rotation=rot)
