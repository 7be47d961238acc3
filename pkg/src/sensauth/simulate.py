"""Deterministic synthetic session generator.

Each user is a sampled behavioral profile: per-gesture touch statistics,
a holding pivot that scales how hard touches shake the device, and a gait
(step frequency, vertical displacement, horizontal harmonics). Sessions are
scripted as segments of (user, app, scenario, action count) and rendered
into a SessionTrace with ground-truth labels.

Physical conventions: the accelerometer reports specific force, so a
resting device reads +|g| along the earth vertical. Touch reactions are
injected along the device-frame gravity direction, which makes the
perturbation add linearly to the acceleration magnitude and therefore
recoverable by a magnitude-baseline extractor. While walking, gait
acceleration dominates touch pulses, and touch precision degrades (extra
noise plus a per-segment drift), so touch-only features lose value there.

Static segments space touches at least ~2.2 s apart so that a 2 s motion
window around any touch contains at most one reaction pulse.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .trace import (AppEvent, Gesture, ImuSeries, LabelInterval, Scenario,
                    SessionTrace, TouchEvent, TouchPoint, TraceMeta)

GRAVITY = 9.81
SCREEN_W = 1080
SCREEN_H = 1800

# relative reaction strength per gesture (acceleration, rotation)
GESTURE_VIB_FACTOR = {Gesture.TAP: 1.0, Gesture.SCROLL: 0.45, Gesture.FLING: 0.7}
GESTURE_ROT_FACTOR = {Gesture.TAP: 1.0, Gesture.SCROLL: 0.25, Gesture.FLING: 0.3}

# extraction-window tail the injection is normalized against (ms)
REACTION_TAIL_MS = 50

# minimum spacing between static touches keeps any 2 s window single-pulse
STATIC_GAP_S = (2.2, 3.0)
SEGMENT_HEAD_S = 2.5
SEGMENT_TAIL_S = 1.2


@dataclass(frozen=True)
class TouchParams:
    duration_mean_ms: float
    duration_std_ms: float
    pressure_mean: float
    pressure_std: float
    center: tuple[float, float]
    cov: tuple[tuple[float, float], tuple[float, float]]
    speed_mean_px_s: float = 0.0    # unused for taps
    speed_std_px_s: float = 0.0


@dataclass(frozen=True)
class GaitParams:
    step_freq_hz: float
    vertical_disp_m: float
    horiz_amps: tuple[float, float]   # fundamental and first harmonic, m/s^2
    noise_std: float
    gyro_amp: float                   # rad/s arm-swing oscillation


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    touch: dict[Gesture, TouchParams]
    pivot: tuple[float, float]
    reaction_gain: float              # m/s^2 per px of pivot distance
    rotation_gain: float              # rad/s per px of pivot distance
    gait: GaitParams
    accel_noise_std: float
    gyro_noise_std: float
    # walking degrades touch precision
    walk_coord_noise_px: float = 0.0
    walk_pressure_noise: float = 0.0
    walk_duration_noise_ms: float = 0.0
    walk_coord_bias_px: float = 0.0
    walk_pressure_bias: float = 0.0

    def __post_init__(self):
        if self.reaction_gain < 0 or self.rotation_gain < 0:
            raise ValueError("gains must be >= 0")
        if self.accel_noise_std < 0 or self.gyro_noise_std < 0 or self.gait.noise_std < 0:
            raise ValueError("noise stds must be >= 0")
        if not 1.0 <= self.gait.step_freq_hz <= 3.0:
            raise ValueError(f"step frequency {self.gait.step_freq_hz} outside [1, 3] Hz")
        px, py = self.pivot
        if not (0 <= px <= SCREEN_W and 0 <= py <= SCREEN_H):
            raise ValueError("pivot outside screen bounds")


def _touch_params(rng, dur_range, dur_std_range, speed_range, speed_std_range):
    cx = rng.uniform(150.0, SCREEN_W - 150.0)
    cy = rng.uniform(300.0, SCREEN_H - 300.0)
    sx = rng.uniform(25.0, 90.0)
    sy = rng.uniform(25.0, 90.0)
    rho = rng.uniform(-0.3, 0.3)
    return TouchParams(
        duration_mean_ms=rng.uniform(*dur_range),
        duration_std_ms=rng.uniform(*dur_std_range),
        pressure_mean=rng.uniform(2.0, 40.0),
        pressure_std=rng.uniform(0.8, 3.0),
        center=(cx, cy),
        cov=((sx * sx, rho * sx * sy), (rho * sx * sy, sy * sy)),
        speed_mean_px_s=rng.uniform(*speed_range),
        speed_std_px_s=rng.uniform(*speed_std_range),
    )


def gen_profile(seed: int, archetype: str | None = None) -> UserProfile:
    """Sample a user profile; identical output for identical (seed, archetype).

    Mean gesture durations land in [200, 1200] ms and pressure means in
    levels 2..40. Tap and fling duration means stay under 290 ms so their
    samples classify as the intended gesture. Archetypes shift the holding
    gains: "firm" halves them, "loose" boosts them.
    """
    rng = np.random.default_rng(seed)
    touch = {
        Gesture.TAP: _touch_params(rng, (200.0, 285.0), (12.0, 32.0), (0.0, 0.0), (0.0, 0.0)),
        Gesture.SCROLL: _touch_params(rng, (320.0, 1150.0), (40.0, 110.0), (180.0, 650.0), (20.0, 60.0)),
        Gesture.FLING: _touch_params(rng, (200.0, 285.0), (12.0, 30.0), (1500.0, 2600.0), (80.0, 200.0)),
    }
    gain_lo, gain_hi = 0.00012, 0.00065
    rot_lo, rot_hi = 0.00006, 0.00035
    if archetype == "firm":
        gain_lo, gain_hi = 0.00008, 0.00030
        rot_lo, rot_hi = 0.00004, 0.00016
    elif archetype == "loose":
        gain_lo, gain_hi = 0.00035, 0.00090
        rot_lo, rot_hi = 0.00018, 0.00045
    elif archetype is not None:
        raise ValueError(f"unknown archetype {archetype!r}")
    gait = GaitParams(
        step_freq_hz=rng.uniform(1.5, 2.6),
        vertical_disp_m=rng.uniform(0.025, 0.06),
        horiz_amps=(rng.uniform(0.35, 1.1), rng.uniform(0.1, 0.45)),
        noise_std=rng.uniform(0.05, 0.18),
        gyro_amp=rng.uniform(0.08, 0.3),
    )
    return UserProfile(
        user_id=f"user-{seed}",
        touch=touch,
        pivot=(rng.uniform(80.0, SCREEN_W - 80.0), rng.uniform(1100.0, SCREEN_H - 50.0)),
        reaction_gain=rng.uniform(gain_lo, gain_hi),
        rotation_gain=rng.uniform(rot_lo, rot_hi),
        gait=gait,
        accel_noise_std=rng.uniform(0.012, 0.03),
        gyro_noise_std=rng.uniform(0.003, 0.008),
        # walking keeps touches tight but drifts them per segment, so
        # touch-only models degrade the way reaction-free data should
        walk_coord_noise_px=rng.uniform(12.0, 30.0),
        walk_pressure_noise=rng.uniform(0.6, 1.5),
        walk_duration_noise_ms=rng.uniform(30.0, 80.0),
        walk_coord_bias_px=rng.uniform(30.0, 65.0),
        walk_pressure_bias=rng.uniform(1.0, 2.2),
    )


def rotation_about(axis, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    k = np.asarray(axis, dtype=np.float64)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle_rad) * K + (1.0 - math.cos(angle_rad)) * (K @ K)


def random_tilt(rng, max_deg: float = 30.0) -> np.ndarray:
    """Rotation applied to earth-frame vectors to express them in a device
    frame tilted up to max_deg from upright."""
    psi = rng.uniform(0.0, 2.0 * math.pi)
    theta = math.radians(rng.uniform(0.0, max_deg))
    return rotation_about((math.cos(psi), math.sin(psi), 0.0), theta)


def _sample_touch_geometry(p: UserProfile, gesture: Gesture, coord, duration_ms: int,
                           rng, touch_rate_hz: float = 85.0):
    """Point list for one touch: jittered dot for taps, a straight swipe
    aimed at the most open screen direction for scrolls and flings."""
    x0, y0 = float(coord[0]), float(coord[1])
    x0 = min(max(x0, 5.0), SCREEN_W - 5.0)
    y0 = min(max(y0, 5.0), SCREEN_H - 5.0)
    n_pts = max(2, int(round(duration_ms * touch_rate_hz / 1000.0)) + 1)
    ts = np.linspace(0, duration_ms, n_pts)
    if gesture is Gesture.TAP:
        xs = x0 + rng.normal(0.0, 0.4, n_pts)
        ys = y0 + rng.normal(0.0, 0.4, n_pts)
        return ts, xs, ys
    params = p.touch[gesture]
    speed = max(50.0, rng.normal(params.speed_mean_px_s, params.speed_std_px_s))
    length = speed * duration_ms / 1000.0
    # head toward whichever border is farthest so the swipe always fits
    dirs = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, 1), (1, -1), (-1, -1)]
    best, best_room = (1, 0), -1.0
    for dx, dy in dirs:
        n = math.hypot(dx, dy)
        room = min(
            ((SCREEN_W - 5 - x0) / (dx / n)) if dx > 0 else ((5 - x0) / (dx / n)) if dx < 0 else 1e9,
            ((SCREEN_H - 5 - y0) / (dy / n)) if dy > 0 else ((5 - y0) / (dy / n)) if dy < 0 else 1e9,
        )
        if room > best_room:
            best_room, best = room, (dx / n, dy / n)
    length = min(length, 0.85 * best_room)
    xs = x0 + best[0] * length * ts / max(duration_ms, 1)
    ys = y0 + best[1] * length * ts / max(duration_ms, 1)
    xs = xs + rng.normal(0.0, 0.8, n_pts)
    ys = ys + rng.normal(0.0, 0.8, n_pts)
    return ts, np.clip(xs, 0, SCREEN_W), np.clip(ys, 0, SCREEN_H)


def _make_touch(p: UserProfile, gesture: Gesture, coord, t_down: int, rng,
                touch_id: int, app: str, walking: bool = False,
                seg_bias: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> TouchEvent:
    params = p.touch[gesture]
    dur_std = params.duration_std_ms + (p.walk_duration_noise_ms if walking else 0.0)
    duration = int(round(rng.normal(params.duration_mean_ms, dur_std)))
    if gesture in (Gesture.TAP, Gesture.FLING):
        duration = min(max(duration, 60), 295)
    else:
        duration = min(max(duration, 305), 1600)
    press_std = params.pressure_std + (p.walk_pressure_noise if walking else 0.0)
    pressure = rng.normal(params.pressure_mean, press_std) + (seg_bias[2] if walking else 0.0)
    pressure = float(min(max(pressure, 0.5), 64.0))
    ts, xs, ys = _sample_touch_geometry(p, gesture, coord, duration, rng)
    jitter = params.pressure_std * 0.25
    points = tuple(
        TouchPoint(t=int(t_down + t), x=float(x), y=float(y),
                   pressure=float(min(max(pressure + rng.normal(0.0, jitter), 0.0), 64.0)),
                   area=float(max(rng.normal(8.0, 1.0), 1.0)))
        for t, x, y in zip(ts, xs, ys))
    return TouchEvent(id=touch_id, app=app, t_down=t_down, t_up=t_down + duration, points=points)


def _sample_coord(p: UserProfile, gesture: Gesture, rng, walking: bool,
                  seg_bias=(0.0, 0.0, 0.0)) -> tuple[float, float]:
    params = p.touch[gesture]
    mean = np.asarray(params.center)
    xy = rng.multivariate_normal(mean, np.asarray(params.cov), method="cholesky")
    if walking:
        xy = xy + rng.normal(0.0, p.walk_coord_noise_px, 2) + np.asarray(seg_bias[:2])
    return float(np.clip(xy[0], 5, SCREEN_W - 5)), float(np.clip(xy[1], 5, SCREEN_H - 5))


def _pulse_targets(p: UserProfile, e: TouchEvent, gesture: Gesture) -> tuple[float, float]:
    cx, cy = e.centroid()
    dist = math.hypot(cx - p.pivot[0], cy - p.pivot[1])
    scale = dist * (e.mean_pressure() / 20.0)
    return (p.reaction_gain * scale * GESTURE_VIB_FACTOR[gesture],
            p.rotation_gain * scale * GESTURE_ROT_FACTOR[gesture])


def _add_pulse(values: np.ndarray, t_grid: np.ndarray, e: TouchEvent,
               mean_target: float) -> None:
    """Add a half-sine pulse over the touch span, scaled so that the sample
    mean over [t_down, t_up + tail] equals mean_target."""
    if mean_target <= 0.0:
        return
    dur = max(e.duration_ms, 1)
    i0, i1 = np.searchsorted(t_grid, [e.t_down, e.t_up + REACTION_TAIL_MS + 1])
    window = t_grid[i0:i1]
    if len(window) == 0:
        return
    phase = (window - e.t_down) / dur
    shape = np.where((phase >= 0.0) & (phase <= 1.0), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    total = shape.sum()
    if total <= 0.0:
        return
    peak = mean_target * len(window) / total
    values[i0:i1] += peak * shape


def synth_touch_reaction(p: UserProfile, gesture: Gesture, coord, rng,
                         t0: int = 1000, tilt: np.ndarray | None = None,
                         fs: float = 100.0, touch_id: int = 0,
                         app: str = "app") -> tuple[TouchEvent, ImuSeries]:
    """One touch on an otherwise still device, with its IMU segment.

    The IMU covers [t_down - 200 ms, t_up + 200 ms]. The injected mean
    perturbation over the reaction window equals
    reaction_gain * |coord - pivot| * pressure / 20 (per-gesture scaled),
    so a magnitude-baseline extractor recovers it exactly at zero noise.
    """
    R = np.eye(3) if tilt is None else tilt
    e = _make_touch(p, gesture, coord, t_down=t0, rng=rng, touch_id=touch_id, app=app)
    dt_ms = int(round(1000.0 / fs))
    t_grid = np.arange(t0 - 200, e.t_up + 200 + dt_ms, dt_ms, dtype=np.int64)
    vib_target, rot_target = _pulse_targets(p, e, gesture)
    pulse_a = np.zeros(len(t_grid))
    pulse_g = np.zeros(len(t_grid))
    _add_pulse(pulse_a, t_grid, e, vib_target)
    _add_pulse(pulse_g, t_grid, e, rot_target)
    g_dev = R @ np.array([0.0, 0.0, GRAVITY])
    g_hat = g_dev / GRAVITY
    accel = g_dev[None, :] + pulse_a[:, None] * g_hat[None, :]
    accel = accel + rng.normal(0.0, p.accel_noise_std, accel.shape)
    gyro_axis = R @ np.array([1.0, 0.0, 0.0])
    gyro = pulse_g[:, None] * gyro_axis[None, :]
    gyro = gyro + rng.normal(0.0, p.gyro_noise_std, gyro.shape)
    return e, ImuSeries(t_grid, accel, gyro, fs)


def walk_accel_amplitude(p: UserProfile) -> float:
    """Vertical acceleration amplitude whose double integral peaks-to-troughs
    at the profile displacement: A = d * (2 pi f)^2 / 2."""
    w = 2.0 * math.pi * p.gait.step_freq_hz
    return p.gait.vertical_disp_m * w * w / 2.0


def _walk_motion(p: UserProfile, t_rel_s: np.ndarray, heading: float, rng):
    """Earth-frame gait acceleration rows for relative times in seconds.

    The vertical sinusoid is phased so its upward zero crossings sit at
    0.2/f + k/f from the segment start, which keeps every full step (and a
    detectable trailing one) inside an exactly n/f-second window even after
    causal filter lag.
    """
    f = p.gait.step_freq_hz
    A = walk_accel_amplitude(p)
    vert = A * np.sin(2.0 * math.pi * f * (t_rel_s - 0.2 / f))
    c1, c2 = p.gait.horiz_amps
    h = c1 * np.sin(2.0 * math.pi * f * t_rel_s + 0.9) + \
        c2 * np.sin(4.0 * math.pi * f * t_rel_s + 0.4)
    north = h * math.cos(heading)
    east = h * math.sin(heading)
    rows = np.stack([north, east, vert], axis=1)
    if p.gait.noise_std > 0:
        rows = rows + rng.normal(0.0, p.gait.noise_std, rows.shape)
    return rows


def synth_walk(p: UserProfile, n_steps: int, rng, fs: float = 100.0,
               t0: int = 0, tilt: np.ndarray | None = None) -> ImuSeries:
    """A continuous walk of n_steps at the profile step frequency.

    The series spans exactly n_steps / step_frequency seconds at fs; the
    dominant spectral component of the vertical earth-frame acceleration is
    the step frequency.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    R = np.eye(3) if tilt is None else tilt
    f = p.gait.step_freq_hz
    n = int(round(n_steps / f * fs))
    dt_ms = int(round(1000.0 / fs))
    t_grid = t0 + np.arange(n, dtype=np.int64) * dt_ms
    t_rel = np.arange(n) / fs
    heading = rng.uniform(0.0, 2.0 * math.pi)
    motion = _walk_motion(p, t_rel, heading, rng)
    earth = motion + np.array([0.0, 0.0, GRAVITY])
    accel = earth @ R.T
    if p.accel_noise_std > 0:
        accel = accel + rng.normal(0.0, p.accel_noise_std, accel.shape)
    sw_axis = np.array([math.cos(heading + 0.5), math.sin(heading + 0.5), 0.3])
    sw_axis /= np.linalg.norm(sw_axis)
    swing = p.gait.gyro_amp * np.sin(2.0 * math.pi * f * t_rel + 0.2)
    gyro = (swing[:, None] * sw_axis[None, :]) @ R.T
    if p.gyro_noise_std > 0:
        gyro = gyro + rng.normal(0.0, p.gyro_noise_std, gyro.shape)
    return ImuSeries(t_grid, accel, gyro, fs)


# --- scripted sessions ------------------------------------------------------

@dataclass(frozen=True)
class Segment:
    user: str
    app: str
    sensitive: bool
    scenario: Scenario
    actions: int
    steps: int | None = None   # walking only; raised if too few for the actions

    def __post_init__(self):
        if self.actions < 1:
            raise ValueError("segment needs at least one action")


@dataclass
class SessionScript:
    segments: list[Segment]
    seed: int = 0
    fs: float = 100.0

    def validate(self, profiles: dict[str, UserProfile]) -> "SessionScript":
        for seg in self.segments:
            if seg.user not in profiles:
                raise KeyError(f"script references unknown user {seg.user!r}")
        if 1000.0 % self.fs != 0:
            raise ValueError("fs must divide 1000 so timestamps stay integral")
        return self


def load_script(path: str) -> tuple[SessionScript, dict[str, UserProfile]]:
    """Read a script JSON file: {seed, fs, users: {name: {seed, archetype?}},
    segments: [{user, app, sensitive, scenario, actions, steps?}]}."""
    with open(path) as fh:
        data = json.load(fh)
    profiles = {}
    for name, spec in data["users"].items():
        prof = gen_profile(int(spec["seed"]), spec.get("archetype"))
        profiles[name] = _rename_profile(prof, name)
    segments = [Segment(user=s["user"], app=s["app"], sensitive=bool(s["sensitive"]),
                        scenario=Scenario(s["scenario"]), actions=int(s["actions"]),
                        steps=int(s["steps"]) if "steps" in s else None)
                for s in data["segments"]]
    script = SessionScript(segments=segments, seed=int(data.get("seed", 0)),
                           fs=float(data.get("fs", 100.0)))
    return script, profiles


def _rename_profile(p: UserProfile, user_id: str) -> UserProfile:
    from dataclasses import replace
    return replace(p, user_id=user_id)


def _segment_touch_times(seg: Segment, p: UserProfile, rng) -> tuple[list, float, int]:
    """Touch schedule (gesture, t_down offset s) plus the segment duration in
    seconds and the realized step count (walking)."""
    gestures = [Gesture.TAP, Gesture.SCROLL, Gesture.FLING]
    weights = [0.5, 0.3, 0.2]
    kinds = list(rng.choice(len(gestures), size=seg.actions, p=weights))
    schedule = []
    if seg.scenario is Scenario.STATIC:
        t = SEGMENT_HEAD_S
        for k in kinds:
            g = gestures[k]
            schedule.append((g, t))
            dur_s = (p.touch[g].duration_mean_ms + 2 * p.touch[g].duration_std_ms) / 1000.0
            t += dur_s + rng.uniform(*STATIC_GAP_S)
        return schedule, t + SEGMENT_TAIL_S, 0
    f = p.gait.step_freq_hz
    base_gap = max(0.55, 1.05 / f)
    t = SEGMENT_HEAD_S
    for k in kinds:
        g = gestures[k]
        schedule.append((g, t))
        dur_est = (p.touch[g].duration_mean_ms + 2 * p.touch[g].duration_std_ms
                   + 2 * p.walk_duration_noise_ms) / 1000.0
        t += max(base_gap + rng.uniform(0.0, 0.25), dur_est + 0.2)
    span_needed = t + SEGMENT_TAIL_S
    steps = max(seg.steps or 0, int(math.ceil(span_needed * f)) + 2)
    return schedule, steps / f, steps


def gen_session(script: SessionScript, profiles: dict[str, UserProfile]) -> SessionTrace:
    """Render a script into a full SessionTrace with ground-truth labels.

    Deterministic for a fixed (script, profiles): one RNG seeded from
    script.seed drives every draw in generation order.
    """
    script.validate(profiles)
    rng = np.random.default_rng(script.seed)
    fs = script.fs
    dt_ms = int(round(1000.0 / fs))

    accel_parts: list[np.ndarray] = []
    gyro_parts: list[np.ndarray] = []
    t_parts: list[np.ndarray] = []
    touches: list[TouchEvent] = []
    app_events: list[AppEvent] = []
    labels: list[LabelInterval] = []

    t_cursor_ms = 0
    touch_id = 0
    for seg in script.segments:
        p = profiles[seg.user]
        tilt = random_tilt(rng)
        schedule, duration_s, steps = _segment_touch_times(seg, p, rng)
        n = int(round(duration_s * fs))
        t_grid = t_cursor_ms + np.arange(n, dtype=np.int64) * dt_ms
        t_rel = np.arange(n) / fs
        seg_end_ms = t_cursor_ms + n * dt_ms

        walking = seg.scenario is Scenario.WALKING
        if walking:
            heading = rng.uniform(0.0, 2.0 * math.pi)
            motion = _walk_motion(p, t_rel, heading, rng)
            f = p.gait.step_freq_hz
            swing = p.gait.gyro_amp * np.sin(2.0 * math.pi * f * t_rel + 0.2)
            sw_axis = np.array([math.cos(heading + 0.5), math.sin(heading + 0.5), 0.3])
            sw_axis /= np.linalg.norm(sw_axis)
            gyro_earth = swing[:, None] * sw_axis[None, :]
        else:
            motion = np.zeros((n, 3))
            gyro_earth = np.zeros((n, 3))

        seg_bias = (rng.normal(0.0, p.walk_coord_bias_px),
                    rng.normal(0.0, p.walk_coord_bias_px),
                    rng.normal(0.0, p.walk_pressure_bias))
        pulse_a = np.zeros(n)
        pulse_g = np.zeros(n)
        for gesture, off_s in schedule:
            t_down = t_cursor_ms + int(round(off_s * 1000.0))
            coord = _sample_coord(p, gesture, rng, walking, seg_bias)
            e = _make_touch(p, gesture, coord, t_down, rng, touch_id, seg.app,
                            walking=walking, seg_bias=seg_bias)
            if e.t_up + 300 > seg_end_ms:  # keep reaction window inside the segment
                cutoff = seg_end_ms - 300
                pts = tuple(pt for pt in e.points if pt.t <= cutoff) or (e.points[0],)
                e = TouchEvent(e.id, e.app, e.t_down, max(pts[-1].t, e.t_down), pts)
            touch_id += 1
            touches.append(e)
            vib_t, rot_t = _pulse_targets(p, e, gesture)
            _add_pulse(pulse_a, t_grid, e, vib_t)
            _add_pulse(pulse_g, t_grid, e, rot_t)

        earth = motion + np.array([0.0, 0.0, GRAVITY])
        accel = earth @ tilt.T
        g_hat = tilt @ np.array([0.0, 0.0, 1.0])
        accel = accel + pulse_a[:, None] * g_hat[None, :]
        accel = accel + rng.normal(0.0, p.accel_noise_std, accel.shape)
        gyro_axis = tilt @ np.array([1.0, 0.0, 0.0])
        gyro = gyro_earth @ tilt.T + pulse_g[:, None] * gyro_axis[None, :]
        gyro = gyro + rng.normal(0.0, p.gyro_noise_std, gyro.shape)

        accel_parts.append(accel)
        gyro_parts.append(gyro)
        t_parts.append(t_grid)
        app_events.append(AppEvent(t=t_cursor_ms, app=seg.app, sensitive=seg.sensitive))
        labels.append(LabelInterval(t_cursor_ms, seg_end_ms, seg.user, seg.scenario))
        t_cursor_ms = seg_end_ms

    imu = ImuSeries(np.concatenate(t_parts) if t_parts else np.empty(0, dtype=np.int64),
                    np.concatenate(accel_parts) if accel_parts else np.empty((0, 3)),
                    np.concatenate(gyro_parts) if gyro_parts else np.empty((0, 3)), fs)
    meta = TraceMeta(fs=fs, screen_w=SCREEN_W, screen_h=SCREEN_H)
    return SessionTrace(imu, touches, app_events, labels, meta).validate()


def make_eval_script(owner: str, guests: list[str], profiles: dict[str, UserProfile],
                     scenario: Scenario, seed: int,
                     actions_per_segment: int = 20,
                     warmup_steps: int = 30,
                     warmup_static_actions: int = 106,
                     sensitive_prob: float = 0.2) -> SessionScript:
    """Identification-benchmark script: one warm-up-sized owner segment, a
    guest segment immediately after (so the two-class upgrade happens before
    owner scoring effectively starts), then alternating owner segments and
    the remaining guests."""
    rng = np.random.default_rng(seed ^ 0xE7A1)
    apps = ["mail", "chat", "game", "browser", "photos"]
    p = profiles[owner]
    if scenario is Scenario.STATIC:
        warm_actions = warmup_static_actions
    else:
        f = p.gait.step_freq_hz
        gap = max(0.55, 1.05 / f)
        warm_actions = int(math.ceil((warmup_steps / f + 2.0 - SEGMENT_HEAD_S) / gap)) + 2
    segs = [Segment(owner, "setup", False, scenario, warm_actions)]
    order = list(rng.permutation(len(guests)))
    for i, gi in enumerate(order):
        segs.append(Segment(guests[gi], str(rng.choice(apps)),
                            bool(rng.random() < sensitive_prob), scenario,
                            actions_per_segment))
        segs.append(Segment(owner, str(rng.choice(apps)),
                            bool(rng.random() < sensitive_prob), scenario,
                            actions_per_segment))
    return SessionScript(segments=segs, seed=seed)


def make_script(owner: str, guests: list[str], n_segments: int,
                actions_per_segment: int, guest_share: float,
                sensitive_prob: float, scenario: Scenario, seed: int,
                warmup_actions: int = 0) -> SessionScript:
    """Convenience script builder with an exact guest segment share.

    An optional all-owner warm-up segment comes first; of the remaining
    n_segments, round(guest_share * n_segments) are guest segments placed
    deterministically from the seed.
    """
    rng = np.random.default_rng(seed ^ 0x5EED)
    apps = ["mail", "chat", "game", "browser", "photos"]
    segs: list[Segment] = []
    if warmup_actions > 0:
        segs.append(Segment(owner, "setup", False, scenario, warmup_actions))
    n_guest = int(round(guest_share * n_segments))
    guest_slots = set(rng.choice(n_segments, size=n_guest, replace=False).tolist()) if n_guest else set()
    for i in range(n_segments):
        user = str(rng.choice(guests)) if (i in guest_slots and guests) else owner
        app = str(rng.choice(apps))
        sensitive = bool(rng.random() < sensitive_prob)
        segs.append(Segment(user, app, sensitive, scenario, actions_per_segment))
    return SessionScript(segments=segs, seed=seed)
