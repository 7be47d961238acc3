"""Observation assembly: touch features plus DSP outputs, with scaling.

A static observation is [x, y, pressure, duration_ms, vibration, rotation];
a walking observation is [x, y, pressure, duration_ms, step_displacement_m,
step_frequency_hz, mean_horizontal_accel, std_vertical_accel]. Vectors are
scenario-homogeneous: 6 dims static, 8 dims walking, never mixed.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import DspConfig
from . import dsp
from .trace import Gesture, ImuSeries, Scenario, TouchEvent

STATIC_DIM = 6
WALKING_DIM = 8


class NotWalking(Exception):
    """Raised when a touch has no detected step within the pairing window."""


@dataclass(frozen=True)
class Observation:
    app: str
    gesture: Gesture
    scenario: Scenario
    features: np.ndarray
    t: int
    scaled: bool = False

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        want = STATIC_DIM if self.scenario is Scenario.STATIC else WALKING_DIM
        if self.features.shape != (want,):
            raise ValueError(
                f"{self.scenario.value} observation needs {want} features, "
                f"got {self.features.shape}")
        if not np.isfinite(self.features).all():
            raise ValueError("non-finite feature value")
        if not self.scaled and self.features[3] <= 0:
            raise ValueError("duration must be positive")


def static_observation(e: TouchEvent, imu: ImuSeries, app: str,
                       cfg: DspConfig | None = None) -> Observation:
    """Touch features plus device-reaction features for a still-device touch."""
    cx, cy = e.centroid()
    r = dsp.tap_reaction(imu, e, cfg)
    vec = np.array([cx, cy, e.mean_pressure(), float(e.duration_ms),
                    r.vibration, r.rotation])
    return Observation(app=app, gesture=classify(e, cfg), scenario=Scenario.STATIC,
                       features=vec, t=e.t_down)


def motion_observation(e: TouchEvent, steps: list[dsp.Step], ea_v: np.ndarray,
                       ea_h: np.ndarray, t_grid: np.ndarray, app: str,
                       fs: float, cfg: DspConfig | None = None,
                       window_ms: int = 2000) -> Observation:
    """Touch features plus walking features from the step nearest the touch.

    Raises NotWalking when no detected step lies within window_ms of the
    touch-down time. Ties between equally near steps go to the earlier one.
    """
    step = nearest_step(steps, e.t_down, window_ms)
    if step is None:
        raise NotWalking(f"no step within {window_ms} ms of touch {e.id}")
    cx, cy = e.centroid()
    disp = dsp.step_displacement(ea_v, t_grid, step, fs)
    freq = 1000.0 / step.duration_ms
    seg_h = ea_h[step.i_start:step.i_end]
    seg_v = ea_v[step.i_start:step.i_end]
    vec = np.array([cx, cy, e.mean_pressure(), float(e.duration_ms),
                    disp, freq, float(np.mean(seg_h)), float(np.std(seg_v))])
    return Observation(app=app, gesture=classify(e, cfg), scenario=Scenario.WALKING,
                       features=vec, t=e.t_down)


def nearest_step(steps: list[dsp.Step], t: int, window_ms: int = 2000) -> dsp.Step | None:
    best = None
    best_d = window_ms + 1
    for s in steps:
        if s.t_start <= t <= s.t_end:
            d = 0
        elif t < s.t_start:
            d = s.t_start - t
        else:
            d = t - s.t_end
        if d < best_d:  # strict: ties keep the earlier step
            best, best_d = s, d
    return best if best_d <= window_ms else None


def detect_scenario(imu_window: ImuSeries, cfg: DspConfig | None = None) -> Scenario:
    """Walking iff the window's filtered vertical acceleration contains at
    least two detected steps."""
    cfg = cfg or DspConfig()
    if len(imu_window) < 2:
        return Scenario.STATIC
    earth = dsp.earth_stream(imu_window, cfg.gravity_cutoff_hz)
    ea_v = dsp.bandpass(earth.vertical, imu_window.fs, cfg.band_low_hz, cfg.band_high_hz)
    steps = dsp.detect_steps(ea_v, imu_window.t, cfg)
    return Scenario.WALKING if len(steps) >= 2 else Scenario.STATIC


def classify(e: TouchEvent, cfg: DspConfig | None = None) -> Gesture:
    from .trace import classify_gesture
    cfg = cfg or DspConfig()
    return classify_gesture(e, cfg.tap_max_path_px, cfg.tap_max_ms,
                            cfg.fling_min_speed_px_s)


@dataclass(frozen=True)
class Scaler:
    """Per-dimension z-score parameters. Zero-variance dims get std 1 so
    apply() stays invertible."""
    mean: np.ndarray
    std: np.ndarray
    scenario: Scenario

    def transform(self, vec: np.ndarray) -> np.ndarray:
        return (vec - self.mean) / self.std

    def inverse(self, vec: np.ndarray) -> np.ndarray:
        return vec * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "scenario": self.scenario.value}

    @staticmethod
    def from_dict(d: dict) -> "Scaler":
        return Scaler(np.asarray(d["mean"], dtype=np.float64),
                      np.asarray(d["std"], dtype=np.float64),
                      Scenario(d["scenario"]))


def fit_scaler(observations: list[Observation]) -> Scaler:
    """Z-score fit over at least two observations of one scenario."""
    if len(observations) < 2:
        raise ValueError(f"need >= 2 observations to fit a scaler, got {len(observations)}")
    scenario = observations[0].scenario
    if any(o.scenario is not scenario for o in observations):
        raise ValueError("mixed static/walking observations")
    X = np.stack([o.features for o in observations])
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return Scaler(mean=mean, std=std, scenario=scenario)


def apply_scaler(scaler: Scaler, o: Observation) -> Observation:
    if o.scenario is not scaler.scenario:
        raise ValueError(f"scaler is for {scaler.scenario.value} observations")
    return replace(o, features=scaler.transform(o.features), scaled=True)
