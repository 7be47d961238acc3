"""Runtime configuration.

A config file is a JSON object with up to four sections: "dsp", "svm",
"scheduler" and "eval". Every key is optional; omitted keys keep the
defaults below. Unknown keys are rejected so typos fail loudly.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields


@dataclass
class DspConfig:
    fs: float = 100.0                 # nominal IMU rate, Hz
    gravity_cutoff_hz: float = 0.3    # one-pole low-pass for gravity tracking
    band_low_hz: float = 0.8
    band_high_hz: float = 3.0
    step_amp_threshold: float = 0.3   # m/s^2, peak needed to accept a step
    step_min_ms: int = 250
    step_max_ms: int = 2000
    baseline_pre_ms: int = 150        # reaction baseline window start (before touch)
    baseline_gap_ms: int = 50         # reaction baseline window end (before touch)
    reaction_tail_ms: int = 50        # reaction window extension past touch release
    scenario_window_ms: int = 2000
    # touch-path gesture thresholds
    tap_max_path_px: float = 10.0
    tap_max_ms: int = 300
    fling_min_speed_px_s: float = 1000.0


@dataclass
class SvmConfig:
    nu: float = 0.1
    C: float = 10.0
    gamma: float | None = None        # None -> median heuristic
    tol: float = 1e-3                 # max KKT violation at convergence
    max_iter: int = 10_000            # SMO pair updates
    owner_buffer_cap: int = 500
    guest_buffer_cap: int = 200
    buffer_min_confidence: float = 0.8
    upgrade_guest_min: int = 20       # one-class -> two-class threshold
    retrain_guest_delta: int = 10
    retrain_owner_delta: int = 50
    per_gesture_min: int = 10         # below this, fall back to the pooled model
    calib_holdout_frac: float = 0.2


@dataclass
class SchedulerConfig:
    energy_per_observation: float = 1.0
    p_theta: float = 0.98             # conclusion confidence threshold
    p_phi: float = 0.8                # off-mode restart confidence bound
    eps_bar_init: float = 0.75
    ema_decay: float = 0.95
    transfer_window: int = 50
    transfer_prior_o2g: float = 0.05
    transfer_prior_g2o: float = 0.5
    learn_transfer: bool = True       # False -> keep the fixed values below
    fixed_q_o2g: float = 0.05
    fixed_q_g2o: float = 0.5


@dataclass
class EvalConfig:
    screen_w: int = 1080              # logical px; traces are rescaled to this
    screen_h: int = 1800
    grid_rows: int = 25
    grid_cols: int = 15
    warmup_static_actions: int = 100
    warmup_walk_steps: int = 30
    max_n: int = 20                   # longest observation/step window in curves
    ablate_walking_features: bool = False


@dataclass
class Config:
    dsp: DspConfig = field(default_factory=DspConfig)
    svm: SvmConfig = field(default_factory=SvmConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _apply(section, values: dict, name: str):
    known = {f.name for f in fields(section)}
    for key, val in values.items():
        if key not in known:
            raise ValueError(f"unknown config key {name}.{key}")
        setattr(section, key, val)


def load_config(path: str | None) -> Config:
    """Load a JSON config file; None returns all defaults."""
    cfg = Config()
    if path is None:
        return cfg
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config root must be a JSON object")
    for name in ("dsp", "svm", "scheduler", "eval"):
        if name in data:
            _apply(getattr(cfg, name), data[name], name)
    extra = set(data) - {"dsp", "svm", "scheduler", "eval"}
    if extra:
        raise ValueError(f"unknown config sections: {sorted(extra)}")
    return cfg
