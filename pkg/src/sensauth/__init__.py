"""Behavioral-biometrics user identification from touch and motion streams."""

__version__ = "0.1.0"

from .trace import (Gesture, Scenario, SessionTrace, TouchEvent, TouchPoint,
                    AppEvent, LabelInterval, ImuSeries, TraceMeta,
                    classify_gesture, parse_trace, write_trace)
from .config import Config, load_config

__all__ = [
    "Gesture", "Scenario", "SessionTrace", "TouchEvent", "TouchPoint",
    "AppEvent", "LabelInterval", "ImuSeries", "TraceMeta",
    "classify_gesture", "parse_trace", "write_trace",
    "Config", "load_config", "__version__",
]
