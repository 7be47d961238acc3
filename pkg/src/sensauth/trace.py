"""Event and trace data model, JSONL trace I/O, gesture classification.

A trace file is JSON-lines: one record per line, each with a "kind" field.
Record kinds: imu, touch, app, label, plus an optional leading meta record
carrying sensor metadata (IMU rate, screen size, pressure unit). All floats
are written with 6 decimal places so that parse/write round-trips are
byte-identical once a trace is in canonical form.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class TraceError(Exception):
    """Base class for trace file problems."""


class TraceParseError(TraceError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TraceValidationError(TraceError):
    def __init__(self, invariant: str, message: str):
        super().__init__(f"{invariant}: {message}")
        self.invariant = invariant


class Gesture(Enum):
    TAP = "tap"
    SCROLL = "scroll"
    FLING = "fling"


class Scenario(Enum):
    STATIC = "static"
    WALKING = "walking"


@dataclass(frozen=True)
class TouchPoint:
    t: int          # ms
    x: float        # px
    y: float        # px
    pressure: float # device pressure level, >= 0
    area: float     # contact-area units


@dataclass(frozen=True)
class TouchEvent:
    id: int
    app: str
    t_down: int
    t_up: int
    points: tuple[TouchPoint, ...]

    def __post_init__(self):
        if self.t_up < self.t_down:
            raise TraceValidationError("touch.t_up>=t_down",
                                       f"touch {self.id}: {self.t_up} < {self.t_down}")
        if not self.points:
            raise TraceValidationError("touch.points-nonempty", f"touch {self.id}")
        last = None
        for p in self.points:
            if p.t < self.t_down or p.t > self.t_up:
                raise TraceValidationError(
                    "touch.point-in-span",
                    f"touch {self.id}: point t={p.t} outside [{self.t_down}, {self.t_up}]")
            if last is not None and p.t < last:
                raise TraceValidationError("touch.points-ordered", f"touch {self.id}")
            if p.pressure < 0:
                raise TraceValidationError("touch.pressure>=0", f"touch {self.id}")
            last = p.t

    @property
    def duration_ms(self) -> int:
        return self.t_up - self.t_down

    def path_length(self) -> float:
        pts = self.points
        return float(sum(math.hypot(b.x - a.x, b.y - a.y) for a, b in zip(pts, pts[1:])))

    def centroid(self) -> tuple[float, float]:
        xs = [p.x for p in self.points]
        ys = [p.y for p in self.points]
        return float(np.mean(xs)), float(np.mean(ys))

    def mean_pressure(self) -> float:
        return float(np.mean([p.pressure for p in self.points]))


@dataclass(frozen=True)
class AppEvent:
    t: int
    app: str
    sensitive: bool

    def __post_init__(self):
        if not self.app:
            raise TraceValidationError("app.nonempty", f"app event at t={self.t}")


@dataclass(frozen=True)
class LabelInterval:
    t_start: int
    t_end: int
    user: str
    scenario: Scenario


@dataclass(frozen=True)
class TraceMeta:
    fs: float = 100.0           # nominal IMU rate, Hz
    screen_w: int = 1080
    screen_h: int = 1800
    pressure_unit: str = "level"
    touch_rate_hz: float = 85.0


class ImuSeries:
    """Time-stamped 3-axis accelerometer + gyroscope stream.

    Arrays are frozen after construction; timestamps must be strictly
    increasing with no gap longer than 3 nominal sample periods.
    """

    def __init__(self, t: np.ndarray, accel: np.ndarray, gyro: np.ndarray, fs: float = 100.0):
        self.t = np.asarray(t, dtype=np.int64)
        self.accel = np.asarray(accel, dtype=np.float64)
        self.gyro = np.asarray(gyro, dtype=np.float64)
        self.fs = float(fs)
        n = len(self.t)
        if self.accel.shape != (n, 3) or self.gyro.shape != (n, 3):
            raise TraceValidationError("imu.shape", f"expected ({n},3) accel/gyro arrays")
        if not (np.isfinite(self.accel).all() and np.isfinite(self.gyro).all()):
            raise TraceValidationError("imu.finite", "non-finite sensor value")
        if n > 1:
            dt = np.diff(self.t)
            if (dt <= 0).any():
                raise TraceValidationError("imu.strictly-increasing",
                                           f"at index {int(np.argmax(dt <= 0)) + 1}")
            max_gap = 3.0 * 1000.0 / self.fs
            if (dt > max_gap).any():
                raise TraceValidationError(
                    "imu.max-gap",
                    f"gap {int(dt.max())} ms exceeds 3 sample periods ({max_gap:.1f} ms)")
        for arr in (self.t, self.accel, self.gyro):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.t)

    @staticmethod
    def empty(fs: float = 100.0) -> "ImuSeries":
        return ImuSeries(np.empty(0, dtype=np.int64), np.empty((0, 3)), np.empty((0, 3)), fs)

    def slice_ms(self, t0: int, t1: int) -> "ImuSeries":
        """Samples with t0 <= t <= t1."""
        i0, i1 = np.searchsorted(self.t, [t0, t1 + 1])
        return ImuSeries(self.t[i0:i1], self.accel[i0:i1], self.gyro[i0:i1], self.fs)


@dataclass
class SessionTrace:
    imu: ImuSeries
    touches: list[TouchEvent] = field(default_factory=list)
    app_events: list[AppEvent] = field(default_factory=list)
    labels: list[LabelInterval] = field(default_factory=list)
    meta: TraceMeta = field(default_factory=TraceMeta)

    def validate(self) -> "SessionTrace":
        ivs = sorted(self.labels, key=lambda l: l.t_start)
        for a, b in zip(ivs, ivs[1:]):
            if b.t_start < a.t_end:
                raise TraceValidationError(
                    "labels.non-overlapping",
                    f"[{a.t_start},{a.t_end}) overlaps [{b.t_start},{b.t_end})")
        if ivs:
            for e in self.touches:
                if not any(l.t_start <= e.t_down and e.t_up <= l.t_end for l in ivs):
                    raise TraceValidationError(
                        "touch.inside-label",
                        f"touch {e.id} at [{e.t_down},{e.t_up}] outside all label intervals")
        return self

    def label_at(self, t: int) -> LabelInterval | None:
        for l in self.labels:
            if l.t_start <= t <= l.t_end:
                return l
        return None


def classify_gesture(e: TouchEvent,
                     tap_max_path_px: float = 10.0,
                     tap_max_ms: int = 300,
                     fling_min_speed_px_s: float = 1000.0) -> Gesture:
    """Label one touch from its path geometry.

    Tap: short path and short duration. Otherwise fling if the mean speed
    is high, else scroll. Total on every valid event.
    """
    path = e.path_length()
    dur = e.duration_ms
    if path < tap_max_path_px and dur < tap_max_ms:
        return Gesture.TAP
    speed = path / (dur / 1000.0) if dur > 0 else float("inf") if path > 0 else 0.0
    if speed > fling_min_speed_px_s:
        return Gesture.FLING
    return Gesture.SCROLL


# --- canonical JSONL serialization -----------------------------------------

def _f(x: float) -> str:
    # fixed 6-decimal canonical float; round-trips exactly through parse/write
    return f"{float(x):.6f}"


def _vec(v) -> str:
    return "[" + ",".join(_f(c) for c in v) + "]"


def _meta_line(m: TraceMeta) -> str:
    return ('{"kind":"meta","fs":' + _f(m.fs) +
            ',"screen_w":' + str(int(m.screen_w)) +
            ',"screen_h":' + str(int(m.screen_h)) +
            ',"pressure_unit":' + json.dumps(m.pressure_unit) +
            ',"touch_rate_hz":' + _f(m.touch_rate_hz) + "}")


def _touch_line(e: TouchEvent) -> str:
    pts = ",".join(
        "[" + str(int(p.t)) + "," + _f(p.x) + "," + _f(p.y) + "," +
        _f(p.pressure) + "," + _f(p.area) + "]"
        for p in e.points)
    return ('{"kind":"touch","id":' + str(int(e.id)) +
            ',"app":' + json.dumps(e.app) +
            ',"t_down":' + str(int(e.t_down)) +
            ',"t_up":' + str(int(e.t_up)) +
            ',"points":[' + pts + "]}")


def write_trace(trace: SessionTrace, path: str) -> None:
    """Write a validated trace as canonical JSONL (see module docstring)."""
    trace.validate()
    records: list[tuple[int, int, str]] = []  # (t, kind-order, line)
    for i in range(len(trace.imu)):
        records.append((int(trace.imu.t[i]), 1,
                        '{"kind":"imu","t":' + str(int(trace.imu.t[i])) +
                        ',"accel":' + _vec(trace.imu.accel[i]) +
                        ',"gyro":' + _vec(trace.imu.gyro[i]) + "}"))
    for e in trace.touches:
        records.append((e.t_down, 2, _touch_line(e)))
    for a in trace.app_events:
        records.append((a.t, 0,
                        '{"kind":"app","t":' + str(int(a.t)) +
                        ',"app":' + json.dumps(a.app) +
                        ',"sensitive":' + ("true" if a.sensitive else "false") + "}"))
    records.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w") as fh:
        has_content = bool(records or trace.labels)
        if has_content:
            fh.write(_meta_line(trace.meta) + "\n")
            for l in sorted(trace.labels, key=lambda l: l.t_start):
                fh.write('{"kind":"label","t_start":' + str(int(l.t_start)) +
                         ',"t_end":' + str(int(l.t_end)) +
                         ',"user":' + json.dumps(l.user) +
                         ',"scenario":' + json.dumps(l.scenario.value) + "}\n")
            for _, _, line in records:
                fh.write(line + "\n")


def parse_trace(path: str) -> SessionTrace:
    """Parse a JSONL trace file into a validated SessionTrace.

    Malformed lines raise TraceParseError with the 1-based line number;
    invariant violations raise TraceValidationError naming the invariant.
    """
    imu_rows: list[tuple[int, list, list]] = []
    touches: list[TouchEvent] = []
    app_events: list[AppEvent] = []
    labels: list[LabelInterval] = []
    meta = TraceMeta()
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise TraceParseError(line_no, f"invalid JSON ({exc.msg})") from exc
            try:
                kind = rec["kind"]
                if kind == "imu":
                    imu_rows.append((int(rec["t"]), rec["accel"], rec["gyro"]))
                elif kind == "touch":
                    pts = tuple(TouchPoint(int(t), float(x), float(y), float(pr), float(ar))
                                for t, x, y, pr, ar in rec["points"])
                    touches.append(TouchEvent(int(rec["id"]), rec["app"],
                                              int(rec["t_down"]), int(rec["t_up"]), pts))
                elif kind == "app":
                    app_events.append(AppEvent(int(rec["t"]), rec["app"], bool(rec["sensitive"])))
                elif kind == "label":
                    labels.append(LabelInterval(int(rec["t_start"]), int(rec["t_end"]),
                                                rec["user"], Scenario(rec["scenario"])))
                elif kind == "meta":
                    meta = TraceMeta(float(rec["fs"]), int(rec["screen_w"]),
                                     int(rec["screen_h"]), rec["pressure_unit"],
                                     float(rec["touch_rate_hz"]))
                else:
                    raise TraceParseError(line_no, f"unknown record kind {kind!r}")
            except TraceError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise TraceParseError(line_no, f"bad {rec.get('kind', '?')} record: {exc}") from exc
    imu_rows.sort(key=lambda r: r[0])
    if imu_rows:
        t = np.array([r[0] for r in imu_rows], dtype=np.int64)
        accel = np.array([r[1] for r in imu_rows], dtype=np.float64)
        gyro = np.array([r[2] for r in imu_rows], dtype=np.float64)
        imu = ImuSeries(t, accel, gyro, meta.fs)
    else:
        imu = ImuSeries.empty(meta.fs)
    touches.sort(key=lambda e: e.t_down)
    app_events.sort(key=lambda a: a.t)
    labels.sort(key=lambda l: l.t_start)
    return SessionTrace(imu, touches, app_events, labels, meta).validate()
