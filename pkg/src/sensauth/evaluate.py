"""End-to-end harness: observation extraction, self-learning model bank,
always-on curve evaluation, online scheduling evaluation, and reports.

Evaluation protocol per trace:

* The first labeled user is the device owner. The warm-up is the owner's
  first 100 static actions (or, when walking, enough actions to cover 30
  steps); those actions train the initial one-class models and are never
  scored. Guest actions that arrive before warm-up completes are skipped.
* Always-on pass: every post-warmup action is judged and logged with its
  ground truth; conclusions feed the self-learning buffers so the one-class
  model upgrades to two-class as guest evidence accumulates. FAR/FRR curves
  come from sliding windows over this judgement log: a window of n
  consecutive same-truth actions (or, walking, actions spanning n steps)
  yields a conclusion only when its judgements agree; wrong conclusions
  count against the window's true class, and every window counts in the
  denominator. At n = 1 this is exactly the per-action misjudgement ratio.
* Online pass: same judging plus the sensing scheduler. Off-mode actions
  are processed from touch metadata only (no judgement, no energy). The
  sensors-off fraction over scored actions is the energy-saved proxy.

The scenario of each action is decided from a 2 s motion window that ends
100 ms before touch-down, so the touch's own reaction pulse cannot register
as motion.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import dsp, identify, schedule, svm
from .config import Config
from .features import (Observation, Scaler, NotWalking, motion_observation,
                       nearest_step, static_observation)
from .trace import Gesture, Scenario, SessionTrace, parse_trace
from .simulate import SCREEN_W, SCREEN_H

BANK_FORMAT_VERSION = 1

GESTURES = (Gesture.TAP, Gesture.SCROLL, Gesture.FLING)


# --- per-trace stream precomputation ----------------------------------------

@dataclass
class MotionStreams:
    t: np.ndarray
    ea_v: np.ndarray
    ea_h: np.ndarray
    steps: list[dsp.Step]


def compute_streams(trace: SessionTrace, cfg: Config) -> MotionStreams:
    d = cfg.dsp
    if len(trace.imu) == 0:
        return MotionStreams(trace.imu.t, np.empty(0), np.empty(0), [])
    earth = dsp.earth_stream(trace.imu, d.gravity_cutoff_hz)
    fs = trace.imu.fs
    fn = dsp.bandpass(earth.north, fs, d.band_low_hz, d.band_high_hz)
    fe = dsp.bandpass(earth.east, fs, d.band_low_hz, d.band_high_hz)
    fv = dsp.bandpass(earth.vertical, fs, d.band_low_hz, d.band_high_hz)
    ea_v = fv
    ea_h = np.hypot(fn, fe)
    steps = dsp.detect_steps(ea_v, trace.imu.t, d)
    return MotionStreams(trace.imu.t, ea_v, ea_h, steps)


@dataclass
class ActionContext:
    index: int
    t: int
    app: str
    sensitive: bool
    switch_to_sensitive: bool
    gesture: Gesture
    scenario: Scenario
    observation: Observation | None
    truth_user: str | None
    step_ordinal: int | None       # global index of the paired step (walking)


def _scenario_for(streams: MotionStreams, t_down: int, cfg: Config) -> Scenario:
    d = cfg.dsp
    t1 = t_down - 100
    t0 = t1 - d.scenario_window_ms
    k = 0
    for s in streams.steps:
        if s.t_end >= t0 and s.t_start <= t1:
            k += 1
            if k >= 2:
                return Scenario.WALKING
    return Scenario.STATIC


def extract_actions(trace: SessionTrace, streams: MotionStreams, cfg: Config) -> list[ActionContext]:
    """One context per touch, in time order."""
    from .features import classify
    d = cfg.dsp
    actions: list[ActionContext] = []
    app_events = sorted(trace.app_events, key=lambda a: a.t)
    ev_i = 0
    cur_sensitive = False
    cur_app = ""
    fs = trace.imu.fs
    for idx, e in enumerate(sorted(trace.touches, key=lambda e: e.t_down)):
        switch = False
        while ev_i < len(app_events) and app_events[ev_i].t <= e.t_down:
            ev = app_events[ev_i]
            if ev.sensitive and not cur_sensitive:
                switch = True
            cur_sensitive = ev.sensitive
            cur_app = ev.app
            ev_i += 1
        scenario = _scenario_for(streams, e.t_down, cfg)
        obs = None
        step_ord = None
        try:
            if scenario is Scenario.WALKING:
                step = nearest_step(streams.steps, e.t_down, d.scenario_window_ms)
                if step is not None:
                    step_ord = streams.steps.index(step)
                obs = motion_observation(e, streams.steps, streams.ea_v, streams.ea_h,
                                         streams.t, e.app, fs, d, d.scenario_window_ms)
            else:
                obs = static_observation(e, trace.imu, e.app, d)
        except (NotWalking, dsp.DspError):
            obs = None
        label = trace.label_at(e.t_down)
        actions.append(ActionContext(
            index=idx, t=e.t_down, app=cur_app or e.app, sensitive=cur_sensitive,
            switch_to_sensitive=switch, gesture=classify(e, d), scenario=scenario,
            observation=obs, truth_user=label.user if label else None,
            step_ordinal=step_ord))
    return actions


# --- self-learning model bank ------------------------------------------------

@dataclass
class ModelBank:
    """Per-scenario scaler, novelty envelope, and discriminator models.

    The envelope is a one-class model of the owner; it stays in the loop
    after the two-class upgrade because a discriminator can only separate
    guests it has trained on. A guest unseen at training time may land on
    the owner side of the discriminator, so an owner verdict is vetoed when
    the observation sits in the envelope's far field, where the kernel mass
    of the owner's data is essentially zero. The veto fires only on clear
    novelty (margin below 75% of the far-field floor -rho and several
    margin-scale units negative), never at the nu boundary itself, so the
    owner's own distribution tail is not re-rejected.

    An optional feature mask restricts which raw dimensions the models see
    (used by the walking-feature ablation); scaling happens after masking.
    """
    scenario: Scenario
    scaler: Scaler
    pooled: svm.SvmModel
    envelope: svm.SvmModel
    per_gesture: dict[Gesture, svm.SvmModel] = field(default_factory=dict)
    feature_mask: tuple[int, ...] | None = None
    two_class: bool = False

    def vector(self, o: Observation) -> np.ndarray:
        x = o.features
        if self.feature_mask is not None:
            x = x[list(self.feature_mask)]
        return self.scaler.transform(x)

    def _novelty_veto(self, x: np.ndarray) -> svm.Judgement | None:
        d = self.envelope.decision(x)
        if d < -0.75 * self.envelope.bias and d < -2.0 * self.envelope.margin_scale:
            return svm.judge_vector(self.envelope, x)
        return None

    def judge(self, o: Observation) -> svm.Judgement:
        if o.scenario is not self.scenario:
            raise ValueError(f"bank is for {self.scenario.value} observations")
        x = self.vector(o)
        model = self.per_gesture.get(o.gesture, self.pooled)
        j = svm.judge_vector(model, x)
        if j.is_owner and model is not self.envelope:
            veto = self._novelty_veto(x)
            if veto is not None:
                return veto
        return j

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "scaler": self.scaler.to_dict(),
            "pooled": self.pooled.to_dict(),
            "envelope": self.envelope.to_dict(),
            "per_gesture": {g.value: m.to_dict() for g, m in self.per_gesture.items()},
            "feature_mask": list(self.feature_mask) if self.feature_mask else None,
            "two_class": self.two_class,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelBank":
        return ModelBank(
            scenario=Scenario(d["scenario"]),
            scaler=Scaler.from_dict(d["scaler"]),
            pooled=svm.SvmModel.from_dict(d["pooled"]),
            envelope=svm.SvmModel.from_dict(d["envelope"]),
            per_gesture={Gesture(g): svm.SvmModel.from_dict(m)
                         for g, m in d["per_gesture"].items()},
            feature_mask=tuple(d["feature_mask"]) if d.get("feature_mask") else None,
            two_class=bool(d.get("two_class", False)),
        )


def _mask_rows(rows: list[np.ndarray], mask: tuple[int, ...] | None) -> np.ndarray:
    X = np.stack(rows)
    return X[:, list(mask)] if mask is not None else X


def train_bank(scenario: Scenario, warmup: list[Observation], cfg: Config,
               feature_mask: tuple[int, ...] | None = None) -> ModelBank:
    """Initial one-class bank from the owner's warm-up observations."""
    s = cfg.svm
    raw = _mask_rows([o.features for o in warmup], feature_mask)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    scaler = Scaler(mean=mean, std=std, scenario=scenario)
    X = (raw - mean) / std
    pooled = svm.train_one_class(X, nu=s.nu, gamma=s.gamma, tol=s.tol,
                                 max_iter=s.max_iter)
    pooled.scenario = scenario
    bank = ModelBank(scenario=scenario, scaler=scaler, pooled=pooled,
                     envelope=pooled, feature_mask=feature_mask)
    for g in GESTURES:
        rows = [o.features for o in warmup if o.gesture is g]
        if len(rows) >= s.per_gesture_min:
            Xg = (( _mask_rows(rows, feature_mask)) - mean) / std
            m = svm.train_one_class(Xg, nu=s.nu, gamma=s.gamma, tol=s.tol,
                                    max_iter=s.max_iter, min_samples=s.per_gesture_min)
            m.scenario = scenario
            m.gesture = g
            bank.per_gesture[g] = m
    return bank


def retrain_bank(bank: ModelBank, buffers: svm.TrainingBuffers, cfg: Config) -> None:
    """Rebuild the bank's models from the current buffers (scaler kept).

    Pooled and per-gesture models become two-class once enough guest
    evidence exists; otherwise they refresh as one-class on owner data.
    Training failures keep the previous model.
    """
    s = cfg.svm
    own_rows = [e.observation.features for e in buffers.owner]
    gst_rows = [e.observation.features for e in buffers.guest]
    if len(own_rows) < s.per_gesture_min:
        return
    Xo = bank.scaler.transform(_mask_rows(own_rows, bank.feature_mask))
    Xg = (bank.scaler.transform(_mask_rows(gst_rows, bank.feature_mask))
          if gst_rows else np.empty((0, Xo.shape[1])))
    try:
        envelope = svm.train_one_class(Xo, nu=s.nu, gamma=s.gamma, tol=s.tol,
                                       max_iter=s.max_iter)
        envelope.scenario = bank.scenario
        if len(Xg) >= s.upgrade_guest_min:
            pooled = svm.train_two_class(Xo, Xg, C=s.C, gamma=s.gamma, tol=s.tol,
                                         max_iter=s.max_iter * 10,
                                         calib_holdout=s.calib_holdout_frac)
            bank.two_class = True
        else:
            pooled = envelope
        pooled.scenario = bank.scenario
        bank.pooled = pooled
        bank.envelope = envelope
    except svm.TrainingError:
        return
    for g in GESTURES:
        o_rows = [e.observation.features for e in buffers.owner if e.observation.gesture is g]
        g_rows = [e.observation.features for e in buffers.guest if e.observation.gesture is g]
        if len(o_rows) < s.per_gesture_min or (bank.two_class and len(g_rows) < 5):
            # not enough per-gesture data for the bank's current kind; fall
            # back to the pooled model rather than keep a stale or
            # mismatched per-gesture one
            bank.per_gesture.pop(g, None)
            continue
        Xog = bank.scaler.transform(_mask_rows(o_rows, bank.feature_mask))
        try:
            if bank.two_class:
                Xgg = bank.scaler.transform(_mask_rows(g_rows, bank.feature_mask))
                m = svm.train_two_class(Xog, Xgg, C=s.C, gamma=s.gamma, tol=s.tol,
                                        max_iter=s.max_iter * 10,
                                        calib_holdout=s.calib_holdout_frac)
            else:
                m = svm.train_one_class(Xog, nu=s.nu, gamma=s.gamma, tol=s.tol,
                                        max_iter=s.max_iter,
                                        min_samples=s.per_gesture_min)
            m.scenario = bank.scenario
            m.gesture = g
            bank.per_gesture[g] = m
        except svm.TrainingError:
            continue


def banks_to_json(banks: dict[Scenario, ModelBank]) -> str:
    payload = {"format_version": BANK_FORMAT_VERSION,
               "banks": {sc.value: b.to_dict() for sc, b in banks.items()}}
    return json.dumps(payload, sort_keys=True)


def banks_from_json(text: str) -> dict[Scenario, ModelBank]:
    payload = json.loads(text)
    if payload.get("format_version") != BANK_FORMAT_VERSION:
        raise ValueError(f"unsupported model format {payload.get('format_version')}")
    return {Scenario(k): ModelBank.from_dict(v) for k, v in payload["banks"].items()}


# --- warm-up ------------------------------------------------------------------

@dataclass
class WarmupResult:
    banks: dict[Scenario, ModelBank]
    buffers: dict[Scenario, svm.TrainingBuffers]
    retrain: dict[Scenario, svm.RetrainState]
    first_scored_index: dict[Scenario, int]
    owner: str


def run_warmup(actions: list[ActionContext], cfg: Config) -> WarmupResult:
    """Train initial banks from the owner's leading actions."""
    owner = next((a.truth_user for a in actions if a.truth_user), None)
    if owner is None:
        raise ValueError("trace has no labels; evaluation needs ground truth")
    e = cfg.eval
    mask = (0, 1, 2, 3) if e.ablate_walking_features else None
    collected: dict[Scenario, list[Observation]] = {Scenario.STATIC: [], Scenario.WALKING: []}
    banks: dict[Scenario, ModelBank] = {}
    buffers: dict[Scenario, svm.TrainingBuffers] = {}
    retrain: dict[Scenario, svm.RetrainState] = {}
    first_scored: dict[Scenario, int] = {}
    scenarios_present = {a.scenario for a in actions}
    for a in actions:
        if all(sc in banks for sc in scenarios_present):
            break
        if a.scenario in banks or a.observation is None or a.truth_user != owner:
            continue
        collected[a.scenario].append(a.observation)
        done = False
        if a.scenario is Scenario.STATIC:
            done = len(collected[a.scenario]) >= e.warmup_static_actions
        else:
            enough_steps = (a.step_ordinal or 0) + 1 >= e.warmup_walk_steps
            done = enough_steps and len(collected[a.scenario]) >= cfg.svm.per_gesture_min
        if done:
            wm = mask if a.scenario is Scenario.WALKING else None
            banks[a.scenario] = train_bank(a.scenario, collected[a.scenario], cfg, wm)
            buf = svm.TrainingBuffers(owner_cap=cfg.svm.owner_buffer_cap,
                                      guest_cap=cfg.svm.guest_buffer_cap,
                                      min_confidence=cfg.svm.buffer_min_confidence)
            for o in collected[a.scenario]:
                buf.add(o, 1.0, True)
            buffers[a.scenario] = buf
            retrain[a.scenario] = svm.RetrainState(owner_at_last=buf.owner_added)
            first_scored[a.scenario] = a.index + 1
    return WarmupResult(banks=banks, buffers=buffers, retrain=retrain,
                        first_scored_index=first_scored, owner=owner)


# --- always-on pass -----------------------------------------------------------

def _maybe_retrain(scenario: Scenario, warm: WarmupResult, cfg: Config) -> None:
    kind = svm.should_retrain(warm.buffers[scenario], warm.retrain[scenario], cfg.svm)
    if kind:
        retrain_bank(warm.banks[scenario], warm.buffers[scenario], cfg)
        warm.retrain[scenario].owner_at_last = warm.buffers[scenario].owner_added
        warm.retrain[scenario].guest_at_last = warm.buffers[scenario].guest_added
        warm.retrain[scenario].two_class = warm.banks[scenario].two_class


def _buffer_run(c: identify.Conclusion, state: identify.IdentityState,
                warm: WarmupResult, cfg: Config) -> identify.ProtectionEvent:
    """Like identify.on_conclusion but routes each run observation into the
    buffer of its own scenario (runs may mix scenarios).

    Guest-concluded observations are buffered only when they sit in the
    owner envelope's far field: a guest conclusion can be a run of false
    rejections of the owner's own distribution tail, and training the
    discriminator on those as guest data would entrench the rejections.
    """
    touched = set()
    for entry in state.log[state.buffered_upto:]:
        o = entry.observation
        if o is None or o.scenario not in warm.buffers:
            continue
        if not c.is_owner:
            bank = warm.banks[o.scenario]
            if bank._novelty_veto(bank.vector(o)) is None:
                continue
        warm.buffers[o.scenario].add(o, entry.judgement.confidence, c.is_owner)
        touched.add(o.scenario)
    state.buffered_upto = len(state.log)
    for sc in touched:
        _maybe_retrain(sc, warm, cfg)
    return identify.ProtectionEvent(kind="reset" if c.is_owner else "enable",
                                    t=c.t, confidence=c.confidence)


def judgement_pass(actions: list[ActionContext], warm: WarmupResult,
                   cfg: Config) -> list[dict]:
    """Judge every scored action with self-learning active; returns the
    judgement log (one dict per scored action)."""
    log: list[dict] = []
    ident = {sc: identify.IdentityState() for sc in warm.banks}
    for a in actions:
        bank = warm.banks.get(a.scenario)
        if bank is None or a.observation is None or a.truth_user is None:
            continue
        if a.index < warm.first_scored_index.get(a.scenario, 0):
            continue
        j = bank.judge(a.observation)
        st = ident[a.scenario]
        identify.ingest(st, j, a.observation, a.t)
        c = None
        if not st.concluded:
            c = identify.try_conclude(st, cfg.scheduler.p_theta)
        if c is not None:
            _buffer_run(c, st, warm, cfg)
        log.append({
            "i": a.index, "t": a.t,
            "scenario": a.scenario.value, "gesture": a.gesture.value,
            "truth_owner": a.truth_user == warm.owner,
            "judged_owner": bool(j.is_owner),
            "confidence": float(j.confidence),
            "decision_value": float(j.decision_value),
            "step_ordinal": a.step_ordinal,
            "user": a.truth_user,
        })
    return log


# --- FAR/FRR curves -----------------------------------------------------------

@dataclass
class WindowCounts:
    """Counts per window length: total windows and wrong conclusions, split
    by the window's true class."""
    guest_total: dict[int, int] = field(default_factory=dict)
    guest_wrong: dict[int, int] = field(default_factory=dict)
    owner_total: dict[int, int] = field(default_factory=dict)
    owner_wrong: dict[int, int] = field(default_factory=dict)

    def add(self, n: int, truth_owner: bool, wrong: bool):
        tot = self.owner_total if truth_owner else self.guest_total
        wr = self.owner_wrong if truth_owner else self.guest_wrong
        tot[n] = tot.get(n, 0) + 1
        if wrong:
            wr[n] = wr.get(n, 0) + 1

    def merge(self, other: "WindowCounts"):
        for mine, theirs in ((self.guest_total, other.guest_total),
                             (self.guest_wrong, other.guest_wrong),
                             (self.owner_total, other.owner_total),
                             (self.owner_wrong, other.owner_wrong)):
            for k, v in theirs.items():
                mine[k] = mine.get(k, 0) + v

    def far(self, n: int) -> float | None:
        tot = self.guest_total.get(n, 0)
        return self.guest_wrong.get(n, 0) / tot if tot else None

    def frr(self, n: int) -> float | None:
        tot = self.owner_total.get(n, 0)
        return self.owner_wrong.get(n, 0) / tot if tot else None


def _spans(records: list[dict]) -> list[list[dict]]:
    """Maximal runs of consecutive records sharing one true user."""
    spans: list[list[dict]] = []
    for r in records:
        if spans and spans[-1][-1]["user"] == r["user"]:
            spans[-1].append(r)
        else:
            spans.append([r])
    return spans


def compute_far_frr(records: list[dict], max_n: int, by_steps: bool = False) -> WindowCounts:
    """Sliding-window FAR/FRR counts over a labeled judgement stream.

    For each window size n, windows of n consecutive same-user actions (or,
    with by_steps, minimal action runs spanning n distinct steps) form a
    conclusion when all judgements agree; a conclusion for the wrong class
    increments the wrong count. Every window increments the total.
    """
    counts = WindowCounts()
    for span in _spans(records):
        truth_owner = bool(span[0]["truth_owner"])
        for n in range(1, max_n + 1):
            for i in range(len(span)):
                if by_steps:
                    j = _step_window_end(span, i, n)
                    if j is None:
                        continue
                else:
                    j = i + n - 1
                    if j >= len(span):
                        break
                window = span[i:j + 1]
                verdicts = {w["judged_owner"] for w in window}
                wrong = len(verdicts) == 1 and (verdicts.pop() != truth_owner)
                counts.add(n, truth_owner, wrong)
    return counts


def _step_window_end(span: list[dict], i: int, n: int) -> int | None:
    """Smallest j >= i such that records i..j span >= n distinct steps."""
    first = span[i].get("step_ordinal")
    if first is None:
        return None
    for j in range(i, len(span)):
        o = span[j].get("step_ordinal")
        if o is None:
            continue
        if o - first + 1 >= n:
            return j
    return None


def curve_table(counts: WindowCounts, max_n: int) -> list[dict]:
    rows = []
    for n in range(1, max_n + 1):
        rows.append({"n": n, "far": counts.far(n), "frr": counts.frr(n),
                     "guest_windows": counts.guest_total.get(n, 0),
                     "owner_windows": counts.owner_total.get(n, 0)})
    return rows


def far_frr_crossing(rows: list[dict]) -> float | None:
    """Window length where FAR and FRR cross, linearly interpolated."""
    prev = None
    for row in rows:
        if row["far"] is None or row["frr"] is None:
            continue
        diff = row["far"] - row["frr"]
        if prev is not None:
            p_n, p_diff = prev
            if p_diff == 0.0:
                return float(p_n)
            if (p_diff > 0) != (diff > 0):
                frac = abs(p_diff) / (abs(p_diff) + abs(diff))
                return p_n + frac * (row["n"] - p_n)
        prev = (row["n"], diff)
    if prev is not None and prev[1] == 0.0:
        return float(prev[0])
    return None


# --- heatmap -------------------------------------------------------------------

@dataclass
class Heatmap:
    rows: int
    cols: int
    vib_sum: np.ndarray
    rot_sum: np.ndarray
    count: np.ndarray

    def mean_vibration(self) -> np.ndarray:
        return np.divide(self.vib_sum, self.count,
                         out=np.zeros_like(self.vib_sum), where=self.count > 0)

    def mean_rotation(self) -> np.ndarray:
        return np.divide(self.rot_sum, self.count,
                         out=np.zeros_like(self.rot_sum), where=self.count > 0)


def reaction_heatmap(taps: list[tuple[float, float, float, float]],
                     rows: int = 25, cols: int = 15,
                     screen_w: float = SCREEN_W, screen_h: float = SCREEN_H) -> Heatmap:
    """Aggregate (x, y, vibration, rotation) tap tuples onto a rows x cols
    screen grid; coordinates are rescaled to the logical screen."""
    hm = Heatmap(rows, cols, np.zeros((rows, cols)), np.zeros((rows, cols)),
                 np.zeros((rows, cols), dtype=np.int64))
    for x, y, vib, rot in taps:
        c = min(int(x * cols / screen_w), cols - 1)
        r = min(int(y * rows / screen_h), rows - 1)
        if c < 0 or r < 0:
            continue
        hm.vib_sum[r, c] += vib
        hm.rot_sum[r, c] += rot
        hm.count[r, c] += 1
    return hm


def heatmap_csv(hm: Heatmap) -> str:
    lines = ["row,col,mean_vibration,mean_rotation,count"]
    mv, mr = hm.mean_vibration(), hm.mean_rotation()
    for r in range(hm.rows):
        for c in range(hm.cols):
            lines.append(f"{r},{c},{mv[r, c]:.6f},{mr[r, c]:.6f},{int(hm.count[r, c])}")
    return "\n".join(lines) + "\n"


# --- online pass ----------------------------------------------------------------

def online_pass(actions: list[ActionContext], warm: WarmupResult, cfg: Config
                ) -> tuple[list[dict], list[dict], list[dict]]:
    """Scheduler-driven pass; returns (decision log, conclusion log,
    protection event log)."""
    sch = cfg.scheduler
    energy = schedule.EnergyModel(sch.energy_per_observation)
    st = schedule.new_state(sch)
    ident = identify.IdentityState()
    history: list[bool] = []
    decisions: list[dict] = []
    conclusions: list[dict] = []
    events: list[dict] = []

    def emit(c: identify.Conclusion, truth_owner: bool):
        ev = _buffer_run(c, ident, warm, cfg)
        events.append({"t": ev.t, "kind": ev.kind, "confidence": round(ev.confidence, 9)})
        conclusions.append({"t": c.t, "is_owner": c.is_owner,
                            "confidence": round(c.confidence, 9),
                            "delay": c.delay, "initial": c.initial,
                            "truth_owner": truth_owner})
        history.append(c.is_owner)
        st.last_is_owner = c.is_owner
        if sch.learn_transfer:
            st.q_o2g, st.q_g2o = schedule.learn_transfer(
                history, sch.transfer_window,
                (sch.transfer_prior_o2g, sch.transfer_prior_g2o))

    for a in actions:
        if a.index < warm.first_scored_index.get(a.scenario, 1 << 62):
            continue
        bank = warm.banks.get(a.scenario)
        truth = (a.truth_user == warm.owner) if (a.truth_user and warm.owner) else None
        row = {"i": a.index, "t": a.t, "app": a.app, "sensitive": a.sensitive,
               "scenario": a.scenario.value, "truth_owner": truth,
               "started": False, "stopped": False, "observed": False}
        if not st.sensing:
            st.p_j = schedule.decay_estimate(st.p_j, bool(st.last_is_owner),
                                             st.q_o2g, st.q_g2o)
            if schedule.should_start(st, a.switch_to_sensitive, sch.p_phi):
                st.sensing = True
                st.reset_run()
                identify.reset_run(ident)
                row["started"] = True
        if st.sensing and bank is not None and a.observation is not None:
            j = bank.judge(a.observation)
            identify.ingest(ident, j, a.observation, a.t)
            st.confidence = ident.confidence
            schedule.account_energy(st, True, j.confidence, energy, sch.ema_decay)
            row["observed"] = True
            row["judged_owner"] = bool(j.is_owner)
            if not ident.concluded:
                c = identify.try_conclude(ident, sch.p_theta)
                if c is not None:
                    emit(c, row["truth_owner"])
            if not a.sensitive and schedule.should_stop(st, sch.p_theta):
                if ident.concluded and len(ident.log) > ident.buffered_upto:
                    c2 = identify.try_conclude(ident, sch.p_theta)
                    if c2 is not None:
                        emit(c2, row["truth_owner"])
                st.sensing = False
                st.p_j = ident.confidence
                row["stopped"] = True
        row["sensing"] = st.sensing
        row["p"] = round(st.confidence if st.sensing else st.p_j, 9)
        row["energy"] = round(st.energy, 9)
        decisions.append(row)
    return decisions, conclusions, events


# --- report --------------------------------------------------------------------

def report_from_logs(judgement_log: list[dict], decision_log: list[dict],
                     conclusion_log: list[dict], cfg: Config) -> dict:
    """A metrics report recomputable from the logs alone."""
    e = cfg.eval
    report: dict = {"version": 1}
    for scenario, by_steps in ((Scenario.STATIC, False), (Scenario.WALKING, True)):
        records = [r for r in judgement_log if r["scenario"] == scenario.value]
        if not records:
            continue
        counts = compute_far_frr(records, e.max_n, by_steps)
        pooled_rows = curve_table(counts, e.max_n)
        per_gesture = {}
        for g in GESTURES:
            sub = [r for r in records if r["gesture"] == g.value]
            if sub:
                per_gesture[g.value] = curve_table(compute_far_frr(sub, e.max_n, by_steps), e.max_n)
        per_user = {}
        for user in sorted({r["user"] for r in records}):
            sub = [r for r in records if r["user"] == user]
            cu = compute_far_frr(sub, e.max_n, by_steps)
            rows = []
            for n in range(1, e.max_n + 1):
                tot = cu.owner_total.get(n, 0) + cu.guest_total.get(n, 0)
                wrong = cu.owner_wrong.get(n, 0) + cu.guest_wrong.get(n, 0)
                rows.append({"n": n, "accuracy": (tot - wrong) / tot if tot else None})
            per_user[user] = rows
        report[scenario.value] = {
            "pooled": pooled_rows,
            "per_gesture": per_gesture,
            "per_user_accuracy": per_user,
            "far_frr_crossing": far_frr_crossing(pooled_rows),
        }
    owner_actions = sum(1 for r in judgement_log if r["truth_owner"])
    guest_actions = sum(1 for r in judgement_log if not r["truth_owner"])
    report["totals"] = {
        "owner_actions": owner_actions,
        "guest_actions": guest_actions,
        "scored_actions": owner_actions + guest_actions,
    }
    if decision_log:
        observed = sum(1 for r in decision_log if r["observed"])
        off = sum(1 for r in decision_log if not r["sensing"] and not r["observed"])
        initial = [c for c in conclusion_log if c["initial"]]
        scored = [c for c in initial if c["truth_owner"] is not None]
        correct = sum(1 for c in scored if c["is_owner"] == c["truth_owner"])
        report["online"] = {
            "actions": len(decision_log),
            "observed_actions": observed,
            "sensors_off_fraction": off / len(decision_log),
            "conclusions": len(initial),
            "conclusion_accuracy": correct / len(scored) if scored else None,
            "mean_conclusion_delay": (sum(c["delay"] for c in initial) / len(initial)
                                      if initial else None),
            "protection_enables": sum(1 for c in conclusion_log if not c["is_owner"]),
        }
    return report


@dataclass
class PipelineResult:
    report: dict
    judgement_log: list[dict]
    decision_log: list[dict]
    conclusion_log: list[dict]
    event_log: list[dict]


def run_pipeline(trace: SessionTrace, cfg: Config) -> PipelineResult:
    """Warm-up, always-on curve pass, then the online scheduling pass."""
    streams = compute_streams(trace, cfg)
    actions = extract_actions(trace, streams, cfg)
    warm = run_warmup(actions, cfg)
    if not warm.banks:
        raise ValueError("warm-up collected no owner observations; "
                         "is the trace labeled and long enough?")
    judgement_log = judgement_pass(actions, warm, cfg)
    warm2 = run_warmup(actions, cfg)
    decision_log, conclusion_log, event_log = online_pass(actions, warm2, cfg)
    report = report_from_logs(judgement_log, decision_log, conclusion_log, cfg)
    return PipelineResult(report, judgement_log, decision_log, conclusion_log, event_log)


def _write_jsonl(path: str, rows: list[dict]):
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def evaluate_traces(trace_paths: list[str], cfg: Config, out_dir: str | None = None,
                    report_path: str | None = None) -> dict:
    """Evaluate each trace and aggregate into one report (plus logs/CSVs)."""
    per_trace: dict[str, dict] = {}
    merged_judgements: list[dict] = []
    all_decisions: list[dict] = []
    all_conclusions: list[dict] = []
    for path in sorted(trace_paths):
        name = os.path.splitext(os.path.basename(path))[0]
        trace = parse_trace(path)
        res = run_pipeline(trace, cfg)
        per_trace[name] = res.report
        for r in res.judgement_log:
            r2 = dict(r)
            r2["user"] = f"{name}/{r['user']}"
            merged_judgements.append(r2)
        all_decisions.extend(res.decision_log)
        all_conclusions.extend(res.conclusion_log)
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            _write_jsonl(os.path.join(out_dir, f"{name}.judgements.jsonl"), res.judgement_log)
            _write_jsonl(os.path.join(out_dir, f"{name}.decisions.jsonl"), res.decision_log)
            _write_jsonl(os.path.join(out_dir, f"{name}.events.jsonl"), res.event_log)
    report = report_from_logs(merged_judgements, all_decisions, all_conclusions, cfg)
    report["traces"] = per_trace
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=1)
            fh.write("\n")
    if out_dir:
        _write_curves_csv(os.path.join(out_dir, "curves.csv"), report)
    return report


def _write_curves_csv(path: str, report: dict):
    lines = ["scenario,series,n,far,frr"]
    for scenario in ("static", "walking"):
        section = report.get(scenario)
        if not section:
            continue
        def fmt(v):
            return "" if v is None else f"{v:.6f}"
        for row in section["pooled"]:
            lines.append(f"{scenario},pooled,{row['n']},{fmt(row['far'])},{fmt(row['frr'])}")
        for g, rows in sorted(section["per_gesture"].items()):
            for row in rows:
                lines.append(f"{scenario},{g},{row['n']},{fmt(row['far'])},{fmt(row['frr'])}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
