"""Streaming identity tracking over per-observation judgements.

Consistent judgements accumulate confidence multiplicatively:
P <- 1 - (1 - P)(1 - eps). An inconsistent judgement starts a new run from
scratch at P = eps. A conclusion is emitted once P exceeds the threshold;
the run keeps accumulating afterwards so a stable user is not re-proven
from zero, and each emission feeds the run's high-confidence observations
into the self-learning buffers exactly once.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .features import Observation
from .svm import Judgement, TrainingBuffers


@dataclass(frozen=True)
class Conclusion:
    is_owner: bool
    confidence: float
    delay: int          # observations in the run, inclusive
    t: int              # ms of the triggering observation
    initial: bool       # first emission of this run


@dataclass(frozen=True)
class ProtectionEvent:
    kind: str           # "enable" | "reset"
    t: int
    confidence: float


@dataclass
class RunEntry:
    judgement: Judgement
    observation: Observation | None
    t: int


@dataclass
class IdentityState:
    verdict: bool | None = None     # shared verdict of the current run
    confidence: float = 0.0         # P over the run
    start_index: int = 0            # s: global index of the run's first judgement
    index: int = -1                 # k: global index of the latest judgement
    log: list[RunEntry] = field(default_factory=list)
    buffered_upto: int = 0          # run-log cursor for buffer feeding
    concluded: bool = False         # run already emitted a conclusion

    @property
    def delay(self) -> int:
        return len(self.log)

    def recompute(self) -> float:
        """P recomputed from the run log; matches the incremental value."""
        q = 1.0
        for entry in self.log:
            q *= 1.0 - entry.judgement.confidence
        return 1.0 - q


def ingest(state: IdentityState, j: Judgement, obs: Observation | None = None,
           t: int = 0) -> IdentityState:
    """Fold one judgement into the state (mutates and returns it)."""
    if not 0.5 <= j.confidence <= 1.0:
        raise ValueError(f"judgement confidence {j.confidence} outside [0.5, 1]")
    state.index += 1
    if state.verdict is None or j.is_owner != state.verdict:
        state.verdict = j.is_owner
        state.confidence = j.confidence
        state.start_index = state.index
        state.log = [RunEntry(j, obs, t)]
        state.buffered_upto = 0
        state.concluded = False
    else:
        state.confidence = 1.0 - (1.0 - state.confidence) * (1.0 - j.confidence)
        state.log.append(RunEntry(j, obs, t))
    return state


def try_conclude(state: IdentityState, p_theta: float = 0.98) -> Conclusion | None:
    """Conclusion iff the accumulated confidence exceeds p_theta."""
    if state.verdict is None or state.confidence <= p_theta:
        return None
    c = Conclusion(is_owner=state.verdict, confidence=state.confidence,
                   delay=state.delay, t=state.log[-1].t,
                   initial=not state.concluded)
    state.concluded = True
    return c


def on_conclusion(c: Conclusion, state: IdentityState,
                  buffers: TrainingBuffers) -> ProtectionEvent:
    """Protection event for a conclusion, plus buffer feeding.

    Guests enable protection; the owner resets it. The run's observations
    with confidence at or above the buffer threshold are appended to the
    matching buffer; the cursor guarantees each observation is buffered at
    most once across repeated emissions from one run.
    """
    for entry in state.log[state.buffered_upto:]:
        if entry.observation is not None:
            buffers.add(entry.observation, entry.judgement.confidence, c.is_owner)
    state.buffered_upto = len(state.log)
    return ProtectionEvent(kind="reset" if c.is_owner else "enable",
                           t=c.t, confidence=c.confidence)


def reset_run(state: IdentityState) -> IdentityState:
    """Forget the current run (used when sensing resumes after a gap)."""
    state.verdict = None
    state.confidence = 0.0
    state.log = []
    state.buffered_upto = 0
    state.concluded = False
    return state
