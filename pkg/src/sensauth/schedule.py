"""Energy-aware sensing schedule.

Sensing stops when the accumulated confidence has cleared the conclusion
threshold and one more observation is not expected to improve the
confidence-per-energy utility U = P / E. The expectations plug in running
means of judgement confidence and per-observation energy cost, so the rule
is a one-step lookahead on the utility recurrence; ties stop.

While sensing is off, the belief that the user is unchanged decays once per
touch action through a two-state owner/guest transfer chain. Sensing
restarts when that belief falls below the restart bound or on any switch
into a sensitive app, and never stops while a sensitive app is active.
Transfer probabilities are Laplace-smoothed transition counts over a window
of recent conclusions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .config import SchedulerConfig


@dataclass
class EnergyModel:
    per_observation: float = 1.0

    def __post_init__(self):
        if self.per_observation <= 0:
            raise ValueError("per-observation energy must be > 0")


@dataclass
class SchedulerState:
    sensing: bool = True
    confidence: float = 0.0         # P over the current run (mirror)
    energy: float = 0.0             # E over the current run
    eps_bar: float = 0.75           # expected judgement confidence
    e_bar: float = 1.0              # expected per-observation energy
    last_is_owner: bool | None = None
    p_j: float = 1.0                # off-mode belief in the last conclusion
    q_o2g: float = 0.05
    q_g2o: float = 0.5

    def reset_run(self):
        self.confidence = 0.0
        self.energy = 0.0


def utility(p: float, e: float) -> float:
    """Confidence per unit of energy."""
    if e <= 0:
        raise ValueError("utility needs accumulated energy > 0")
    return p / e


def should_stop(st: SchedulerState, p_theta: float = 0.98) -> bool:
    """Stop sensing iff the pending conclusion clears p_theta and one more
    expected observation would not raise the utility."""
    if not st.sensing or st.energy <= 0:
        return False
    if st.confidence <= p_theta:
        return False
    p_next = 1.0 - (1.0 - st.confidence) * (1.0 - st.eps_bar)
    e_next = st.energy + st.e_bar
    return utility(st.confidence, st.energy) >= p_next / e_next


def decay_estimate(p_prev: float, last_is_owner: bool,
                   q_o2g: float, q_g2o: float) -> float:
    """One off-mode tick of the two-state transfer chain."""
    if last_is_owner:
        return p_prev * (1.0 - q_o2g) + (1.0 - p_prev) * q_g2o
    return p_prev * (1.0 - q_g2o) + (1.0 - p_prev) * q_o2g


def should_start(st: SchedulerState, sensitive_switch: bool,
                 p_phi: float = 0.8) -> bool:
    """Restart on a switch into a sensitive app, or when the off-mode belief
    drops below p_phi."""
    if st.sensing:
        return False
    return sensitive_switch or st.p_j < p_phi


def learn_transfer(history: list[bool], window: int = 50,
                   priors: tuple[float, float] = (0.05, 0.5)) -> tuple[float, float]:
    """(q_o2g, q_g2o) from recent conclusion identities (True = owner).

    Laplace-smoothed transition frequencies: (transitions + 1) /
    (opportunities + 2). Fewer than two conclusions returns the priors.
    """
    recent = history[-window:]
    if len(recent) < 2:
        return priors
    o2g = g2o = from_o = from_g = 0
    for a, b in zip(recent, recent[1:]):
        if a:
            from_o += 1
            o2g += not b
        else:
            from_g += 1
            g2o += b
    q_o2g = (o2g + 1.0) / (from_o + 2.0) if from_o else priors[0]
    q_g2o = (g2o + 1.0) / (from_g + 2.0) if from_g else priors[1]
    return q_o2g, q_g2o


def account_energy(st: SchedulerState, taken: bool,
                   confidence: float | None = None,
                   energy: EnergyModel | None = None,
                   ema_decay: float = 0.95) -> SchedulerState:
    """Charge one observation and update the running expectations."""
    if not taken:
        return st
    e = (energy or EnergyModel()).per_observation
    st.energy += e
    st.e_bar = ema_decay * st.e_bar + (1.0 - ema_decay) * e
    if confidence is not None:
        st.eps_bar = ema_decay * st.eps_bar + (1.0 - ema_decay) * confidence
    return st


def stationary_belief(q_o2g: float, q_g2o: float, for_owner: bool) -> float:
    """Fixed point of decay_estimate for one conclusion identity."""
    denom = q_o2g + q_g2o
    if denom <= 0:
        return 1.0
    return (q_g2o if for_owner else q_o2g) / denom


def new_state(cfg: SchedulerConfig | None = None) -> SchedulerState:
    cfg = cfg or SchedulerConfig()
    return SchedulerState(eps_bar=cfg.eps_bar_init,
                          e_bar=cfg.energy_per_observation,
                          q_o2g=cfg.transfer_prior_o2g if cfg.learn_transfer else cfg.fixed_q_o2g,
                          q_g2o=cfg.transfer_prior_g2o if cfg.learn_transfer else cfg.fixed_q_g2o)
