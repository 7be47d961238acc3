"""Kernel SVM training and judgement with confidence calibration.

Two model kinds share an RBF kernel and an SMO-style solver that always
updates the maximal violating pair, so training is deterministic for a
fixed data order:

* one-class (nu-parameterized): minimize (1/2) a'Ka subject to
  0 <= a_i <= 1/(nu n), sum a = 1; decision(x) = sum a_i k(x_i, x) - rho.
* two-class soft margin: minimize (1/2) a'Qa - sum a subject to
  0 <= a_i <= C, sum a_i y_i = 0 with Q_ij = y_i y_j K_ij;
  decision(x) = sum a_i y_i k(x_i, x) + b. Positive decisions mean owner.

A judgement's confidence is 0.5 + 0.5 * sigmoid(A |d| + B), a strictly
increasing map of the margin into (0.5, 1.0]. Two-class models fit (A, B)
on a held-out slice of their training data; one-class models use the fixed
(2, 0) since they see no labeled negatives.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .config import SvmConfig
from .features import Observation, Scaler
from .trace import Gesture, Scenario

MODEL_FORMAT_VERSION = 1


class TrainingError(Exception):
    pass


class ConvergenceError(TrainingError):
    pass


def rbf_kernel(X: np.ndarray, Y: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * |x - y|^2) for all pairs."""
    x2 = np.sum(X * X, axis=1)[:, None]
    y2 = np.sum(Y * Y, axis=1)[None, :]
    d2 = np.maximum(x2 + y2 - 2.0 * (X @ Y.T), 0.0)
    return np.exp(-gamma * d2)


def median_gamma(X: np.ndarray) -> float:
    """Median heuristic: gamma = 1 / (2 * median pairwise squared distance),
    over the strictly positive distances."""
    n = len(X)
    if n < 2:
        return 1.0
    x2 = np.sum(X * X, axis=1)
    d2 = x2[:, None] + x2[None, :] - 2.0 * (X @ X.T)
    vals = d2[np.triu_indices(n, k=1)]
    vals = vals[vals > 1e-24]
    if len(vals) == 0:
        return 1.0
    return float(1.0 / (2.0 * np.median(vals)))


@dataclass(frozen=True)
class Judgement:
    is_owner: bool
    confidence: float       # in (0.5, 1.0]
    decision_value: float


@dataclass
class SvmModel:
    kind: str                      # "one_class" | "two_class"
    gamma: float
    support_vectors: np.ndarray    # (m, d)
    coef: np.ndarray               # alpha (one-class) or alpha*y (two-class)
    bias: float                    # rho (one-class) or b (two-class)
    calib_a: float
    calib_b: float
    # one-class margins are tiny in absolute terms (sum alpha = 1), so the
    # fixed calibration reads them in units of the training-margin spread
    margin_scale: float = 1.0
    scaler: Scaler | None = None
    scenario: Scenario | None = None
    gesture: Gesture | None = None   # None = pooled
    n_owner: int = 0
    n_guest: int = 0

    def decision(self, x: np.ndarray) -> float:
        k = rbf_kernel(self.support_vectors, x[None, :], self.gamma)[:, 0]
        raw = float(self.coef @ k)
        return raw - self.bias if self.kind == "one_class" else raw + self.bias

    def decisions(self, X: np.ndarray) -> np.ndarray:
        k = rbf_kernel(self.support_vectors, X, self.gamma)
        raw = self.coef @ k
        return raw - self.bias if self.kind == "one_class" else raw + self.bias

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "support_vectors": self.support_vectors.tolist(),
            "coef": self.coef.tolist(),
            "bias": self.bias,
            "calib_a": self.calib_a,
            "calib_b": self.calib_b,
            "margin_scale": self.margin_scale,
            "scaler": self.scaler.to_dict() if self.scaler else None,
            "scenario": self.scenario.value if self.scenario else None,
            "gesture": self.gesture.value if self.gesture else None,
            "n_owner": self.n_owner,
            "n_guest": self.n_guest,
        }

    @staticmethod
    def from_dict(d: dict) -> "SvmModel":
        return SvmModel(
            kind=d["kind"],
            gamma=float(d["gamma"]),
            support_vectors=np.asarray(d["support_vectors"], dtype=np.float64),
            coef=np.asarray(d["coef"], dtype=np.float64),
            bias=float(d["bias"]),
            calib_a=float(d["calib_a"]),
            calib_b=float(d["calib_b"]),
            margin_scale=float(d.get("margin_scale", 1.0)),
            scaler=Scaler.from_dict(d["scaler"]) if d.get("scaler") else None,
            scenario=Scenario(d["scenario"]) if d.get("scenario") else None,
            gesture=Gesture(d["gesture"]) if d.get("gesture") else None,
            n_owner=int(d.get("n_owner", 0)),
            n_guest=int(d.get("n_guest", 0)),
        )


def train_one_class(X: np.ndarray, nu: float = 0.1, gamma: float | None = None,
                    tol: float = 1e-3, max_iter: int = 10_000,
                    min_samples: int = 10) -> SvmModel:
    """Fit a nu-parameterized one-class model by pairwise coordinate ascent.

    At most a nu fraction of the training points ends up with a negative
    decision value (up to the KKT tolerance).
    """
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < min_samples:
        raise TrainingError(f"one-class training needs >= {min_samples} samples, got {n}")
    if not 0.0 < nu <= 1.0:
        raise TrainingError(f"nu must be in (0, 1], got {nu}")
    if gamma is None:
        gamma = median_gamma(X)
    K = rbf_kernel(X, X, gamma)
    cap = 1.0 / (nu * n)
    alpha = np.zeros(n)
    k_full = int(math.floor(nu * n))
    alpha[:k_full] = cap
    if k_full < n:
        alpha[k_full] = 1.0 - cap * k_full
    grad = K @ alpha

    for _ in range(max_iter):
        can_up = alpha < cap - 1e-12
        can_dn = alpha > 1e-12
        i = int(np.argmin(np.where(can_up, grad, np.inf)))
        j = int(np.argmax(np.where(can_dn, grad, -np.inf)))
        viol = grad[j] - grad[i]
        if viol <= tol:
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        step = viol / max(eta, 1e-12)
        step = min(step, cap - alpha[i], alpha[j])
        alpha[i] += step
        alpha[j] -= step
        grad += step * (K[:, i] - K[:, j])
    else:
        raise ConvergenceError(f"one-class SMO: KKT violation {viol:.2e} > {tol} "
                               f"after {max_iter} updates")

    free = (alpha > 1e-9) & (alpha < cap - 1e-9)
    if free.any():
        rho = float(grad[free].mean())
    else:
        rho = float((grad[alpha > 1e-9].max() + grad[alpha < cap - 1e-9].min()) / 2.0)
    keep = alpha > 1e-12
    d_train = grad - rho
    scale = max(float(np.percentile(d_train, 95) - np.percentile(d_train, 5)) / 2.0, 1e-6)
    return SvmModel(kind="one_class", gamma=gamma,
                    support_vectors=X[keep].copy(), coef=alpha[keep].copy(),
                    bias=rho, calib_a=2.0, calib_b=0.0, margin_scale=scale,
                    n_owner=n)


def train_two_class(owner: np.ndarray, guest: np.ndarray, C: float = 10.0,
                    gamma: float | None = None, tol: float = 1e-3,
                    max_iter: int = 100_000, calib_holdout: float = 0.2) -> SvmModel:
    """Fit a soft-margin owner-vs-guest model with SMO; owner label is +1.

    Confidence calibration is fit on a held-out stride of the inputs and the
    model is refit on the remainder, so calibration never scores its own
    training points.
    """
    owner = np.asarray(owner, dtype=np.float64)
    guest = np.asarray(guest, dtype=np.float64)
    if len(owner) == 0 or len(guest) == 0:
        raise TrainingError("two-class training needs both owner and guest samples")
    X = np.vstack([owner, guest])
    y = np.concatenate([np.ones(len(owner)), -np.ones(len(guest))])
    if gamma is None:
        gamma = median_gamma(X)

    hold = _holdout_mask(len(owner), len(guest), calib_holdout)
    if hold.any() and (~hold & (y > 0)).sum() >= 2 and (~hold & (y < 0)).sum() >= 2:
        alpha_t, b_t = _smo_two_class(X[~hold], y[~hold], C, gamma, tol, max_iter)
        part = SvmModel(kind="two_class", gamma=gamma, support_vectors=X[~hold],
                        coef=alpha_t * y[~hold], bias=b_t, calib_a=2.0, calib_b=0.0)
        d_hold = part.decisions(X[hold])
        correct = np.sign(d_hold) == y[hold]
        a, b = fit_calibration(np.abs(d_hold), correct)
    else:
        a, b = 2.0, 0.0

    alpha, bias = _smo_two_class(X, y, C, gamma, tol, max_iter)
    keep = alpha > 1e-12
    return SvmModel(kind="two_class", gamma=gamma,
                    support_vectors=X[keep].copy(), coef=(alpha * y)[keep].copy(),
                    bias=bias, calib_a=a, calib_b=b,
                    n_owner=len(owner), n_guest=len(guest))


def _holdout_mask(n_owner: int, n_guest: int, frac: float) -> np.ndarray:
    """Deterministic stride split marking ~frac of each class held out."""
    mask = np.zeros(n_owner + n_guest, dtype=bool)
    if frac <= 0.0:
        return mask
    stride = max(2, int(round(1.0 / frac)))
    mask[:n_owner][::stride] = True
    mask[n_owner:][::stride] = True
    return mask


def _smo_two_class(X, y, C, gamma, tol, max_iter):
    n = len(X)
    if n < 2 or len(np.unique(y)) < 2:
        raise TrainingError("two-class training needs both classes present")
    K = rbf_kernel(X, X, gamma)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # d/da of (1/2)a'Qa - sum(a) at a = 0
    pos = y > 0
    yg = np.empty(n)

    for _ in range(max_iter):
        np.multiply(y, grad, out=yg)
        np.negative(yg, out=yg)              # -y * grad
        up = (pos & (alpha < C - 1e-12)) | (~pos & (alpha > 1e-12))
        lo = (~pos & (alpha < C - 1e-12)) | (pos & (alpha > 1e-12))
        if not up.any() or not lo.any():
            break
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmin(np.where(lo, yg, np.inf)))
        m, M = yg[i], yg[j]
        if m - M <= tol:
            break
        eta = K[i, i] + K[j, j] - 2.0 * K[i, j]
        t = (m - M) / max(eta, 1e-12)
        # box bounds along direction (y_i e_i - y_j e_j)
        t = min(t,
                C - alpha[i] if y[i] > 0 else alpha[i],
                alpha[j] if y[j] > 0 else C - alpha[j])
        alpha[i] += y[i] * t
        alpha[j] -= y[j] * t
        grad += t * y * (K[:, i] - K[:, j])
    else:
        raise ConvergenceError(f"two-class SMO: KKT violation {m - M:.2e} > {tol} "
                               f"after {max_iter} updates")

    yg = -y * grad
    up = (pos & (alpha < C - 1e-12)) | (~pos & (alpha > 1e-12))
    lo = (~pos & (alpha < C - 1e-12)) | (pos & (alpha > 1e-12))
    hi = yg[up].max() if up.any() else 0.0
    lopt = yg[lo].min() if lo.any() else 0.0
    b = float((hi + lopt) / 2.0)
    return alpha, b


def kkt_residual(model: SvmModel, X: np.ndarray, y: np.ndarray | None = None,
                 nu: float = 0.1, C: float = 10.0) -> float:
    """Maximal-violating-pair gap recomputed from a trained model's own
    training data; at most the solver tolerance after convergence."""
    X = np.asarray(X, dtype=np.float64)
    K = rbf_kernel(X, X, model.gamma)
    if model.kind == "one_class":
        alpha = _expand_coef(model, X)
        cap = 1.0 / (nu * len(X))
        grad = K @ alpha
        up = alpha < cap - 1e-9
        dn = alpha > 1e-9
        return float(max(0.0, grad[dn].max() - grad[up].min()))
    assert y is not None
    coef = _expand_coef(model, X)          # alpha * y
    alpha = coef * y
    yg = y - K @ coef                      # -y * (dual gradient)
    pos = y > 0
    up = (pos & (alpha < C - 1e-9)) | (~pos & (alpha > 1e-9))
    lo = (~pos & (alpha < C - 1e-9)) | (pos & (alpha > 1e-9))
    if not up.any() or not lo.any():
        return 0.0
    return float(max(0.0, yg[up].max() - yg[lo].min()))


def _expand_coef(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """Coefficients aligned to the full training set (non-SVs are zero)."""
    coef = np.zeros(len(X))
    j = 0
    for i in range(len(X)):
        if j < len(model.support_vectors) and np.array_equal(X[i], model.support_vectors[j]):
            coef[i] = model.coef[j]
            j += 1
    if j != len(model.support_vectors):
        raise ValueError("training data does not match the model's support vectors")
    return coef


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def fit_calibration(abs_d: np.ndarray, correct: np.ndarray,
                    max_newton: int = 50) -> tuple[float, float]:
    """Fit sigmoid(A |d| + B) to judgement correctness by regularized
    logistic regression with smoothed targets; A is kept positive so
    confidence stays monotone in the margin."""
    abs_d = np.asarray(abs_d, dtype=np.float64)
    correct = np.asarray(correct, dtype=bool)
    n = len(abs_d)
    n_pos = int(correct.sum())
    n_neg = n - n_pos
    if n < 5 or n_pos == 0:
        return 2.0, 0.0
    t_pos = (n_pos + 1.0) / (n_pos + 2.0)
    t_neg = 1.0 / (n_neg + 2.0)
    t = np.where(correct, t_pos, t_neg)
    a, b = 2.0, 0.0
    lam = 1e-3  # ridge toward the default keeps degenerate fits tame
    for _ in range(max_newton):
        z = a * abs_d + b
        p = 1.0 / (1.0 + np.exp(-np.clip(z, -35, 35)))
        w = np.maximum(p * (1.0 - p), 1e-9)
        g_a = float(((p - t) * abs_d).sum()) + lam * (a - 2.0)
        g_b = float((p - t).sum()) + lam * b
        h_aa = float((w * abs_d * abs_d).sum()) + lam
        h_ab = float((w * abs_d).sum())
        h_bb = float(w.sum()) + lam
        det = h_aa * h_bb - h_ab * h_ab
        if abs(det) < 1e-12:
            break
        da = (g_a * h_bb - g_b * h_ab) / det
        db = (g_b * h_aa - g_a * h_ab) / det
        a -= da
        b -= db
        if abs(da) + abs(db) < 1e-10:
            break
    if not math.isfinite(a) or not math.isfinite(b) or a < 0.05:
        return 2.0, 0.0
    return float(a), float(b)


def judge_vector(model: SvmModel, x: np.ndarray) -> Judgement:
    """Verdict for an already-scaled feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != model.support_vectors.shape[1]:
        raise ValueError(f"feature dimension {x.shape[0]} != model "
                         f"dimension {model.support_vectors.shape[1]}")
    d = model.decision(x)
    z = model.calib_a * abs(d) / model.margin_scale + model.calib_b
    eps = 0.5 + 0.5 * _sigmoid(z)
    return Judgement(is_owner=d > 0, confidence=eps, decision_value=d)


def judge(model: SvmModel, o: Observation) -> Judgement:
    """Owner/guest verdict for one observation with calibrated confidence."""
    x = o.features
    if not o.scaled:
        if model.scaler is None:
            raise ValueError("observation is unscaled and the model has no scaler")
        x = model.scaler.transform(x)
    if model.scenario is not None and o.scenario is not model.scenario:
        raise ValueError(f"model is for {model.scenario.value} observations")
    return judge_vector(model, x)


# --- self-learning buffers and the retrain policy ---------------------------

@dataclass
class BufferEntry:
    observation: Observation   # scaled
    confidence: float


@dataclass
class TrainingBuffers:
    """Ring buffers of high-confidence observations per identity."""
    owner_cap: int = 500
    guest_cap: int = 200
    min_confidence: float = 0.8
    owner: list[BufferEntry] = field(default_factory=list)
    guest: list[BufferEntry] = field(default_factory=list)
    owner_added: int = 0
    guest_added: int = 0

    def add(self, o: Observation, confidence: float, is_owner: bool) -> bool:
        if confidence < self.min_confidence:
            return False
        buf, cap = (self.owner, self.owner_cap) if is_owner else (self.guest, self.guest_cap)
        buf.append(BufferEntry(o, confidence))
        if len(buf) > cap:
            del buf[0]
        if is_owner:
            self.owner_added += 1
        else:
            self.guest_added += 1
        return True

    def owner_matrix(self, gesture: Gesture | None = None) -> np.ndarray:
        return _matrix(self.owner, gesture)

    def guest_matrix(self, gesture: Gesture | None = None) -> np.ndarray:
        return _matrix(self.guest, gesture)


def _matrix(entries: list[BufferEntry], gesture: Gesture | None) -> np.ndarray:
    rows = [e.observation.features for e in entries
            if gesture is None or e.observation.gesture is gesture]
    return np.stack(rows) if rows else np.empty((0, 0))


@dataclass
class RetrainState:
    owner_at_last: int = 0
    guest_at_last: int = 0
    two_class: bool = False


def should_retrain(buffers: TrainingBuffers, state: RetrainState,
                   cfg: SvmConfig | None = None) -> str | None:
    """Policy: upgrade to two-class once the guest buffer holds
    upgrade_guest_min entries; afterwards retrain when the guest buffer grew
    by retrain_guest_delta or the owner buffer by retrain_owner_delta."""
    cfg = cfg or SvmConfig()
    if not state.two_class:
        if len(buffers.guest) >= cfg.upgrade_guest_min:
            return "upgrade"
        if buffers.owner_added - state.owner_at_last >= cfg.retrain_owner_delta:
            return "refresh"
        return None
    if buffers.guest_added - state.guest_at_last >= cfg.retrain_guest_delta:
        return "refresh"
    if buffers.owner_added - state.owner_at_last >= cfg.retrain_owner_delta:
        return "refresh"
    return None
