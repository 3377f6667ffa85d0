"""Online conformal aggregation: ACI-wrapped learners, COMA weights and AdaCOMA."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .intervals import PredictionSet, weighted_majority
from .selection import Prior, SelectionDistribution, SizeProfile, StabilityBudget, minse, sample_selection


# --------------------------------------------------------------------------
# Adaptive conformal inference


@dataclass(frozen=True)
class AciState:
    """Nominal level tracker: ``alpha_{t+1} = alpha_t + gamma (target - err_t)``."""

    alpha_t: float
    gamma: float
    target_alpha: float
    errors: int = 0
    steps: int = 0

    @classmethod
    def start(cls, target_alpha: float, gamma: float) -> "AciState":
        if not 0 < target_alpha < 1:
            raise ValueError(f"target_alpha must lie in (0, 1), got {target_alpha}")
        if not gamma > 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
        return cls(target_alpha, gamma, target_alpha)

    @property
    def error_rate(self) -> float:
        return self.errors / self.steps if self.steps else 0.0


def aci_step(state: AciState, covered: bool) -> AciState:
    err = 0 if covered else 1
    return replace(
        state,
        alpha_t=state.alpha_t + state.gamma * (state.target_alpha - err),
        errors=state.errors + err,
        steps=state.steps + 1,
    )


def conformal_quantile(scores: np.ndarray, alpha: float) -> float:
    """Split-conformal quantile of ``scores`` at level ``alpha``.

    ``alpha <= 0`` or too few scores gives ``inf`` (whole line); ``alpha >= 1``
    gives ``-inf`` (empty set).
    """
    n = len(scores)
    if alpha >= 1:
        return -math.inf
    if alpha <= 0 or n == 0:
        return math.inf
    r = math.ceil((1.0 - alpha) * (n + 1) - 1e-9)
    if r > n:
        return math.inf
    return float(np.partition(np.asarray(scores, dtype=float), r - 1)[r - 1])


# --------------------------------------------------------------------------
# Online regressors


class OnlineSGD:
    """Least squares by one gradient step per observation, optional L1/L2 penalty."""

    def __init__(self, n_features: int, lr: float = 0.001, penalty: str | None = None, reg: float = 0.0):
        if penalty not in (None, "l1", "l2"):
            raise ValueError(f"unknown penalty {penalty!r}")
        self.coef = np.zeros(n_features + 1)
        self.lr = lr
        self.penalty = penalty
        self.reg = reg

    def predict(self, x: np.ndarray) -> float:
        return float(self.coef[0] + np.dot(self.coef[1:], x))

    def update(self, x: np.ndarray, y: float) -> None:
        z = np.concatenate(([1.0], x))
        grad = (np.dot(self.coef, z) - y) * z
        if self.penalty == "l2":
            grad[1:] += self.reg * self.coef[1:]
        elif self.penalty == "l1":
            grad[1:] += self.reg * np.sign(self.coef[1:])
        self.coef -= self.lr * grad


class RollingOLS:
    """Ordinary least squares on the last ``window`` points, refit every ``refit_every`` steps."""

    def __init__(self, n_features: int, window: int = 50, refit_every: int = 1, ridge: float = 1e-8):
        self.window = window
        self.refit_every = refit_every
        self.ridge = ridge
        self.coef = np.zeros(n_features + 1)
        self._X: deque = deque(maxlen=window)
        self._y: deque = deque(maxlen=window)
        self._since_fit = 0

    def predict(self, x: np.ndarray) -> float:
        return float(self.coef[0] + np.dot(self.coef[1:], x))

    def update(self, x: np.ndarray, y: float) -> None:
        self._X.append(np.asarray(x, dtype=float))
        self._y.append(float(y))
        self._since_fit += 1
        if self._since_fit >= self.refit_every:
            self._since_fit = 0
            Z = np.column_stack([np.ones(len(self._y)), np.array(self._X)])
            A = Z.T @ Z + self.ridge * np.eye(Z.shape[1])
            self.coef = np.linalg.solve(A, Z.T @ np.array(self._y))


class AciPredictor:
    """An online learner whose absolute residuals feed an ACI-tracked quantile."""

    def __init__(self, learner, target_alpha: float, gamma: float = 0.005, window: int = 100):
        self.learner = learner
        self.state = AciState.start(target_alpha, gamma)
        self.scores: deque = deque(maxlen=window)

    def predict_set(self, x: np.ndarray) -> PredictionSet:
        yhat = self.learner.predict(x)
        q = conformal_quantile(np.fromiter(self.scores, float), self.state.alpha_t)
        if q == -math.inf:
            return PredictionSet.empty()
        if q == math.inf:
            return PredictionSet.full()
        return PredictionSet.interval(yhat - q, yhat + q)

    def observe(self, x: np.ndarray, y: float, covered: bool | None = None) -> None:
        """Record the revealed label; ``covered=None`` skips the ACI update (warm-up)."""
        self.scores.append(abs(y - self.learner.predict(x)))
        if covered is not None:
            self.state = aci_step(self.state, covered)
        self.learner.update(x, y)


# --------------------------------------------------------------------------
# COMA weights


@dataclass(frozen=True)
class ComaWeights:
    """Exponential weights over K experts.

    ``rate=None`` selects AdaHedge (learning rate ``ln K / delta`` with
    ``delta`` the cumulative mixability gap); otherwise Hedge with that fixed
    learning rate.
    """

    cumulative_loss: np.ndarray
    w: np.ndarray
    delta: float = 0.0
    rate: float | None = None

    @classmethod
    def start(cls, k: int, rate: float | None = None) -> "ComaWeights":
        if rate is not None and rate < 0:
            raise ValueError("Hedge learning rate must be nonnegative")
        return cls(np.zeros(k), np.full(k, 1.0 / k), 0.0, rate)

    @property
    def k(self) -> int:
        return self.w.size

    @property
    def learning_rate(self) -> float:
        if self.rate is not None:
            return self.rate
        if self.k == 1:
            return 0.0
        return math.log(self.k) / self.delta if self.delta > 0 else math.inf


_TINY = np.finfo(float).tiny


def _softmax_neg(eta: float, L: np.ndarray) -> np.ndarray:
    if eta == math.inf:
        e = (L == L.min()).astype(float)
    else:
        e = np.exp(-eta * (L - L.min()))
    w = e / e.sum()
    # exponential weights are positive; keep underflowed entries off zero
    if np.any(w < _TINY):
        w = np.maximum(w, _TINY)
        w /= w.sum()
    return w


def _mix_loss(w: np.ndarray, losses: np.ndarray, eta: float) -> float:
    support = w > 0
    lmin = losses[support].min()
    if eta == math.inf:
        return float(lmin)
    if eta == 0:
        return float(np.dot(w, losses))
    return float(lmin - math.log(np.dot(w[support], np.exp(-eta * (losses[support] - lmin)))) / eta)


def coma_update(weights: ComaWeights, losses: Sequence[float]) -> ComaWeights:
    losses = np.asarray(losses, dtype=float)
    if losses.shape != weights.w.shape:
        raise ValueError(f"expected {weights.k} losses, got {losses.size}")
    if not np.all(np.isfinite(losses)) or np.any(losses < 0):
        raise ValueError(f"losses must be finite and nonnegative: {losses}")
    L = weights.cumulative_loss + losses
    if weights.rate is not None:
        return ComaWeights(L, _softmax_neg(weights.rate, L), weights.delta, weights.rate)
    eta = weights.learning_rate
    gap = max(0.0, float(np.dot(weights.w, losses)) - _mix_loss(weights.w, losses, eta))
    delta = weights.delta + gap
    new_eta = 0.0 if weights.k == 1 else (math.log(weights.k) / delta if delta > 0 else math.inf)
    if delta > 0:
        w = _softmax_neg(new_eta, L)
    else:
        w = np.full(weights.k, 1.0 / weights.k)
    return ComaWeights(L, w, delta, None)


def coma_aggregate(weights: ComaWeights, sets: Sequence[PredictionSet]) -> PredictionSet:
    return weighted_majority(sets, weights.w, 0.5)


def normalized_losses(sets: Sequence[PredictionSet], scale: float) -> np.ndarray:
    """Set measures divided by ``scale`` and capped at 1 (unbounded sets cost 1)."""
    return np.array([min(s.measure, scale) / scale for s in sets])


class AdaComaOutput(NamedTuple):
    set: PredictionSet
    selection: SelectionDistribution
    weights: ComaWeights
    chosen: int | None


def adacoma_step(
    weights: ComaWeights,
    sets: Sequence[PredictionSet],
    budget: StabilityBudget,
    option: int,
    rng: np.random.Generator,
    scale: float = 1.0,
) -> AdaComaOutput:
    """One AdaCOMA round: MinSE with the COMA weights as prior.

    Option 1 returns the ``p*``-weighted majority set, option 2 a sampled
    member.  Call :func:`coma_update` once the label is revealed.
    """
    if option not in (1, 2):
        raise ValueError(f"option must be 1 or 2, got {option}")
    xi = SizeProfile(normalized_losses(sets, scale))
    dist = minse(xi, Prior(weights.w / weights.w.sum()), budget.eta, budget.tau)
    if option == 1:
        return AdaComaOutput(weighted_majority(sets, dist.p, 0.5), dist, weights, None)
    i = sample_selection(dist, rng)
    return AdaComaOutput(sets[i], dist, weights, i)


# --------------------------------------------------------------------------
# Episode runner


@dataclass
class OnlineRecord:
    t: int
    method: str
    chosen: int
    covered: bool
    length: float
    weights: np.ndarray
    p: np.ndarray
    beta: float
    intervals: tuple = field(default=())


@dataclass
class OnlineRun:
    records: list[OnlineRecord]
    base_errors: np.ndarray

    def summary(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for method in dict.fromkeys(r.method for r in self.records):
            rows = [r for r in self.records if r.method == method]
            cov = np.array([r.covered for r in rows], dtype=float)
            length = np.array([r.length for r in rows])
            beta = np.array([r.beta for r in rows])
            out[method] = {
                "coverage": float(cov.mean()),
                "mean_length": float(length[np.isfinite(length)].mean()) if np.isfinite(length).any() else math.inf,
                "unbounded_fraction": float(np.mean(~np.isfinite(length))),
                "beta_hat": float(beta.mean()),
                "steps": len(rows),
            }
        return out


def run_online(
    X: np.ndarray,
    y: np.ndarray,
    predictors: Sequence[AciPredictor],
    budget: StabilityBudget,
    rng: np.random.Generator,
    *,
    options: Sequence[int] = (1, 2),
    rate: float | None = None,
    scale: float = 1.0,
    burn_in: int = 100,
) -> OnlineRun:
    """Run COMA and AdaCOMA side by side over one stream.

    The first ``burn_in`` points only train the learners and fill the score
    windows.  COMA and AdaCOMA share the base sets and therefore the weights.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float).reshape(y.size, -1)
    k = len(predictors)
    for t in range(min(burn_in, y.size)):
        for pred in predictors:
            pred.observe(X[t], y[t])

    weights = ComaWeights.start(k, rate)
    records: list[OnlineRecord] = []
    errs = np.zeros(k)
    for t in range(burn_in, y.size):
        x_t, y_t = X[t], y[t]
        sets = [pred.predict_set(x_t) for pred in predictors]
        base_cov = np.array([y_t in s for s in sets])
        beta = float(np.dot(weights.w, ~base_cov))
        ivs = tuple(s.intervals for s in sets)
        step = t - burn_in + 1

        coma = coma_aggregate(weights, sets)
        records.append(OnlineRecord(step, "coma", -1, y_t in coma, coma.measure, weights.w, weights.w, beta, ivs))
        for opt in options:
            out = adacoma_step(weights, sets, budget, opt, rng, scale)
            chosen = -1 if out.chosen is None else out.chosen
            records.append(
                OnlineRecord(step, f"adacoma{opt}", chosen, y_t in out.set, out.set.measure, weights.w, out.selection.p, beta, ivs)
            )

        weights = coma_update(weights, normalized_losses(sets, scale))
        errs += ~base_cov
        for pred, cov in zip(predictors, base_cov):
            pred.observe(x_t, y_t, bool(cov))
    steps = max(1, y.size - burn_in)
    return OnlineRun(records, errs / steps)
