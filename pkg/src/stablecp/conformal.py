"""Split conformal prediction parameterised by calibration rank, and
recalibration of a selected predictor through effective ranks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from .intervals import PredictionSet
from .selection import (
    Prior,
    SelectionDistribution,
    SizeProfile,
    ada_minse,
    exponential_batch,
    exponential_select,
    minse,
    minse_batch,
    sample_batch,
    sample_selection,
)

BISECT_TOL = 1e-9


class ScoreFunction(Protocol):
    """Nonconformity score, vectorised over rows of ``X`` and entries of ``y``."""

    def __call__(self, X: np.ndarray, y: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class AbsoluteResidualScore:
    """``|f(x) - y|``."""

    predict: Callable[[np.ndarray], np.ndarray]

    def __call__(self, X, y):
        return np.abs(self.predict(np.atleast_2d(X)) - np.asarray(y, dtype=float))

    def bounds(self, X, threshold):
        """Closed-form sublevel interval(s) ``[f(x) - t, f(x) + t]``."""
        mu = self.predict(np.atleast_2d(X))
        return mu - threshold, mu + threshold


@dataclass(frozen=True)
class ScaledResidualScore:
    """``|f(x) - y| / g(x)`` with ``g`` a positive residual-scale model."""

    predict: Callable[[np.ndarray], np.ndarray]
    scale: Callable[[np.ndarray], np.ndarray]

    def __call__(self, X, y):
        X = np.atleast_2d(X)
        return np.abs(self.predict(X) - np.asarray(y, dtype=float)) / self.scale(X)

    def bounds(self, X, threshold):
        X = np.atleast_2d(X)
        mu = self.predict(X)
        half = threshold * self.scale(X)
        return mu - half, mu + half


@dataclass(frozen=True)
class LabelGrid:
    """Search grid for sublevel sets of scores without a closed form."""

    lo: float
    hi: float
    n: int = 2001

    def points(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class ConformalModel:
    score_fn: ScoreFunction
    cal_scores: np.ndarray
    predictor_id: int = 0

    def __post_init__(self) -> None:
        s = np.sort(np.asarray(self.cal_scores, dtype=float))
        if s.size < 1:
            raise ValueError("calibration set is empty")
        s.flags.writeable = False
        object.__setattr__(self, "cal_scores", s)

    @property
    def m(self) -> int:
        return self.cal_scores.size

    def threshold(self, r: int) -> float:
        """The ``r``-th smallest calibration score (1-based)."""
        check_rank(r, self.m)
        return float(self.cal_scores[r - 1])

    def ranks(self, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """``#{j : s_j <= s(x, y)}`` for each row, against the stored scores."""
        return np.searchsorted(self.cal_scores, self.score_fn(X, y), side="right")


def check_rank(r: int, m: int) -> None:
    if not 1 <= r <= m:
        raise ValueError(f"rank {r} outside [1, {m}]")


def conformal_rank(alpha: float, m: int) -> int:
    """``ceil((1 - alpha)(m + 1))``, robust to products like 0.9 * 100 = 90.00000000000001."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return max(1, math.ceil((1.0 - alpha) * (m + 1) - 1e-9))


def calibrate(score_fn: ScoreFunction, X: np.ndarray, y: np.ndarray, predictor_id: int = 0) -> ConformalModel:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("calibration set is empty")
    X = np.asarray(X, dtype=float).reshape(y.size, -1)
    return ConformalModel(score_fn, score_fn(X, y), predictor_id)


def set_at_rank(
    model: ConformalModel, x: np.ndarray, r: int, label_grid: LabelGrid | None = None
) -> PredictionSet:
    """``{y : s(x, y) <= s_(r)}``.

    Residual-type scores are inverted in closed form.  Any other score is
    scanned on ``label_grid``; each sign change of ``s - threshold`` is then
    refined by bisection.
    """
    thr = model.threshold(r)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if hasattr(model.score_fn, "bounds"):
        lo, hi = model.score_fn.bounds(x, thr)
        return PredictionSet.interval(float(lo[0]), float(hi[0]))
    if label_grid is None:
        raise ValueError("a label grid is required for scores without a closed-form inverse")
    return _sublevel_on_grid(lambda ys: model.score_fn(np.repeat(x, ys.size, axis=0), ys), thr, label_grid)


def _sublevel_on_grid(score: Callable[[np.ndarray], np.ndarray], thr: float, grid: LabelGrid) -> PredictionSet:
    ys = grid.points()
    inside = score(ys) <= thr
    if not inside.any():
        return PredictionSet.empty()

    def edge(a: float, b: float, a_inside: bool) -> float:
        probe = score(np.linspace(a, b, 9)) <= thr
        if np.count_nonzero(probe[1:] != probe[:-1]) > 1:
            raise ValueError(f"label grid too coarse: membership flips more than once in [{a}, {b}]")
        # bisect the single membership flip inside [a, b]
        while b - a > BISECT_TOL:
            mid = 0.5 * (a + b)
            mid_inside = bool(score(np.array([mid]))[0] <= thr)
            if mid_inside == a_inside:
                a = mid
            else:
                b = mid
        return b if not a_inside else a

    pieces = []
    start = ys[0] if inside[0] else None
    for j in range(1, ys.size):
        a, b = ys[j - 1], ys[j]
        if inside[j] and not inside[j - 1]:
            start = edge(a, b, False)
        elif inside[j - 1] and not inside[j]:
            pieces.append((start, edge(a, b, True)))
            start = None
    if start is not None:
        pieces.append((start, ys[-1]))
    return PredictionSet(tuple(pieces))


def split_conformal_set(model: ConformalModel, x: np.ndarray, alpha: float, label_grid: LabelGrid | None = None) -> PredictionSet:
    """Standard split-conformal set; the whole line when the rank exceeds ``m``."""
    r = conformal_rank(alpha, model.m)
    if r > model.m:
        return PredictionSet.full()
    return set_at_rank(model, x, r, label_grid)


def split_conformal_bounds(model: ConformalModel, X: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised interval endpoints for residual-type scores."""
    r = conformal_rank(alpha, model.m)
    n = np.atleast_2d(X).shape[0]
    if r > model.m:
        return np.full(n, -np.inf), np.full(n, np.inf)
    return model.score_fn.bounds(X, model.threshold(r))


# --------------------------------------------------------------------------
# Recalibration after selection


@dataclass(frozen=True)
class EffectiveRankSequence:
    ranks: np.ndarray
    tiebreak_keys: np.ndarray
    selected: np.ndarray = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if len(self.ranks) != len(self.tiebreak_keys):
            raise ValueError("need one tiebreak key per rank")

    @property
    def m(self) -> int:
        return len(self.ranks)

    def order_statistic(self, t: int) -> int:
        """The ``t``-th smallest effective rank, equal ranks ordered by key."""
        check_rank(t, self.m)
        order = np.lexsort((self.tiebreak_keys, self.ranks))
        return int(self.ranks[order[t - 1]])


Selector = Callable[[np.ndarray, np.random.Generator], int]


def effective_ranks(
    models: Sequence[ConformalModel],
    selector: Selector,
    X_cal: np.ndarray,
    y_cal: np.ndarray,
    rng: np.random.Generator,
) -> EffectiveRankSequence:
    """Rank of each calibration point's score under the predictor selected for it."""
    y_cal = np.asarray(y_cal, dtype=float)
    X_cal = np.asarray(X_cal, dtype=float).reshape(y_cal.size, -1)
    m = y_cal.size
    for mod in models:
        if mod.m != m:
            raise ValueError("all models must be calibrated on the same points")
    all_ranks = np.stack([mod.ranks(X_cal, y_cal) for mod in models])
    if hasattr(selector, "select_batch"):
        chosen = selector.select_batch(X_cal, rng)
    else:
        chosen = np.array([selector(X_cal[i], rng) for i in range(m)], dtype=np.int64)
    ranks = all_ranks[chosen, np.arange(m)]
    keys = rng.random(m)
    return EffectiveRankSequence(ranks, keys, chosen)


def recalibrated_rank(eff: EffectiveRankSequence, alpha: float) -> int:
    t = conformal_rank(alpha, eff.m)
    if t > eff.m:
        raise ValueError(
            f"ceil((1 - alpha)(m + 1)) = {t} exceeds m = {eff.m}; need more calibration points"
        )
    return eff.order_statistic(t)


def recalibrated_set(
    models: Sequence[ConformalModel],
    selector: Selector,
    eff_ranks: EffectiveRankSequence,
    x_test: np.ndarray,
    rng: np.random.Generator,
    alpha: float,
    label_grid: LabelGrid | None = None,
) -> PredictionSet:
    r = recalibrated_rank(eff_ranks, alpha)
    k = selector(np.asarray(x_test, dtype=float), rng)
    return set_at_rank(models[k], x_test, r, label_grid)


MECHANISMS = ("minse", "ada_minse", "exponential", "argmin")


class AuxSelector:
    """Selects a predictor from proxy set sizes computed on auxiliary data.

    The proxy size of predictor ``k`` at ``x`` is the measure of its split
    conformal set at level ``alpha_tilde`` calibrated on the auxiliary
    models, so the rule never looks at the calibration data.
    """

    def __init__(
        self,
        aux_models: Sequence[ConformalModel],
        alpha_tilde: float,
        mechanism: str = "minse",
        *,
        eta: float = 0.0,
        tau: float = 0.0,
        alpha: float | None = None,
        alpha_prime: float | None = None,
        prior: Sequence[float] | None = None,
        scale: float = 1.0,
        label_grid: LabelGrid | None = None,
    ) -> None:
        if mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {mechanism!r}; expected one of {MECHANISMS}")
        if mechanism == "ada_minse" and (alpha is None or alpha_prime is None):
            raise ValueError("ada_minse needs alpha and alpha_prime")
        self.aux_models = list(aux_models)
        self.alpha_tilde = alpha_tilde
        self.mechanism = mechanism
        self.eta, self.tau = eta, tau
        self.alpha, self.alpha_prime = alpha, alpha_prime
        k = len(self.aux_models)
        self.prior = Prior(np.full(k, 1.0 / k) if prior is None else prior)
        self.scale = scale
        self.label_grid = label_grid

    def proxy_sizes(self, x: np.ndarray) -> np.ndarray:
        return np.array(
            [split_conformal_set(mod, x, self.alpha_tilde, self.label_grid).measure for mod in self.aux_models]
        )

    def distribution(self, x: np.ndarray) -> np.ndarray:
        xi = SizeProfile(self.proxy_sizes(x), self.scale)
        if self.mechanism == "argmin":
            p = np.zeros(xi.k)
            p[int(np.argmin(xi.sizes))] = 1.0
            return p
        if self.mechanism == "minse":
            return minse(xi, self.prior, self.eta, self.tau).p
        if self.mechanism == "ada_minse":
            return ada_minse(xi, self.prior, self.alpha, self.alpha_prime).p
        return exponential_select(xi, self.eta).p

    def __call__(self, x: np.ndarray, rng: np.random.Generator) -> int:
        return sample_selection(SelectionDistribution(self.distribution(x)), rng)

    def proxy_sizes_batch(self, X: np.ndarray) -> np.ndarray:
        """``(n, K)`` proxy sizes; residual-type scores only."""
        cols = []
        for mod in self.aux_models:
            lo, hi = split_conformal_bounds(mod, X, self.alpha_tilde)
            cols.append(hi - lo)
        return np.stack(cols, axis=1)

    def select_batch(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One independent selection per row of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if not all(hasattr(mod.score_fn, "bounds") for mod in self.aux_models):
            return np.array([self(x, rng) for x in X], dtype=np.int64)
        sizes = self.proxy_sizes_batch(X)
        if self.mechanism == "argmin":
            return np.argmin(sizes, axis=1)
        if self.mechanism == "minse":
            p = minse_batch(sizes, self.prior.b, self.eta, self.tau)
        elif self.mechanism == "exponential":
            p = exponential_batch(sizes, self.scale, self.eta)
        else:
            p = np.stack([self.distribution(x) for x in X])
        return sample_batch(p, rng)


def build_aux_selector(
    aux_models: Sequence[ConformalModel], alpha_tilde: float, mechanism: str, **mech_params
) -> AuxSelector:
    return AuxSelector(aux_models, alpha_tilde, mechanism, **mech_params)
