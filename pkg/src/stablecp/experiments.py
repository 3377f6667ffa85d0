"""Synthetic scenarios, simple base predictors and Monte-Carlo metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .conformal import (
    AuxSelector,
    ScaledResidualScore,
    calibrate,
    conformal_rank,
    effective_ranks,
    recalibrated_rank,
    split_conformal_bounds,
)
from .intervals import PredictionSet, weighted_majority
from .online import AciPredictor, OnlineRun, OnlineSGD, RollingOLS, run_online
from .selection import (
    Prior,
    SizeProfile,
    StabilityBudget,
    ada_minse,
    exponential_batch,
    laplace_select_batch,
    minse_batch,
    sample_batch,
)

SCENARIOS = ("worst_case_oracle", "coin_flip", "toy_regression", "sin_regression", "two_group", "arma_stream")
METHODS = (
    "minse",
    "ada_minse",
    "exponential",
    "laplace",
    "derandomized",
    "recalibrated",
    "single_model_baseline",
)
SCALE_FLOOR = 1e-6


class Dataset(NamedTuple):
    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.y.size

    def take(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx])


@dataclass(frozen=True)
class ScenarioParams:
    K: int = 5
    alpha: float = 0.1
    eta: float = 1.0
    tau: float = 0.0
    alpha_prime: float | None = None
    n_test: int = 1000
    n_train: int = 1000
    m: int = 400
    n_aux: int = 200
    d: int = 10
    noise_sd: float = 0.1
    noise_var: float = 0.25
    group_noise_sd: tuple[float, float] = (0.1, 0.4)
    scale: float | None = None
    heterogeneous: bool = True
    alpha_tilde: float | None = None
    recal_mechanism: str = "minse"
    recal_eta: float | None = None
    # online
    T: int = 1000
    ar: float = 0.9
    ma: float = 0.1
    lags: int = 3
    burn_in: int = 100
    aci_gamma: float = 0.005
    aci_window: int = 100
    hedge_rate: float | None = None
    option: int = 2
    baseline_index: int = 0

    def __post_init__(self) -> None:
        for name in ("alpha",):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.alpha_prime is not None and not 0 < self.alpha_prime <= self.alpha:
            raise ValueError("alpha_prime must lie in (0, alpha]")
        if self.alpha_tilde is not None and not 0 < self.alpha_tilde < 1:
            raise ValueError("alpha_tilde must lie in (0, 1)")
        if not 0 <= self.tau < 1 or self.eta < 0:
            raise ValueError("need eta >= 0 and 0 <= tau < 1")
        for name in ("K", "n_test", "n_train", "m", "d", "lags", "aci_window"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("n_aux", "T", "burn_in"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not abs(self.ar) < 1:
            raise ValueError(f"ARMA needs |ar| < 1, got {self.ar}")

    @property
    def budget(self) -> StabilityBudget:
        return StabilityBudget(self.eta, self.tau, self.alpha, self.alpha_prime)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario parameter(s): {sorted(unknown)}")
        d = dict(d)
        if "group_noise_sd" in d:
            d["group_noise_sd"] = tuple(d["group_noise_sd"])
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    kind: str
    params: ScenarioParams = field(default_factory=ScenarioParams)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.kind!r}; expected one of {SCENARIOS}")


@dataclass
class RunMetrics:
    coverage: float
    coverage_se: float
    mean_length: float
    mean_length_se: float
    per_seed_coverage: np.ndarray
    per_seed_length: np.ndarray
    seeds: tuple[int, ...] = ()
    n_test: int = 0
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_per_seed(cls, seeds, coverage, length, n_test=0, extra=None) -> "RunMetrics":
        coverage = np.asarray(coverage, dtype=float)
        length = np.asarray(length, dtype=float)
        return cls(
            float(coverage.mean()),
            _se(coverage),
            float(length.mean()),
            _se(length),
            coverage,
            length,
            tuple(int(s) for s in seeds),
            n_test,
            {k: np.asarray(v, dtype=float) for k, v in (extra or {}).items()},
        )

    @property
    def miscoverage(self) -> float:
        return 1.0 - self.coverage


def _se(x: np.ndarray) -> float:
    if x.size < 2:
        return math.nan
    return float(x.std(ddof=1) / math.sqrt(x.size))


# --------------------------------------------------------------------------
# Generators


def gen_worst_case_oracles(K: int, rng: np.random.Generator) -> tuple[list[PredictionSet], int]:
    """One oracle, chosen uniformly, returns the empty set; the rest return [0, 1]."""
    if K < 2:
        raise ValueError("need K >= 2 oracles")
    j = int(rng.integers(K))
    sets = [PredictionSet.empty() if i == j else PredictionSet.interval(0.0, 1.0) for i in range(K)]
    return sets, j


def worst_case_sizes(n: int, K: int, rng: np.random.Generator) -> np.ndarray:
    """``(n, K)`` sizes of the worst-case oracles: one zero per row, ones elsewhere."""
    sizes = np.ones((n, K))
    sizes[np.arange(n), rng.integers(K, size=n)] = 0.0
    return sizes


def gen_coin_flips(K: int, alpha_base: float, rng: np.random.Generator) -> list[PredictionSet]:
    full = coin_flip_sizes(1, K, alpha_base, rng)[0]
    return [PredictionSet.interval(0.0, 1.0) if f else PredictionSet.empty() for f in full]


def coin_flip_sizes(n: int, K: int, alpha_base: float, rng: np.random.Generator) -> np.ndarray:
    """Each set is [0, 1] with probability ``1 - alpha_base`` and empty otherwise."""
    if not 0 <= alpha_base <= 1:
        raise ValueError(f"alpha_base must lie in [0, 1], got {alpha_base}")
    return (rng.random((n, K)) >= alpha_base).astype(float)


def gen_toy_regression(n: int, rng: np.random.Generator, noise_var: float = 0.25) -> Dataset:
    """``Y = |X| + N(0, noise_var)`` with ``X ~ U[-1, 1]``."""
    X = rng.uniform(-1.0, 1.0, size=(n, 1))
    y = np.abs(X[:, 0]) + math.sqrt(noise_var) * rng.standard_normal(n)
    return Dataset(X, y)


def toy_predictors() -> list[Callable[[np.ndarray], np.ndarray]]:
    """The two mirror-image predictors ``f(x) = x`` and ``f(x) = -x``."""
    return [lambda X: np.atleast_2d(X)[:, 0].copy(), lambda X: -np.atleast_2d(X)[:, 0]]


def gen_sin_regression(n: int, d: int, rng: np.random.Generator, noise_sd: float = 0.1) -> Dataset:
    """``Y = sin(<beta, X>) + noise_sd * N(0, 1)`` with ``beta = (1/d, ..., 1/d)``, ``X ~ N(0, I_d)``."""
    X = rng.standard_normal((n, d))
    y = np.sin(X.mean(axis=1)) + noise_sd * rng.standard_normal(n)
    return Dataset(X, y)


def gen_two_group(
    n: int, d: int, rng: np.random.Generator, noise_sd: tuple[float, float] = (0.1, 0.4)
) -> tuple[Dataset, np.ndarray]:
    """Sin regression whose noise level depends on the sign of the first feature."""
    X = rng.standard_normal((n, d))
    g = (X[:, 0] >= 0).astype(np.int64)
    sd = np.where(g == 1, noise_sd[1], noise_sd[0])
    y = np.sin(X.mean(axis=1)) + sd * rng.standard_normal(n)
    return Dataset(X, y), g


def gen_arma_stream(
    T: int, ar: float, ma: float, noise_sd: float, rng: np.random.Generator, lags: int = 3, warmup: int = 200
) -> Dataset:
    """ARMA(1,1) series ``y_t = ar y_{t-1} + e_t + ma e_{t-1}`` with lagged-value features."""
    if not abs(ar) < 1:
        raise ValueError(f"ARMA(1,1) needs |ar| < 1 for stationarity, got {ar}")
    total = T + lags + warmup
    e = noise_sd * rng.standard_normal(total)
    y = np.zeros(total)
    for t in range(1, total):
        y[t] = ar * y[t - 1] + e[t] + ma * e[t - 1]
    y = y[warmup:]
    X = np.column_stack([y[lags - j - 1 : lags - j - 1 + T] for j in range(lags)])
    return Dataset(X, y[lags:])


# --------------------------------------------------------------------------
# Base predictors


class Ridge:
    def __init__(self, penalty: float = 1.0):
        self.penalty = penalty

    def fit(self, X: np.ndarray, y: np.ndarray) -> "Ridge":
        X = np.atleast_2d(X)
        self.mean_ = X.mean(axis=0)
        self.offset_ = y.mean()
        Xc = X - self.mean_
        pen = self.penalty
        for _ in range(8):
            A = Xc.T @ Xc + pen * np.eye(X.shape[1])
            if np.linalg.cond(A) < 1e12:
                break
            pen = max(pen * 10, 1e-6)  # degenerate design: regularise harder
        else:
            raise np.linalg.LinAlgError("design matrix is degenerate")
        self.coef_ = np.linalg.solve(A, Xc.T @ (y - self.offset_))
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(X) - self.mean_) @ self.coef_ + self.offset_


class KNN:
    """k-nearest-neighbour mean of the targets (Euclidean distance)."""

    def __init__(self, k: int = 10, floor: float | None = None):
        self.k = k
        self.floor = floor

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KNN":
        self.X_ = np.atleast_2d(np.asarray(X, dtype=float))
        self.y_ = np.asarray(y, dtype=float)
        self.sq_ = (self.X_**2).sum(axis=1)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k = min(self.k, self.y_.size)
        out = np.empty(X.shape[0])
        for start in range(0, X.shape[0], 2048):
            xb = X[start : start + 2048]
            d2 = (xb**2).sum(axis=1)[:, None] + self.sq_[None, :] - 2 * xb @ self.X_.T
            if k == self.y_.size:
                out[start : start + len(xb)] = self.y_.mean()
                continue
            nn = np.argpartition(d2, k - 1, axis=1)[:, :k]
            out[start : start + len(xb)] = self.y_[nn].mean(axis=1)
        if self.floor is not None:
            out = np.maximum(out, self.floor)
        return out


@dataclass
class BasePredictor:
    name: str
    predict: Callable[[np.ndarray], np.ndarray]
    scale: Callable[[np.ndarray], np.ndarray]

    @property
    def score(self) -> ScaledResidualScore:
        return ScaledResidualScore(self.predict, self.scale)


def partition_blocks(X: np.ndarray, n_blocks: int) -> np.ndarray:
    """Block label per row from quantiles of the projection on the first principal axis."""
    Xc = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(Xc, full_matrices=False)
    proj = Xc @ vt[0]
    edges = np.quantile(proj, np.linspace(0, 1, n_blocks + 1)[1:-1])
    return np.searchsorted(edges, proj, side="right")


def _model_zoo(K: int) -> list[tuple[str, Callable[[], object]]]:
    zoo = []
    ridge_pen = [0.1, 1.0, 10.0]
    knn_k = [5, 15, 40]
    for i in range(K):
        if i % 2 == 0:
            pen = ridge_pen[(i // 2) % len(ridge_pen)]
            zoo.append((f"ridge{pen:g}", lambda pen=pen: Ridge(pen)))
        else:
            k = knn_k[(i // 2) % len(knn_k)]
            zoo.append((f"knn{k}", lambda k=k: KNN(k)))
    return zoo


def residual_scale(predict, X2: np.ndarray, y2: np.ndarray, k: int = 30) -> Callable[[np.ndarray], np.ndarray]:
    """k-NN model of ``|f(x) - y|`` floored at 1e-6."""
    knn = KNN(k, floor=SCALE_FLOOR).fit(X2, np.abs(predict(X2) - y2))
    return knn.predict


def base_predictors(kind: str, train: Dataset, K: int = 5, rng: np.random.Generator | None = None,
                    heterogeneous: bool = True, scale_k: int = 30) -> list[BasePredictor]:
    """Fit K regressors and their residual-scale models.

    ``kind="zoo"`` alternates ridge and k-NN regressors; with
    ``heterogeneous`` each is trained on its own block of the first half of
    ``train``.  ``kind="toy"`` uses the two fixed mirror predictors.  The second
    half of ``train`` fits the residual-scale models.
    """
    if len(train) < 2:
        raise ValueError("training data must contain at least two points")
    half = len(train) // 2
    first, second = train.take(slice(0, half)), train.take(slice(half, None))
    out = []
    if kind == "toy":
        for i, f in enumerate(toy_predictors()):
            out.append(BasePredictor(f"mirror{i}", f, residual_scale(f, train.X, train.y, scale_k)))
        return out
    if kind != "zoo":
        raise ValueError(f"unknown predictor kind {kind!r}")
    blocks = partition_blocks(first.X, K) if heterogeneous else np.zeros(half, dtype=int)
    for i, (name, make) in enumerate(_model_zoo(K)):
        mask = blocks == (i % K) if heterogeneous else np.ones(half, dtype=bool)
        model = make().fit(first.X[mask], first.y[mask])
        out.append(BasePredictor(name, model.predict, residual_scale(model.predict, second.X, second.y, scale_k)))
    return out


# --------------------------------------------------------------------------
# Selection over precomputed size matrices


def method_base_level(method: str, params: ScenarioParams) -> float:
    """Per-set miscoverage that makes post-selection miscoverage ``params.alpha``."""
    a, eta, tau = params.alpha, params.eta, params.tau
    if method == "minse":
        return (a - tau) * math.exp(-eta)
    if method == "ada_minse":
        return params.alpha_prime if params.alpha_prime is not None else a / 2
    if method == "exponential":
        return a * math.exp(-2 * eta)
    if method == "laplace":
        return a * math.exp(-eta)
    if method == "derandomized":
        if a / 2 <= tau:
            raise ValueError("derandomized selection needs tau < alpha / 2")
        return (a / 2 - tau) * math.exp(-eta)
    if method == "single_model_baseline":
        return a
    raise ValueError(f"method {method!r} has no base level")


def _auto_scale(sizes: np.ndarray, scale: float | None) -> float:
    if scale is not None:
        return scale
    finite = sizes[np.isfinite(sizes)]
    top = float(finite.max()) if finite.size else 1.0
    return top if top > 0 else 1.0


def select_rows(
    method: str, sizes: np.ndarray, params: ScenarioParams, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray | None]:
    """Chosen index per row, plus the selection probabilities when defined."""
    n, K = sizes.shape
    prior = np.full(K, 1.0 / K)
    if method in ("minse", "derandomized"):
        p = minse_batch(sizes, prior, params.eta, params.tau)
    elif method == "ada_minse":
        a_prime = method_base_level("ada_minse", params)
        b = Prior(prior)
        p = np.stack([ada_minse(SizeProfile(row), b, params.alpha, a_prime).p for row in sizes])
    elif method == "exponential":
        p = exponential_batch(sizes, _auto_scale(sizes, params.scale), params.eta)
    elif method == "laplace":
        return laplace_select_batch(sizes, _auto_scale(sizes, params.scale), params.eta, rng), None
    elif method == "single_model_baseline":
        return np.zeros(n, dtype=np.int64), None
    else:
        raise ValueError(f"method {method!r} does not select from a size matrix")
    return sample_batch(p, rng), p


# --------------------------------------------------------------------------
# Per-seed runs


@dataclass
class SeedResult:
    seed: int
    coverage: float
    mean_length: float
    n_test: int
    extra: dict[str, float] = field(default_factory=dict)


def _oracle_seed(scenario: Scenario, method: str, rng: np.random.Generator) -> SeedResult:
    p = scenario.params
    n = p.n_test
    if scenario.kind == "worst_case_oracle":
        sizes = worst_case_sizes(n, p.K, rng)
    else:
        sizes = coin_flip_sizes(n, p.K, method_base_level(method, p), rng)
    if method == "recalibrated":
        raise ValueError("recalibration needs a regression scenario")
    chosen, probs = select_rows(method, sizes, p, rng)
    if method == "derandomized":
        # full set wins the vote iff the weight on full sets reaches 1/2
        full = (probs * sizes).sum(axis=1) >= 0.5 - 1e-12
        covered = full
        length = full.astype(float)
    else:
        covered = sizes[np.arange(n), chosen] > 0
        length = sizes[np.arange(n), chosen]
    return SeedResult(0, float(covered.mean()), float(length.mean()), n)


def _regression_data(scenario: Scenario, n: int, rng: np.random.Generator):
    p = scenario.params
    if scenario.kind == "toy_regression":
        return gen_toy_regression(n, rng, p.noise_var), None
    if scenario.kind == "sin_regression":
        return gen_sin_regression(n, p.d, rng, p.noise_sd), None
    return gen_two_group(n, p.d, rng, p.group_noise_sd)


def _intervals_for(models, X: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    bounds = [split_conformal_bounds(mod, X, alpha) for mod in models]
    return np.stack([b[0] for b in bounds], axis=1), np.stack([b[1] for b in bounds], axis=1)


def _regression_seed(scenario: Scenario, method: str, rng: np.random.Generator) -> SeedResult:
    p = scenario.params
    n_aux = p.n_aux if method == "recalibrated" or p.n_aux else 0
    total = p.n_train + p.m + n_aux + p.n_test
    data, groups = _regression_data(scenario, total, rng)
    train = data.take(slice(0, p.n_train))
    cal_end = p.n_train + p.m + n_aux
    test = data.take(slice(cal_end, None))
    kind = "toy" if scenario.kind == "toy_regression" else "zoo"
    preds = base_predictors(kind, train, p.K, rng, p.heterogeneous)
    if method == "single_model_baseline":
        preds = preds[p.baseline_index : p.baseline_index + 1]

    if method == "recalibrated":
        cal = data.take(slice(p.n_train, p.n_train + p.m))
        aux = data.take(slice(p.n_train + p.m, cal_end))
        lo, hi, _, _ = recalibrate_split(preds, cal, aux, test.X, p, rng)
        covered = (lo <= test.y) & (test.y <= hi)
        return SeedResult(0, float(covered.mean()), float((hi - lo).mean()), len(test))

    # stability methods calibrate on every held-out point (cal and aux together)
    cal_idx = np.arange(p.n_train, cal_end)
    level = method_base_level(method, p)
    if groups is None:
        models = [calibrate(bp.score, data.X[cal_idx], data.y[cal_idx], i) for i, bp in enumerate(preds)]
        lo, hi = _intervals_for(models, test.X, level)
    else:
        # group-conditional (Mondrian) calibration
        g_test = groups[cal_end:]
        lo = np.empty((len(test), len(preds)))
        hi = np.empty_like(lo)
        for g in (0, 1):
            gi = cal_idx[groups[cal_idx] == g]
            models = [calibrate(bp.score, data.X[gi], data.y[gi], i) for i, bp in enumerate(preds)]
            mask = g_test == g
            lo[mask], hi[mask] = _intervals_for(models, test.X[mask], level)
    sizes = hi - lo
    if not np.all(np.isfinite(sizes)):
        raise ArithmeticError(
            f"base level {level:.4g} needs more calibration points than the {len(cal_idx)} available"
        )
    chosen, probs = select_rows(method, sizes, p, rng)
    n = len(test)
    if method == "derandomized":
        covered = np.empty(n, dtype=bool)
        length = np.empty(n)
        for t in range(n):
            sets = [PredictionSet.interval(lo[t, k], hi[t, k]) for k in range(sizes.shape[1])]
            s = weighted_majority(sets, probs[t])
            covered[t] = test.y[t] in s
            length[t] = s.measure
    else:
        r = np.arange(n)
        covered = (lo[r, chosen] <= test.y) & (test.y <= hi[r, chosen])
        length = sizes[r, chosen]
    extra = {}
    if groups is not None:
        g_test = groups[cal_end:]
        for g in (0, 1):
            extra[f"coverage_g{g}"] = float(covered[g_test == g].mean())
            extra[f"n_g{g}"] = float((g_test == g).sum())
    return SeedResult(0, float(covered.mean()), float(length.mean()), n, extra)


def make_aux_selector(aux_models, params: ScenarioParams) -> AuxSelector:
    K = len(aux_models)
    alpha_tilde = params.alpha_tilde if params.alpha_tilde is not None else params.alpha
    mech = params.recal_mechanism
    kw: dict = {}
    if mech == "minse":
        kw = {"eta": params.recal_eta if params.recal_eta is not None else math.log(K), "tau": 0.0}
    elif mech == "ada_minse":
        kw = {"alpha": params.alpha, "alpha_prime": params.alpha_prime or params.alpha / 5}
    elif mech == "exponential":
        kw = {"eta": params.recal_eta if params.recal_eta is not None else params.eta}
    return AuxSelector(aux_models, alpha_tilde, mech, **kw)


class RecalibratedSets(NamedTuple):
    lower: np.ndarray
    upper: np.ndarray
    chosen: np.ndarray
    rank: int


def recalibrate_split(
    preds: Sequence[BasePredictor],
    cal: Dataset,
    aux: Dataset,
    X_test: np.ndarray,
    params: ScenarioParams,
    rng: np.random.Generator,
) -> RecalibratedSets:
    """Effective-rank recalibration with a selector built on the auxiliary split."""
    if len(aux) == 0:
        raise ValueError("recalibration needs an auxiliary split (n_aux >= 1)")
    models = [calibrate(bp.score, cal.X, cal.y, i) for i, bp in enumerate(preds)]
    aux_models = [calibrate(bp.score, aux.X, aux.y, i) for i, bp in enumerate(preds)]
    selector = make_aux_selector(aux_models, params)
    if selector.mechanism == "exponential" and params.scale is None:
        selector.scale = _auto_scale(selector.proxy_sizes_batch(np.vstack([cal.X, X_test])), None)
    elif params.scale is not None:
        selector.scale = params.scale
    eff = effective_ranks(models, selector, cal.X, cal.y, rng)
    r = recalibrated_rank(eff, params.alpha)
    chosen = selector.select_batch(X_test, rng)
    n = X_test.shape[0]
    lo = np.empty(n)
    hi = np.empty(n)
    for k, mod in enumerate(models):
        mask = chosen == k
        if mask.any():
            lo[mask], hi[mask] = mod.score_fn.bounds(X_test[mask], mod.threshold(r))
    return RecalibratedSets(lo, hi, chosen, r)


def run_seed(scenario: Scenario, method: str, seed: int) -> SeedResult:
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    rng = np.random.default_rng(seed)
    if scenario.kind in ("worst_case_oracle", "coin_flip"):
        res = _oracle_seed(scenario, method, rng)
    elif scenario.kind == "arma_stream":
        raise ValueError("arma_stream is an online scenario; use run_online_scenario")
    else:
        res = _regression_seed(scenario, method, rng)
    res.seed = int(seed)
    return res


def aggregate(results: Sequence[SeedResult]) -> RunMetrics:
    extra_keys = sorted({k for r in results for k in r.extra})
    return RunMetrics.from_per_seed(
        [r.seed for r in results],
        [r.coverage for r in results],
        [r.mean_length for r in results],
        n_test=int(sum(r.n_test for r in results)),
        extra={k: [r.extra.get(k, math.nan) for r in results] for k in extra_keys},
    )


def run_batch_scenario(scenario: Scenario, method: str, seeds: Sequence[int]) -> RunMetrics:
    return aggregate([run_seed(scenario, method, s) for s in seeds])


# --------------------------------------------------------------------------
# Online


def default_learners(n_features: int, K: int) -> list:
    makers = [
        lambda: RollingOLS(n_features, window=50, refit_every=12),
        lambda: RollingOLS(n_features, window=100, refit_every=25),
        lambda: OnlineSGD(n_features, lr=0.005),
        lambda: OnlineSGD(n_features, lr=0.001),
        lambda: OnlineSGD(n_features, lr=0.001, penalty="l2", reg=0.1),
        lambda: OnlineSGD(n_features, lr=0.001, penalty="l1", reg=0.1),
    ]
    return [makers[i % len(makers)]() for i in range(K)]


def online_base_alpha(params: ScenarioParams) -> float:
    """ACI target per learner: ``alpha_prime`` if given, else ``(alpha - tau) e^-eta``."""
    if params.alpha_prime is not None:
        return params.alpha_prime
    return (params.alpha - params.tau) * math.exp(-params.eta)


def run_online_stream(X: np.ndarray, y: np.ndarray, params: ScenarioParams, rng: np.random.Generator) -> OnlineRun:
    """COMA and AdaCOMA over ``K`` ACI-wrapped default learners on one stream."""
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    base_alpha = online_base_alpha(params)
    preds = [
        AciPredictor(learner, base_alpha, params.aci_gamma, params.aci_window)
        for learner in default_learners(X.shape[1], params.K)
    ]
    budget = StabilityBudget(params.eta, params.tau, params.alpha)
    scale = params.scale if params.scale is not None else 20.0
    return run_online(
        X, y, preds, budget, rng,
        rate=params.hedge_rate, scale=scale, burn_in=params.burn_in,
    )


def run_online_scenario(params: ScenarioParams, seed: int, noise_sd: float = 1.0) -> OnlineRun:
    """ARMA(1,1) stream of ``T`` evaluated steps after ``burn_in`` warm-up steps."""
    rng = np.random.default_rng(seed)
    stream = gen_arma_stream(params.T + params.burn_in, params.ar, params.ma, noise_sd, rng, params.lags)
    return run_online_stream(stream.X, stream.y, params, rng)


def params_dict(params: ScenarioParams) -> dict:
    return asdict(params)
