"""Stable selection among K prediction sets.

Every mechanism maps a vector of set sizes to a distribution over the K
candidate indices (or directly to an index, for the Laplace mechanism).  A
distribution ``p`` is ``(eta, tau)``-stable with respect to a prior ``b`` when

    sum_i max(0, p_i - exp(eta) * b_i) <= tau,

and selecting ``i ~ p`` from sets at miscoverage ``alpha`` then miscovers with
probability at most ``alpha * exp(eta) + tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .intervals import PredictionSet, weighted_majority

SIMPLEX_TOL = 1e-10
OBJECTIVE_TOL = 1e-9
CERTIFICATE_TOL = 1e-10
PRIOR_TOL = 1e-12


@dataclass(frozen=True)
class StabilityBudget:
    eta: float
    tau: float
    alpha: float
    alpha_prime: float | None = None

    def __post_init__(self) -> None:
        if not self.eta >= 0:
            raise ValueError(f"eta must be >= 0, got {self.eta}")
        if not 0 <= self.tau < 1:
            raise ValueError(f"tau must lie in [0, 1), got {self.tau}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.alpha_prime is not None:
            if not 0 < self.alpha_prime < 1:
                raise ValueError(f"alpha_prime must lie in (0, 1), got {self.alpha_prime}")
            if self.alpha_prime > self.alpha:
                raise ValueError("alpha_prime must not exceed alpha")

    @property
    def gamma(self) -> float:
        return math.exp(self.eta)

    @property
    def selected_miscoverage_bound(self) -> float:
        """Bound on post-selection miscoverage when the base sets are at ``alpha``."""
        return self.alpha * self.gamma + self.tau

    def base_level(self) -> float:
        """Base miscoverage that makes post-selection miscoverage exactly ``alpha``."""
        return (self.alpha - self.tau) * math.exp(-self.eta)


@dataclass(frozen=True)
class SizeProfile:
    """Per-candidate set sizes at one query point, with a normalising scale."""

    sizes: np.ndarray
    scale: float = 1.0

    def __post_init__(self) -> None:
        sizes = np.atleast_1d(np.asarray(self.sizes, dtype=float))
        if sizes.ndim != 1 or sizes.size < 1:
            raise ValueError("sizes must be a non-empty vector")
        if np.any(np.isnan(sizes)) or np.any(sizes < 0):
            raise ValueError("sizes must be nonnegative")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        sizes.flags.writeable = False
        object.__setattr__(self, "sizes", sizes)

    @property
    def k(self) -> int:
        return self.sizes.size

    def normalized(self) -> np.ndarray:
        """Sizes divided by the scale; raises if any falls outside [0, 1]."""
        z = self.sizes / self.scale
        bad = np.flatnonzero(~((z >= 0) & (z <= 1)))
        if bad.size:
            i = int(bad[0])
            raise ValueError(
                f"normalized size {z[i]} at index {i} is outside [0, 1]; "
                f"increase the scale (currently {self.scale})"
            )
        return z


@dataclass(frozen=True)
class Prior:
    b: np.ndarray

    def __post_init__(self) -> None:
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if b.ndim != 1 or b.size < 1:
            raise ValueError("prior must be a non-empty vector")
        if np.any(~np.isfinite(b)) or np.any(b < 0):
            raise ValueError("prior entries must be finite and nonnegative")
        if abs(b.sum() - 1.0) > PRIOR_TOL:
            raise ValueError(f"prior must sum to 1 (simplex violation: sum = {b.sum():.12g})")
        b.flags.writeable = False
        object.__setattr__(self, "b", b)

    @classmethod
    def uniform(cls, k: int) -> "Prior":
        return cls(np.full(k, 1.0 / k))

    @property
    def k(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class SelectionDistribution:
    """A distribution over candidate indices.

    ``budget_used`` holds ``(gamma, tau)`` with ``gamma = exp(eta)``; ``prior`` is
    the reference distribution the certificate is stated against.
    """

    p: np.ndarray
    budget_used: tuple[float, float] = (1.0, 0.0)
    prior: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        if p.ndim != 1 or p.size < 1:
            raise ValueError("p must be a non-empty vector")
        if np.any(p < -SIMPLEX_TOL) or abs(p.sum() - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"p is not on the simplex: {p}")
        p = np.clip(p, 0.0, None)
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    @property
    def k(self) -> int:
        return self.p.size

    @property
    def gamma(self) -> float:
        return self.budget_used[0]

    @property
    def eta(self) -> float:
        return math.log(self.budget_used[0])

    @property
    def tau(self) -> float:
        return self.budget_used[1]

    def expected_size(self, sizes: Sequence[float] | SizeProfile) -> float:
        if isinstance(sizes, SizeProfile):
            sizes = sizes.sizes
        return _objective(self.p, np.asarray(sizes, dtype=float))


def _objective(p: np.ndarray, sizes: np.ndarray) -> float:
    mask = p > 0  # 0 * inf counts as 0
    return float(np.dot(p[mask], sizes[mask]))


def certificate_slack(p: Sequence[float], b: Sequence[float], eta: float) -> float:
    """Total additive slack ``sum_i max(0, p_i - e^eta b_i)`` that ``p`` needs."""
    p = np.asarray(p, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.maximum(0.0, p - math.exp(eta) * b).sum())


def satisfies_certificate(
    p: Sequence[float], b: Sequence[float], eta: float, tau: float, tol: float = CERTIFICATE_TOL
) -> bool:
    return certificate_slack(p, b, eta) <= tau + tol


def minimal_eta(p: Sequence[float], b: Sequence[float]) -> float:
    """Smallest ``eta`` for which ``p`` is ``(eta, 0)``-stable against ``b``."""
    p = np.asarray(p, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any((b == 0) & (p > 0)):
        return math.inf
    ratio = np.max(np.divide(p, b, out=np.zeros_like(p), where=b > 0))
    return max(0.0, math.log(ratio)) if ratio > 0 else 0.0


# --------------------------------------------------------------------------
# Laplace noise


def laplace_noise(eta: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Laplace(0, 1/eta) draws by inverse CDF of ``u ~ U(-1/2, 1/2)``."""
    u = rng.random(size) - 0.5
    with np.errstate(divide="ignore"):
        return -(1.0 / eta) * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_select(
    xi: SizeProfile, eta: float, rng: np.random.Generator, size: int | None = None
) -> int | np.ndarray:
    """Report-noisy-min: ``argmin_i sizes_i / scale + Lap(1/eta)``.

    With ``size`` given, returns that many independent selections.
    """
    if not eta > 0:
        raise ValueError(f"Laplace mechanism needs eta > 0, got {eta}")
    z = xi.normalized()
    if xi.k == 1:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    if size is None:
        return int(np.argmin(z + laplace_noise(eta, rng, xi.k)))
    noisy = z[None, :] + laplace_noise(eta, rng, (size, xi.k))
    return np.argmin(noisy, axis=1)


def laplace_select_batch(
    sizes: np.ndarray, scale: float, eta: float, rng: np.random.Generator
) -> np.ndarray:
    """Row-wise Laplace selection for an ``(n, K)`` array of sizes."""
    if not eta > 0:
        raise ValueError(f"Laplace mechanism needs eta > 0, got {eta}")
    z = _normalize_batch(sizes, scale)
    return np.argmin(z + laplace_noise(eta, rng, z.shape), axis=1)


# --------------------------------------------------------------------------
# Exponential mechanism


def exponential_select(xi: SizeProfile, eta: float) -> SelectionDistribution:
    """Softmax of ``-eta * sizes / scale``; the induced sampler is ``2 eta``-stable."""
    if not eta >= 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    z = xi.normalized()
    logits = -eta * z
    w = np.exp(logits - logits.max())
    p = w / w.sum()
    return SelectionDistribution(p, budget_used=(math.exp(2 * eta), 0.0), prior=np.full(xi.k, 1.0 / xi.k))


def exponential_batch(sizes: np.ndarray, scale: float, eta: float) -> np.ndarray:
    z = _normalize_batch(sizes, scale)
    logits = -eta * z
    w = np.exp(logits - logits.max(axis=1, keepdims=True))
    return w / w.sum(axis=1, keepdims=True)


def _normalize_batch(sizes: np.ndarray, scale: float) -> np.ndarray:
    z = np.asarray(sizes, dtype=float) / scale
    if not np.all((z >= 0) & (z <= 1)):
        worst = z[~((z >= 0) & (z <= 1))][0]
        raise ValueError(f"normalized size {worst} is outside [0, 1]; increase the scale ({scale})")
    return z


# --------------------------------------------------------------------------
# MinSE


def _fill_order(sizes: np.ndarray, b: np.ndarray) -> np.ndarray:
    # ascending size, then larger prior first, then lower index
    return np.lexsort((np.arange(sizes.size), -b, sizes))


def _greedy_fill(sizes: np.ndarray, caps: np.ndarray, slack: float) -> np.ndarray:
    p = np.zeros(sizes.size)
    remaining = 1.0
    for i in _fill_order(sizes, caps):
        if remaining <= 0.0:
            break
        take = min(remaining, caps[i] + slack)
        slack -= max(0.0, take - caps[i])
        p[i] = take
        remaining -= take
    # only rounding can leave mass over, since sum(caps) + slack >= 1
    if remaining > 0.0:
        if remaining > 1e-12:
            raise ArithmeticError(f"MinSE fill left {remaining} unassigned mass")
        p /= p.sum()
    return p


def minse(xi: SizeProfile, b: Prior, eta: float, tau: float) -> SelectionDistribution:
    """Exact solution of the minimum-stable-expectation linear program.

    minimise ``sum_i p_i sizes_i`` over the simplex subject to
    ``p_i <= e^eta b_i + s_i``, ``s >= 0``, ``sum_i s_i <= tau``.  Filling the
    smallest sets first, each up to its cap plus whatever slack is left, is
    optimal because slack is interchangeable between coordinates.
    """
    if b.k != xi.k:
        raise ValueError(f"prior has {b.k} entries but there are {xi.k} sets")
    if not eta >= 0 or not tau >= 0:
        raise ValueError("eta and tau must be nonnegative")
    gamma = math.exp(eta)
    if xi.k == 1:
        return SelectionDistribution(np.ones(1), budget_used=(gamma, tau), prior=b.b)
    p = _greedy_fill(xi.sizes, gamma * b.b, tau)
    return SelectionDistribution(p, budget_used=(gamma, tau), prior=b.b)


def minse_batch(sizes: np.ndarray, b: Sequence[float], eta: float, tau: float) -> np.ndarray:
    """Row-wise MinSE for an ``(n, K)`` array of sizes with one shared prior.

    Uses the closed form of the greedy fill: after the ``j`` smallest sets the
    cumulative mass is ``min(1, e^eta * (b_(1) + ... + b_(j)) + tau)``.
    """
    sizes = np.atleast_2d(np.asarray(sizes, dtype=float))
    b = np.asarray(b, dtype=float)
    n, k = sizes.shape
    idx = np.arange(k)
    order = np.lexsort((np.broadcast_to(idx, (n, k)), np.broadcast_to(-b, (n, k)), sizes), axis=1)
    caps = math.exp(eta) * b[order]
    cum = np.minimum(1.0, np.cumsum(caps, axis=1) + tau)
    cum[:, -1] = 1.0
    sorted_p = np.diff(cum, axis=1, prepend=0.0)
    p = np.empty_like(sorted_p)
    np.put_along_axis(p, order, sorted_p, axis=1)
    return p


# --------------------------------------------------------------------------
# AdaMinSE


def _cumulative_mass(sorted_b: np.ndarray, gamma: float, slack: float) -> np.ndarray:
    return np.minimum(1.0, gamma * np.cumsum(sorted_b) + slack)


def ada_minse(xi: SizeProfile, b: Prior, alpha: float, alpha_prime: float) -> SelectionDistribution:
    """MinSE that also chooses the split between ``e^eta`` and ``tau``.

    Feasible pairs satisfy ``gamma * alpha_prime + tau <= alpha`` with
    ``gamma = e^eta >= 1``; at any gamma the best slack is
    ``alpha - gamma * alpha_prime``.  The objective is then convex and
    piecewise linear in gamma, with kinks only where a cumulative cap
    ``alpha + gamma * (B_j - alpha_prime)`` reaches 1 (``B_j`` the prior mass
    of the ``j`` smallest sets), so scanning those kinks and the two
    endpoints finds the optimum.
    """
    if not 0 < alpha_prime <= alpha < 1:
        raise ValueError(
            f"AdaMinSE needs 0 < alpha_prime <= alpha < 1, got alpha={alpha}, alpha_prime={alpha_prime}"
        )
    if b.k != xi.k:
        raise ValueError(f"prior has {b.k} entries but there are {xi.k} sets")
    if xi.k == 1:
        return SelectionDistribution(np.ones(1), budget_used=(1.0, alpha - alpha_prime), prior=b.b)

    gamma_max = alpha / alpha_prime
    order = _fill_order(xi.sizes, b.b)
    sorted_b = b.b[order]
    sorted_sizes = xi.sizes[order]
    cum_b = np.cumsum(sorted_b)

    candidates = {1.0, gamma_max}
    for bj in cum_b[:-1]:
        if bj > alpha_prime:
            g = (1.0 - alpha) / (bj - alpha_prime)
            if 1.0 < g < gamma_max:
                candidates.add(g)

    best: tuple[float, float] | None = None
    for g in sorted(candidates):
        slack = max(0.0, alpha - g * alpha_prime)
        cum = _cumulative_mass(sorted_b, g, slack)
        cum[-1] = 1.0
        obj = _objective(np.diff(cum, prepend=0.0), sorted_sizes)
        if best is None or obj < best[1] - 1e-15:
            best = (g, obj)
    assert best is not None
    gamma = best[0]
    slack = max(0.0, alpha - gamma * alpha_prime)
    p = _greedy_fill(xi.sizes, gamma * b.b, slack)
    return SelectionDistribution(p, budget_used=(gamma, slack), prior=b.b)


# --------------------------------------------------------------------------
# Sampling and derandomisation


def sample_selection(p: SelectionDistribution, rng: np.random.Generator, size: int | None = None):
    """Inverse-CDF draw(s) from ``p``."""
    cdf = np.cumsum(p.p)
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    idx = np.minimum(idx, p.k - 1)
    return int(idx) if size is None else idx


def sample_batch(p: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One inverse-CDF draw per row of an ``(n, K)`` probability array."""
    cdf = np.cumsum(p, axis=1)
    u = rng.random(p.shape[0])
    idx = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def derandomize(p: SelectionDistribution, sets: Sequence[PredictionSet]) -> PredictionSet:
    """The set of labels on which the ``p``-weighted vote reaches 1/2."""
    if len(sets) != p.k:
        raise ValueError(f"got {len(sets)} sets for a distribution over {p.k}")
    return weighted_majority(sets, p.p, 0.5)


def dominance_check(
    xi: SizeProfile,
    competitor: SelectionDistribution,
    b: Prior,
    eta: float,
    tau: float,
) -> bool:
    """True iff MinSE at ``(b, eta, tau)`` has expected size no larger than ``competitor``.

    The competitor must itself be ``(eta, tau)``-stable against ``b``.
    """
    slack = certificate_slack(competitor.p, b.b, eta)
    if slack > tau + CERTIFICATE_TOL:
        raise ValueError(
            f"competitor is not ({eta}, {tau})-stable against the given prior (needs slack {slack})"
        )
    best = minse(xi, b, eta, tau)
    return best.expected_size(xi) <= competitor.expected_size(xi) + OBJECTIVE_TOL
