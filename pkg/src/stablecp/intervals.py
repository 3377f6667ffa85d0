"""Finite unions of closed real intervals and weighted-majority voting over them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

# Weighted votes are compared to the threshold with this slack so that
# e.g. p = (0.3, 0.2) counts as reaching 1/2.
VOTE_TOL = 1e-12


def _normalize(intervals: Iterable[tuple[float, float]]) -> tuple[tuple[float, float], ...]:
    items = sorted((float(lo), float(hi)) for lo, hi in intervals)
    out: list[list[float]] = []
    for lo, hi in items:
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval endpoints must not be NaN")
        if lo > hi:
            raise ValueError(f"interval has lo > hi: [{lo}, {hi}]")
        # closed intervals that touch are merged
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return tuple((lo, hi) for lo, hi in out)


@dataclass(frozen=True)
class PredictionSet:
    """A finite union of disjoint closed intervals, sorted by lower endpoint.

    Infinite endpoints are allowed, so ``PredictionSet.full()`` is the whole
    real line.  The empty tuple is the empty set.
    """

    intervals: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", _normalize(self.intervals))

    @classmethod
    def empty(cls) -> "PredictionSet":
        return cls(())

    @classmethod
    def full(cls) -> "PredictionSet":
        return cls(((-math.inf, math.inf),))

    @classmethod
    def interval(cls, lo: float, hi: float) -> "PredictionSet":
        return cls(((lo, hi),))

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def __contains__(self, y: float) -> bool:
        return any(lo <= y <= hi for lo, hi in self.intervals)

    def contains(self, y: float) -> bool:
        return y in self

    def issubset(self, other: "PredictionSet") -> bool:
        # every piece of self must sit inside a single piece of other
        return all(
            any(olo <= lo and hi <= ohi for olo, ohi in other.intervals)
            for lo, hi in self.intervals
        )

    def __repr__(self) -> str:
        body = " U ".join(f"[{lo:g}, {hi:g}]" for lo, hi in self.intervals)
        return f"PredictionSet({body or 'empty'})"


def weighted_majority(
    sets: Sequence[PredictionSet],
    weights: Sequence[float],
    threshold: float = 0.5,
) -> PredictionSet:
    """Return ``{y : sum_i weights[i] * 1{y in sets[i]} >= threshold}`` exactly.

    The vote is piecewise constant between the sorted endpoints of all the
    input intervals, so it suffices to evaluate it at every endpoint and on
    every open gap between consecutive endpoints.  Because the inputs are
    closed, the vote at an endpoint is never smaller than on the adjacent
    gaps and the result is again a union of closed intervals (isolated points
    appear as degenerate ``[a, a]`` pieces).
    """
    weights = np.asarray(weights, dtype=float)
    if len(sets) != len(weights):
        raise ValueError("need one weight per set")
    if len(sets) == 0:
        return PredictionSet.empty()

    pts = sorted({e for s in sets for iv in s.intervals for e in iv})
    if not pts:
        return PredictionSet.empty()

    # pieces alternate point, gap, point, ... ; gaps are probed at midpoints
    probes: list[float] = []
    for a, b in zip(pts[:-1], pts[1:]):
        probes.append(a)
        probes.append(_midpoint(a, b))
    probes.append(pts[-1])

    probe_arr = np.asarray(probes)
    votes = np.zeros(len(probes))
    for w, s in zip(weights, sets):
        if w == 0.0 or s.is_empty:
            continue
        inside = np.zeros(len(probes), dtype=bool)
        for lo, hi in s.intervals:
            inside |= (probe_arr >= lo) & (probe_arr <= hi)
        votes += w * inside
    keep = votes >= threshold - VOTE_TOL

    pieces: list[tuple[float, float]] = []
    start: float | None = None
    for j, ok in enumerate(keep):
        if j % 2 == 0:  # endpoint
            x = pts[j // 2]
            if ok and start is None:
                start = x
            if not ok and start is not None:
                pieces.append((start, pts[j // 2 - 1]))
                start = None
        else:  # open gap (pts[j//2], pts[j//2 + 1])
            if not ok and start is not None:
                pieces.append((start, pts[j // 2]))
                start = None
    if start is not None:
        pieces.append((start, pts[-1]))
    return PredictionSet(tuple(pieces))


def _midpoint(a: float, b: float) -> float:
    if math.isinf(a) and math.isinf(b):
        return 0.0
    if math.isinf(a):
        return b - 1.0
    if math.isinf(b):
        return a + 1.0
    return 0.5 * (a + b)
