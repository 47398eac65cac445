"""Candidate topology enumeration and its closed-form counts."""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction
from math import ceil, comb
from typing import Sequence

from .core import ClusterCombination, Measurement
from .errors import CombinationExplosionError

DEFAULT_N_MAX = 16
ORACLE_N_MAX = 12
_INT64_MAX = 2**63 - 1


@dataclass(frozen=True, order=True)
class MergeMask:
    n: int
    value: int

    @property
    def bits(self) -> tuple:
        return tuple(bool(self.value >> i & 1) for i in range(self.n - 1))

    @property
    def n_clusters(self) -> int:
        return self.n - sum(self.bits)


@dataclass(frozen=True)
class ConnectionTiling:
    """Non-overlapping cluster-index intervals, one preintegrated factor each."""

    intervals: tuple = ()

    def __post_init__(self):
        intervals = tuple(tuple(iv) for iv in self.intervals)
        for i, j in intervals:
            if i >= j:
                raise ValueError(f"interval ({i}, {j}) is a loop or reversed")
        for (_, j), (k, _) in zip(intervals, intervals[1:]):
            if k < j:
                raise ValueError("overlapping intervals")
        object.__setattr__(self, "intervals", intervals)

    def covers(self, k: int) -> bool:
        """True when the intervals tile all ``k - 1`` gaps exactly once."""
        if not self.intervals:
            return k == 1
        start = 0
        for i, j in self.intervals:
            if i != start:
                return False
            start = j
        return start == k - 1

    def __len__(self) -> int:
        return len(self.intervals)


@dataclass(frozen=True)
class CombinationCount:
    n_core: int
    merge_count: int
    total_with_connections: int


def enumerate_merges(n: int, n_max: int = DEFAULT_N_MAX) -> list[MergeMask]:
    if n < 1:
        raise ValueError("need at least one core measurement")
    if n > n_max:
        raise CombinationExplosionError(n, n_max)
    return [MergeMask(n, v) for v in range(1 << (n - 1))]


def connection_is_valid(t_start: int, t_end: int, sample_times: Sequence[int]) -> bool:
    """At least one continuous sample strictly inside (t_start, t_end)."""
    lo = bisect.bisect_right(sample_times, t_start)
    hi = bisect.bisect_left(sample_times, t_end)
    return hi > lo


def enumerate_tilings(
    combination: ClusterCombination, continuous: Sequence[Measurement]
) -> list[ConnectionTiling]:
    k = len(combination.clusters)
    if k == 1:
        return [ConnectionTiling(())]
    ts = [c.t_ns for c in combination.clusters]
    samples = [m.t_ns for m in continuous]
    valid = [
        [j > i and connection_is_valid(ts[i], ts[j], samples) for j in range(k)]
        for i in range(k)
    ]
    out: list[ConnectionTiling] = []

    def extend(start: int, acc: tuple) -> None:
        if start == k - 1:
            out.append(ConnectionTiling(acc))
            return
        for j in range(start + 1, k):
            if valid[start][j]:
                extend(j, acc + ((start, j),))

    extend(0, ())
    return out


def _total_terms(n: int) -> Fraction:
    m = n - 1
    return sum(
        (Fraction(comb(m, i)) * Fraction(2) ** (m - (i + 1)) for i in range(m + 1)),
        Fraction(0),
    )


def count_closed_form(n: int) -> CombinationCount:
    """Merge count and total candidate count for ``n`` core measurements.

    The total is the binomial sum over merge depth with ``2^(K-2)``
    tilings per ``K``-cluster combination; the single-cluster term
    contributes one half, so the sum is rounded up.
    """
    if n < 1:
        raise ValueError("need at least one core measurement")
    total = ceil(_total_terms(n))
    if total > _INT64_MAX:
        raise OverflowError(f"candidate count for n={n} exceeds int64")
    return CombinationCount(n, 2 ** (n - 1), total)


def brute_force_oracle(n: int) -> CombinationCount:
    """Literal enumeration of compositions x gap tilings (every gap coverable)."""
    if n < 1:
        raise ValueError("need at least one core measurement")
    if n > ORACLE_N_MAX:
        raise ValueError(f"brute force refused for n={n} > {ORACLE_N_MAX}")

    def compositions(rest: int):
        if rest == 0:
            yield ()
            return
        for first in range(1, rest + 1):
            for tail in compositions(rest - first):
                yield (first,) + tail

    def covers(k: int) -> int:
        # count sets of intervals over points 0..k-1 that cover every gap once
        gaps = set(range(k - 1))

        def search(chosen: list) -> int:
            covered = {g for i, j in chosen for g in range(i, j)}
            if covered == gaps:
                return 1
            first = min(gaps - covered)
            total = 0
            for i in range(k):
                for j in range(i + 1, k):
                    span = set(range(i, j))
                    if first in span and not span & covered:
                        total += search(chosen + [(i, j)])
            return total

        return search([])

    merges = 0
    total = 0
    tiling_counts: dict = {}
    for parts in compositions(n):
        merges += 1
        k = len(parts)
        if k not in tiling_counts:
            tiling_counts[k] = covers(k)
        total += tiling_counts[k]
    return CombinationCount(n, merges, total)
