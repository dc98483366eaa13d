"""Colex ranking of combinations and the incremental nested-combination stream.

A splitting rule is identified by the colex rank of the sorted indices of its
G defining points. Combinations whose largest element is ``n`` occupy the
contiguous rank block ``[C(n, G), C(n + 1, G))``, which is what lets the
search process one data point at a time.
"""

from __future__ import annotations

from collections import deque
from itertools import combinations
from math import comb

import numpy as np

_INT64_MAX = 2**63 - 1


def binomial(n, k, saturate=False):
    """Exact binomial coefficient, 0 when ``k > n``.

    With ``saturate=True`` an :class:`OverflowError` is raised instead of
    returning values that do not fit a signed 64-bit integer.
    """
    if n < 0 or k < 0:
        raise ValueError("binomial requires n, k >= 0")
    value = comb(n, k)
    if saturate and value > _INT64_MAX:
        raise OverflowError(f"binomial({n}, {k}) exceeds int64")
    return value


def colex_rank(combination):
    combination = [int(c) for c in combination]
    for a, b in zip(combination, combination[1:]):
        if a >= b:
            raise ValueError(f"combination must be strictly increasing, got {combination}")
    if combination and combination[0] < 0:
        raise ValueError("combination elements must be >= 0")
    return sum(comb(c, i + 1) for i, c in enumerate(combination))


def colex_unrank(rank, k):
    """Inverse of :func:`colex_rank`; greedy decoding from the largest element."""
    if rank < 0:
        raise ValueError("rank must be >= 0")
    out = [0] * k
    for i in range(k, 0, -1):
        # largest c with C(c, i) <= rank
        c = i - 1
        step = 1
        while comb(c + step, i) <= rank:
            c += step
            step *= 2
        while step > 1:
            step //= 2
            if comb(c + step, i) <= rank:
                c += step
        out[i - 1] = c
        rank -= comb(c, i)
    return tuple(out)


def colex_block(n, g):
    """All g-combinations with maximum element ``n``, ordered by colex rank.

    Returns an int64 array of shape (C(n, g-1), g).
    """
    if g == 0:
        return np.empty((0, 0), dtype=np.int64)
    heads = sorted(combinations(range(n), g - 1), key=lambda c: c[::-1])
    out = np.empty((len(heads), g), dtype=np.int64)
    if heads:
        out[:, : g - 1] = np.array(heads, dtype=np.int64).reshape(len(heads), g - 1)
    out[:, g - 1] = n
    return out


class CombinationStream:
    """Incremental G-combination generator over points ``0, 1, 2, ...``.

    ``css[j]`` holds the j-combinations of the points seen so far. Each call
    to :meth:`add_point` extends every level with the new point (highest
    level first, newest combinations appended in reverse) and returns the
    new G-combinations, after which the G level is cleared.
    """

    def __init__(self, g):
        if g < 1:
            raise ValueError("g must be >= 1")
        self.g = g
        self.css = [[()]] + [[] for _ in range(g)]
        self.next_point = 0

    def add_point(self):
        n = self.next_point
        for j in range(min(self.g, n + 1), 0, -1):
            updates = [c + (n,) for c in self.css[j - 1]]
            updates.reverse()
            self.css[j].extend(updates)
        block = self.css[self.g]
        self.css[self.g] = []
        self.next_point += 1
        return n, block


def nested_combs_steps(n_points, k, g):
    """Per-point stream of new (k, g)-nested combinations.

    Yields ``(n, configs)`` after point ``n`` is processed, where ``configs``
    lists the K-tuples of rule ranks whose largest rule has its maximum
    defining point equal to ``n``. Ranks inside each tuple are increasing.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    stream = CombinationStream(g)
    ncss = [deque([()])] + [deque() for _ in range(k)]
    for _ in range(n_points):
        n, _block = stream.add_point()
        emitted = []
        for i in range(comb(n, g), comb(n + 1, g)):
            for level in range(min(k, i + 1), 0, -1):
                new = [c + (i,) for c in ncss[level - 1]]
                if level == k:
                    emitted.extend(new)
                else:
                    ncss[level].extendleft(reversed(new))
        yield n, emitted


def nested_combs(n_points, k, g):
    """Every K-combination of the G-combinations of ``range(n_points)``, once each."""
    for _, configs in nested_combs_steps(n_points, k, g):
        yield from configs
