"""Ancestry-relation matrices and the crossed-pair-free configuration stream.

A configuration is a list of rule ranks together with its K x K ancestry
matrix ``ar`` where ``ar[i, j]`` says on which side of rule ``i`` the
defining points of rule ``j`` lie (+1, -1, or 0 when they straddle it).
A configuration is feasible when no off-diagonal pair is zero both ways.

Two implementations live here: a per-configuration reference
(:func:`update_armat`, :func:`nested_combs_fa`) and a batched numpy path
(:func:`extend_batch`) in which configurations of equal size are stored as
``(m, k + 1, k)`` integer blocks, the rank row stacked above the matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .combinatorics import CombinationStream, colex_block, colex_rank
from .exceptions import InvalidParamsError
from .geometry import EmbeddedDataset, Hyperplane, augment, fit_normals, positive_side

DEFAULT_MAX_TABLE_BYTES = 2 * 1024**3


@dataclass
class FilterStats:
    attempted: int = 0
    feasible: int = 0
    crossed: int = 0
    degenerate: int = 0

    def merge(self, other):
        self.attempted += other.attempted
        self.feasible += other.feasible
        self.crossed += other.crossed
        self.degenerate += other.degenerate


class RuleTable:
    """Growable table of fitted rules, indexed by colex rank.

    Rules are G-combinations of ``universe`` (positions into the evaluation
    points); their side masks are computed over *all* evaluation points.
    Ranks are colex ranks of universe positions, so they are dense and
    a block of new ranks appears each time a universe point is added.
    """

    def __init__(self, embedded, universe=None, max_bytes=DEFAULT_MAX_TABLE_BYTES):
        if not isinstance(embedded, EmbeddedDataset):
            embedded = EmbeddedDataset(np.asarray(embedded, float), 1, np.shape(embedded)[1])
        self.embedded = embedded
        self.points_bar = augment(embedded.points)
        self.g = embedded.g
        n = embedded.n
        self.universe = np.arange(n) if universe is None else np.asarray(universe, dtype=np.int64)
        total = comb(len(self.universe), self.g)
        if total * (n + 8 * (2 * self.g + 1)) > max_bytes:
            raise InvalidParamsError(
                f"{total} candidate rules over {n} points exceed the rule-table memory limit; "
                "use a smaller dataset or a coreset method"
            )
        self.n_total = total
        self.n_points = n
        self._cap = 0
        self.size = 0
        self.valid = np.zeros(0, dtype=bool)
        self.normals = np.zeros((0, self.g + 1))
        self.defining = np.zeros((0, self.g), dtype=np.int64)
        self.side = np.zeros((0, n), dtype=bool)
        self._bits = {}
        self._packed = None

    def _reserve(self, size):
        if size <= self._cap:
            return
        cap = min(self.n_total, max(size, 2 * self._cap, 64))
        for name, fill in (("valid", False), ("normals", 0.0), ("defining", -1), ("side", False)):
            old = getattr(self, name)
            new = np.full((cap,) + old.shape[1:], fill, dtype=old.dtype)
            new[: self.size] = old[: self.size]
            setattr(self, name, new)
        self._cap = cap

    def fit_block(self, n):
        """Fit all rules whose largest universe position is ``n``; return their rank range."""
        start, stop = comb(n, self.g), comb(n + 1, self.g)
        if start != self.size:
            raise RuntimeError("rule blocks must be fitted in point order")
        local = colex_block(n, self.g)
        self._store(start, local)
        return start, stop

    def fit_all(self):
        for n in range(self.g - 1, len(self.universe)):
            if comb(n + 1, self.g) > self.size:
                self.fit_block(n)
        return self

    def _store(self, start, local):
        m = local.shape[0]
        self._reserve(start + m)
        if m == 0:
            return
        glob = self.universe[local]
        pts = self.embedded.points[glob]
        normals, ok = fit_normals(pts)
        sl = slice(start, start + m)
        self.valid[sl] = ok
        self.normals[sl] = normals
        self.defining[sl] = glob
        side = np.zeros((m, self.n_points), dtype=bool)
        if ok.any():
            side[ok] = positive_side(normals[ok][:, None, :], self.points_bar[None, :, :])
        self.side[sl] = side
        self.size = start + m
        self._packed = None

    def rank_of(self, local_combination):
        return colex_rank(sorted(local_combination))

    def is_valid(self, rank):
        return rank < self.size and bool(self.valid[rank])

    def hyperplane(self, rank):
        if not self.is_valid(rank):
            raise KeyError(f"rule {rank} is not a fitted, non-degenerate rule")
        return Hyperplane(
            int(rank),
            tuple(int(i) for i in self.defining[rank]),
            self.normals[rank].copy(),
            self.side[rank].copy(),
        )

    def bits(self, rank):
        """Positive-side mask of a rule as a Python integer bitset."""
        b = self._bits.get(rank)
        if b is None:
            b = int.from_bytes(np.packbits(self.side[rank], bitorder="little").tobytes(), "little")
            self._bits[rank] = b
        return b

    def packed(self):
        """Positive sides of all fitted rules packed into uint64 words, shape (size, W)."""
        if self._packed is None or self._packed.shape[0] != self.size:
            self._packed = pack_bits(self.side[: self.size])
        return self._packed

    def ancestry(self, i, j):
        s = self.side[i, self.defining[j]]
        if s.all():
            return 1
        if not s.any():
            return -1
        return 0

    def ancestry_against(self, new, ranks):
        """Vectorized ``(AR[r, new], AR[new, r])`` for an array of existing ranks."""
        ranks = np.asarray(ranks, dtype=np.int64)
        to_new = _sign(self.side[ranks[:, None], self.defining[new][None, :]])
        from_new = _sign(self.side[new][self.defining[ranks]])
        return to_new, from_new


class RuleSet:
    """Explicit list of rules given by global defining-point tuples.

    Rows ``0..m-1`` play the role of ranks inside configurations; each row's
    public identity (:attr:`Hyperplane.rank`) is the colex rank of its sorted
    defining indices over the evaluation points. Degenerate tuples are kept
    but marked invalid.
    """

    def __init__(self, embedded, defining):
        if not isinstance(embedded, EmbeddedDataset):
            embedded = EmbeddedDataset(np.asarray(embedded, float), 1, np.shape(embedded)[1])
        self.embedded = embedded
        self.points_bar = augment(embedded.points)
        self.g = embedded.g
        self.n_points = embedded.n
        given = np.asarray(defining, dtype=np.int64).reshape(-1, self.g)
        self.defining = np.sort(given, axis=1)
        self.keys = [colex_rank(row) for row in self.defining.tolist()]
        self.size = len(self.keys)
        # fit in the given point order so refits reproduce the original normals exactly
        normals, ok = fit_normals(embedded.points[given])
        self.normals = normals
        self.valid = ok
        self.side = np.zeros((self.size, self.n_points), dtype=bool)
        if ok.any():
            self.side[ok] = positive_side(normals[ok][:, None, :], self.points_bar[None, :, :])
        self._bits = {}
        self._packed = None

    is_valid = RuleTable.is_valid
    bits = RuleTable.bits
    packed = RuleTable.packed
    ancestry = RuleTable.ancestry
    ancestry_against = RuleTable.ancestry_against

    def hyperplane(self, row):
        if not self.is_valid(row):
            raise KeyError(f"row {row} is degenerate")
        return Hyperplane(
            self.keys[row],
            tuple(int(i) for i in self.defining[row]),
            self.normals[row].copy(),
            self.side[row].copy(),
        )


def _sign(s):
    allp = s.all(axis=-1)
    nonep = ~s.any(axis=-1)
    return allp.astype(np.int8) - nonep.astype(np.int8)


def pack_bits(mask):
    """Pack a boolean (m, N) matrix into (m, ceil(N/64)) uint64 words."""
    mask = np.asarray(mask, dtype=bool)
    m, n = mask.shape
    w = max(1, -(-n // 64))
    padded = np.zeros((m, w * 64), dtype=bool)
    padded[:, :n] = mask
    return np.packbits(padded, axis=1, bitorder="little").view(np.uint64).reshape(m, w)


@dataclass(frozen=True, eq=False)
class Configuration:
    rules: tuple
    ar: np.ndarray = field(repr=False)

    @property
    def k(self):
        return len(self.rules)

    def ncr(self):
        """Stacked (k+1) x k integer layout: ranks above the ancestry matrix."""
        out = np.zeros((self.k + 1, self.k), dtype=np.int64)
        out[0] = self.rules
        out[1:] = self.ar
        return out

    @classmethod
    def from_ncr(cls, ncr):
        ncr = np.asarray(ncr)
        return cls(tuple(int(r) for r in ncr[0]), ncr[1:].astype(np.int8))

    def is_feasible(self):
        return is_feasible(self.ar)

    def key(self):
        return (self.rules, self.ar.tobytes())

    def __eq__(self, other):
        return isinstance(other, Configuration) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def sub(self, positions):
        positions = list(positions)
        return Configuration(
            tuple(self.rules[p] for p in positions), self.ar[np.ix_(positions, positions)]
        )


EMPTY = Configuration((), np.zeros((0, 0), dtype=np.int8))


def is_feasible(ar):
    ar = np.asarray(ar)
    zero = ar == 0
    both = zero & zero.T
    np.fill_diagonal(both, False)
    return not both.any()


def ancestry_value(table, i, j):
    return table.ancestry(i, j)


def update_armat(config, new_rule, table):
    """Append ``new_rule`` to a feasible configuration, or None if it crosses a member.

    Only the 2k relations between the new rule and the k existing rules are
    evaluated; the first crossed member stops the scan.
    """
    if not table.is_valid(new_rule):
        return None
    k = config.k
    ar = np.zeros((k + 1, k + 1), dtype=np.int8)
    ar[:k, :k] = config.ar
    for p, r in enumerate(config.rules):
        to_new = ancestry_value(table, r, new_rule)
        from_new = ancestry_value(table, new_rule, r)
        if to_new == 0 and from_new == 0:
            return None
        ar[p, k] = to_new
        ar[k, p] = from_new
    return Configuration(config.rules + (int(new_rule),), ar)


def updates_armat(configs, new_rule, table, stats=None):
    """Batched :func:`update_armat`; crossed extensions are dropped, order is kept."""
    out = []
    degenerate = not table.is_valid(new_rule)
    for config in configs:
        extended = None if degenerate else update_armat(config, new_rule, table)
        if stats is not None:
            stats.attempted += 1
            if extended is not None:
                stats.feasible += 1
            elif degenerate:
                stats.degenerate += 1
            else:
                stats.crossed += 1
        if extended is not None:
            out.append(extended)
    return out


def cal_arm(rules, table):
    """Full ancestry matrix of a rule list, regardless of feasibility."""
    rules = tuple(int(r) for r in rules)
    k = len(rules)
    ar = np.zeros((k, k), dtype=np.int8)
    for a in range(k):
        for b in range(k):
            if a != b:
                ar[a, b] = table.ancestry(rules[a], rules[b])
    return Configuration(rules, ar)


def nested_combs_fa_steps(embedded, k, table=None, stats=None):
    """Reference crossed-free configuration stream, one point at a time.

    Yields ``(n, configs)`` with the feasible k-configurations completed when
    universe point ``n`` is added. Degenerate rules never appear.
    """
    if table is None:
        table = RuleTable(embedded)
    g = table.g
    stream = CombinationStream(g)
    ncss = [[EMPTY]] + [[] for _ in range(k)]
    for _ in range(len(table.universe)):
        n, _block = stream.add_point()
        start, stop = comb(n, g), comb(n + 1, g)
        if stop > table.size:
            table.fit_block(n)
        emitted = []
        for i in range(start, stop):
            for level in range(min(k, i + 1), 0, -1):
                new = updates_armat(ncss[level - 1], i, table, stats)
                if level == k:
                    emitted.extend(new)
                else:
                    ncss[level] = new + ncss[level]
        yield n, emitted


def nested_combs_fa(embedded, k, table=None, stats=None):
    for _, configs in nested_combs_fa_steps(embedded, k, table, stats):
        yield from configs


def empty_batch():
    return np.zeros((1, 1, 0), dtype=np.int64)


def extend_batch(batch, new_rule, table, stats=None, to_new=None, from_new=None):
    """Vectorized extension of an (m, k+1, k) configuration block by one rule.

    ``to_new``/``from_new`` may hold precomputed ``AR[r, new]`` and
    ``AR[new, r]`` indexed by rank. Returns the (m', k+2, k+1) block of
    feasible extensions in input order.
    """
    m, _, k = batch.shape
    if stats is not None:
        stats.attempted += m
    if not table.is_valid(new_rule):
        if stats is not None:
            stats.degenerate += m
        return np.zeros((0, k + 2, k + 1), dtype=batch.dtype)
    if k == 0:
        out = np.zeros((m, 2, 1), dtype=batch.dtype)
        out[:, 0, 0] = new_rule
        if stats is not None:
            stats.feasible += m
        return out
    rules = batch[:, 0, :]
    if to_new is None:
        t, f = table.ancestry_against(new_rule, rules.ravel())
        t, f = t.reshape(m, k), f.reshape(m, k)
    else:
        t, f = to_new[rules], from_new[rules]
    ok = ~((t == 0) & (f == 0)).any(axis=1)
    kept = int(ok.sum())
    if stats is not None:
        stats.feasible += kept
        stats.crossed += m - kept
    out = np.zeros((kept, k + 2, k + 1), dtype=batch.dtype)
    out[:, : k + 1, :k] = batch[ok]
    out[:, 0, k] = new_rule
    out[:, 1 : k + 1, k] = t[ok]
    out[:, k + 1, :k] = f[ok]
    return out
