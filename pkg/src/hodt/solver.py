"""Exact size-constrained hypersurface tree search.

:func:`hodt` processes the data one point at a time. Each point adds the
block of rules whose largest defining point it is; every new rule extends
the stored feasible configurations of sizes K-1..0 (highest first), the
completed K-configurations are solved in batches and folded into a running
minimum, and then discarded. :func:`odt_size_naive` is the unfused
composition (all K-combinations, post-hoc ancestry matrices, feasibility
filter, per-configuration DP) used as a reference.
"""

from __future__ import annotations

import heapq
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .ancestry import (
    Configuration,
    FilterStats,
    RuleTable,
    cal_arm,
    empty_batch,
    extend_batch,
)
from .combinatorics import CombinationStream
from .geometry import Dataset, veronese_embed
from .tree import (
    INF,
    MAX_TEMPLATE_K,
    BatchSolver,
    LabelMasks,
    build_tree,
    gen_nested,
    sodt_rec_nested,
    _nested_loss,
)

BACKENDS = ("vec", "rec")
DEFAULT_BATCH_SIZE = 4096


@dataclass
class SearchStats:
    n_points: int = 0
    rules_fitted: int = 0
    rules_degenerate: int = 0
    extensions_attempted: int = 0
    feasible: int = 0
    crossed_rejected: int = 0
    degenerate_rejected: int = 0
    configs_evaluated: int = 0
    configs_without_tree: int = 0
    peak_pending: int = 0

    def absorb(self, fs):
        self.extensions_attempted += fs.attempted
        self.feasible += fs.feasible
        self.crossed_rejected += fs.crossed
        self.degenerate_rejected += fs.degenerate

    def to_dict(self):
        return asdict(self)


@dataclass
class Solution:
    """Result of a search. ``tree`` is None when no feasible configuration exists."""

    tree: object
    loss: object
    config: object
    stats: SearchStats
    k: int
    degree: int
    backend: str = "vec"
    table: object = field(default=None, repr=False)
    top: list = field(default_factory=list, repr=False)

    @property
    def found(self):
        return self.tree is not None


class _Growable:
    def __init__(self, k, dtype):
        self.buf = np.zeros((16, k + 1, k), dtype=dtype)
        self.size = 0

    def append(self, block):
        m = block.shape[0]
        if self.size + m > self.buf.shape[0]:
            cap = max(2 * self.buf.shape[0], self.size + m)
            new = np.zeros((cap,) + self.buf.shape[1:], dtype=self.buf.dtype)
            new[: self.size] = self.buf[: self.size]
            self.buf = new
        self.buf[self.size : self.size + m] = block
        self.size += m

    def view(self):
        return self.buf[: self.size]


def resolve_threads(n_jobs):
    if n_jobs is None:
        n_jobs = int(os.environ.get("HODT_THREADS", "1") or 1)
    return max(1, int(n_jobs))


class ExactSearch:
    """Streaming exact search; drive it with :meth:`run` or point by point with :meth:`step`.

    Parameters
    ----------
    data : Dataset
    k : int
        Number of splitting rules.
    degree : int
        Polynomial degree of the hypersurfaces.
    backend : {"vec", "rec"}
        "vec" scores every proper tree of a block of configurations at once;
        "rec" runs the recursive DP per configuration.
    n_jobs : int
        Worker threads for evaluating configuration batches.
    batch_size : int
        Configurations per evaluation batch.
    keep : int
        Number of best configurations retained in :attr:`Solution.top`.
    """

    def __init__(self, data, k, degree=1, backend="vec", n_jobs=1, batch_size=DEFAULT_BATCH_SIZE,
                 keep=1, max_dim=None):
        if k < 1:
            raise ValueError("k must be >= 1")
        if backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        self.data = data
        self.k = int(k)
        self.degree = int(degree)
        self.backend = backend
        self.n_jobs = resolve_threads(n_jobs)
        self.batch_size = int(batch_size)
        self.keep = int(keep)
        kwargs = {} if max_dim is None else {"max_dim": max_dim}
        self.embedded = veronese_embed(data.points, degree, **kwargs)
        self.g = self.embedded.g
        self.table = RuleTable(self.embedded)
        self.masks = LabelMasks(data.labels, data.n_classes)
        self.stats = SearchStats(n_points=data.n)
        self.dtype = np.int32 if self.table.n_total < 2**31 else np.int64
        self.levels = [None] + [_Growable(j, self.dtype) for j in range(1, self.k)]
        self._empty = empty_batch().astype(self.dtype)
        self.pending = []
        self._pending_size = 0
        self._next_index = 0
        self.best = None  # (loss, index, ncr, choice)
        self._top = []
        self._stream = CombinationStream(self.g)
        self._vectorized = backend == "vec" and self.k <= MAX_TEMPLATE_K
        self._batch = BatchSolver(self.table, self.masks) if self._vectorized else None

    def level(self, j):
        return self._empty if j == 0 else self.levels[j].view()

    def step(self):
        """Process the next data point; returns its index."""
        n, block = self._stream.add_point()
        start, stop = comb(n, self.g), comb(n + 1, self.g)
        if stop > start:
            self.table.fit_block(n)
            ok = self.table.valid[start:stop]
            self.stats.rules_fitted += stop - start
            self.stats.rules_degenerate += int((~ok).sum())
        fs = FilterStats()
        for i in range(start, stop):
            t = f = None
            if self.k > 1 and i > 0 and self.table.valid[i]:
                t, f = self.table.ancestry_against(i, np.arange(i))
            for j in range(min(self.k, i + 1), 0, -1):
                ext = extend_batch(self.level(j - 1), i, self.table, fs, t, f)
                if not ext.shape[0]:
                    continue
                if j == self.k:
                    self._emit(ext)
                else:
                    self.levels[j].append(ext)
        self.stats.absorb(fs)
        self._flush()
        return n

    def run(self):
        for _ in range(self.data.n):
            self.step()
        return self.solution()

    def _emit(self, ext):
        self.pending.append(ext)
        self._pending_size += ext.shape[0]
        self.stats.peak_pending = max(self.stats.peak_pending, self._pending_size)
        # threshold is independent of n_jobs so stats do not depend on the thread count
        if self._pending_size >= 4 * self.batch_size:
            self._flush()

    def _flush(self):
        if not self.pending:
            return
        block = np.concatenate(self.pending) if len(self.pending) > 1 else self.pending[0]
        self.pending = []
        self._pending_size = 0
        first = self._next_index
        self._next_index += block.shape[0]
        chunks = [block[s : s + self.batch_size] for s in range(0, block.shape[0], self.batch_size)]
        if self.n_jobs > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                results = list(pool.map(self._evaluate, chunks))
        else:
            results = [self._evaluate(c) for c in chunks]
        offset = first
        for chunk, (loss, choice) in zip(chunks, results):
            self._reduce(chunk, loss, choice, offset)
            offset += chunk.shape[0]

    def _evaluate(self, chunk):
        if self._vectorized:
            loss, arg = self._batch.solve(chunk.astype(np.int64, copy=False))
            return loss.astype(float), list(arg)
        losses = np.empty(chunk.shape[0])
        choices = []
        full = self.masks.full
        for idx in range(chunk.shape[0]):
            config = Configuration.from_ncr(chunk[idx])
            if self.backend == "rec":
                loss, nested = sodt_rec_nested(config, self.table, self.masks, full)
            else:
                loss, nested = _min_gen(config, self.table, self.masks, full)
            losses[idx] = loss
            choices.append(nested)
        return losses, choices

    def _reduce(self, chunk, loss, choice, offset):
        m = chunk.shape[0]
        self.stats.configs_evaluated += m
        self.stats.configs_without_tree += int(np.count_nonzero(~np.isfinite(loss) | (loss >= 2**62)))
        loss = np.where(loss >= 2**62, INF, loss)
        j = int(np.argmin(loss))
        if np.isfinite(loss[j]) and (self.best is None or loss[j] < self.best[0]):
            self.best = (float(loss[j]), offset + j, chunk[j].copy(), choice[j])
        if self.keep > 1:
            order = np.lexsort((np.arange(m), loss))[: self.keep]
            for j in order:
                if not np.isfinite(loss[j]):
                    break
                item = (-float(loss[j]), -(offset + int(j)), chunk[j].tobytes(), chunk[j].shape)
                if len(self._top) < self.keep:
                    heapq.heappush(self._top, item)
                elif item > self._top[0]:
                    heapq.heapreplace(self._top, item)

    def solution(self):
        self._flush()
        top = []
        for negloss, negidx, raw, shape in sorted(self._top, reverse=True):
            ncr = np.frombuffer(raw, dtype=self.dtype)
            top.append((int(-negloss), -negidx, Configuration.from_ncr(ncr.reshape(shape))))
        if self.best is None:
            return Solution(None, None, None, self.stats, self.k, self.degree, self.backend, self.table, top)
        loss, _, ncr, choice = self.best
        config = Configuration.from_ncr(ncr)
        if self._vectorized:
            tree = self._batch.tree(ncr.astype(np.int64), int(choice))
        else:
            tree = build_tree(choice, config.rules, self.table, self.masks, self.masks.full)
        if self.keep <= 1:
            top = [(int(loss), self.best[1], config)]
        return Solution(tree, int(loss), config, self.stats, self.k, self.degree, self.backend, self.table, top)


def _min_gen(config, table, masks, members):
    bits = [table.bits(r) for r in config.rules]
    best, best_loss = None, INF
    for nested in gen_nested(config):
        loss = _nested_loss(nested, bits, masks, members)
        if loss < best_loss:
            best, best_loss = nested, loss
    return best_loss, best


def hodt(data, k, degree=1, backend="vec", n_jobs=1, batch_size=DEFAULT_BATCH_SIZE, keep=1, max_dim=None):
    """Globally optimal size-``k`` hypersurface tree of degree ``degree`` for ``data``.

    Returns a :class:`Solution`; ``solution.found`` is False when no feasible
    configuration exists.
    """
    if not isinstance(data, Dataset):
        raise TypeError("data must be a Dataset")
    search = ExactSearch(data, k, degree, backend, n_jobs, batch_size, keep, max_dim)
    if data.n < search.g:
        return search.solution()
    return search.run()


def odt_size_naive(data, k, degree=1):
    """Unfused reference: every K-combination, post-hoc matrices, filter, DP, minimum."""
    embedded = veronese_embed(data.points, degree)
    table = RuleTable(embedded).fit_all()
    masks = LabelMasks(data.labels, data.n_classes)
    stats = SearchStats(n_points=data.n, rules_fitted=table.size,
                        rules_degenerate=int((~table.valid[: table.size]).sum()))
    best = None
    for rules in combinations(range(table.size), k):
        stats.extensions_attempted += 1
        if not all(table.valid[r] for r in rules):
            stats.degenerate_rejected += 1
            continue
        config = cal_arm(rules, table)
        if not config.is_feasible():
            stats.crossed_rejected += 1
            continue
        stats.feasible += 1
        stats.configs_evaluated += 1
        loss, nested = sodt_rec_nested(config, table, masks, masks.full)
        if loss == INF:
            stats.configs_without_tree += 1
            continue
        if best is None or loss < best[0]:
            best = (loss, config, nested)
    if best is None:
        return Solution(None, None, None, stats, k, degree, "rec", table)
    loss, config, nested = best
    tree = build_tree(nested, config.rules, table, masks, masks.full)
    return Solution(tree, int(loss), config, stats, k, degree, "rec", table, [(int(loss), 0, config)])
