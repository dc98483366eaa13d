"""Coreset filtering and selected-hyperplane search.

Both heuristics only ever evaluate rules defined by data points and score
trees on the full dataset, so their losses upper-bound the exact optimum.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .ancestry import Configuration, FilterStats, RuleSet, cal_arm, empty_batch, extend_batch
from .exceptions import InvalidParamsError
from .geometry import Dataset, embedding_dim, veronese_embed
from .solver import BACKENDS, ExactSearch
from .tree import INF, MAX_TEMPLATE_K, BatchSolver, LabelMasks, build_tree, sodt_rec_nested

DEFAULT_CANDIDATE_CAP = 256


@dataclass(frozen=True)
class CoresetParams:
    """Parameters of the coreset heuristic.

    Parameters
    ----------
    block_size : int
        Points per block handed to the exact solver.
    reshuffles : int
        Random partitions per round.
    heap_size : int
        Initial number L of configurations kept per round.
    max_exact : int
        The loop stops once the coreset has at most this many points.
    shrink : float
        Factor in (0, 1] applied to L after each round.
    seed : int
    per_block : int
        Best configurations each block contributes to the heap.
    max_rounds : int
        Safety cap on the number of reduction rounds.
    """

    block_size: int = 20
    reshuffles: int = 1
    heap_size: int = 10
    max_exact: int = 40
    shrink: float = 0.5
    seed: int = 0
    per_block: int = 1
    max_rounds: int = 64

    def validate(self, g):
        if self.block_size < g:
            raise InvalidParamsError(f"block_size must be >= G={g}")
        if self.max_exact < g:
            raise InvalidParamsError(f"max_exact must be >= G={g}")
        if self.heap_size < 1:
            raise InvalidParamsError("heap_size must be >= 1")
        if self.reshuffles < 1:
            raise InvalidParamsError("reshuffles must be >= 1")
        if not 0 < self.shrink <= 1:
            raise InvalidParamsError("shrink must lie in (0, 1]")
        if self.per_block < 1:
            raise InvalidParamsError("per_block must be >= 1")


@dataclass
class ScoredConfig:
    """A configuration scored on the full dataset.

    ``defining`` lists each rule's global defining-point indices, ``loss_full``
    is the best tree loss on all points and ``block`` the sorted point indices
    of the block that produced it.
    """

    defining: tuple
    ar: np.ndarray = field(repr=False)
    loss_full: int = 0
    block: tuple = field(default=(), repr=False)
    index: int = 0
    tree: object = field(default=None, repr=False)

    @property
    def k(self):
        return len(self.defining)


@dataclass
class CoresetResult:
    tree: object
    loss: object
    heap: list
    coreset: np.ndarray
    rounds: int
    history: list = field(default_factory=list)

    @property
    def found(self):
        return self.tree is not None


class _BoundedHeap:
    """Keeps the ``capacity`` smallest (loss, index) entries; the worst sits on top."""

    def __init__(self, capacity):
        self.capacity = capacity
        self._items = []

    def __len__(self):
        return len(self._items)

    def push(self, item):
        key = (-item.loss_full, -item.index)
        if len(self._items) < self.capacity:
            heapq.heappush(self._items, (key, item))
        elif key > self._items[0][0]:
            heapq.heapreplace(self._items, (key, item))

    def sorted(self):
        return [item for _, item in sorted(self._items, key=lambda e: (-e[0][0], -e[0][1]))]


def score_full(defining, embedded, masks):
    """Refit rules from global defining tuples and solve them on every point.

    Returns ``(loss, tree, ar)``; loss is inf when the configuration has no
    proper tree on the full data.
    """
    rules = RuleSet(embedded, defining)
    if not rules.valid.all():
        return INF, None, None
    config = cal_arm(range(rules.size), rules)
    if not config.is_feasible():
        return INF, None, config.ar
    loss, nested = sodt_rec_nested(config, rules, masks, masks.full)
    if loss == INF:
        return INF, None, config.ar
    return int(loss), build_tree(nested, config.rules, rules, masks, masks.full), config.ar


def _block_configs(data, block, k, degree, keep, backend, n_jobs):
    sub = data.subset(block)
    search = ExactSearch(sub, k, degree, backend=backend, n_jobs=n_jobs, keep=keep)
    if sub.n < search.g:
        return []
    sol = search.run()
    out = []
    for _, _, config in sol.top:
        local = search.table.defining[list(config.rules)]
        out.append(tuple(tuple(int(block[p]) for p in row) for row in local))
    return out


def hodt_coreset(data, k, degree=1, params=None, backend="vec", n_jobs=1):
    """Coreset heuristic: shrink the data to configurations that score well globally.

    Each round reshuffles the current coreset, solves every block exactly,
    rescores each block's best configurations on the full data and keeps the
    L best in a bounded heap; the next coreset is the union of the blocks of
    the surviving entries. Once it holds at most ``max_exact`` points an
    exact search on it gives the final candidate.
    """
    if not isinstance(data, Dataset):
        raise TypeError("data must be a Dataset")
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    params = params or CoresetParams()
    g = embedding_dim(data.d, degree)
    params.validate(g)
    embedded = veronese_embed(data.points, degree)
    masks = LabelMasks(data.labels, data.n_classes)
    rng = np.random.default_rng(params.seed)
    coreset = np.arange(data.n)
    size = params.heap_size
    counter = 0
    best = None
    heap = _BoundedHeap(size)
    history = []
    rounds = 0

    def consider(entry):
        nonlocal best
        if best is None or (entry.loss_full, entry.index) < (best.loss_full, best.index):
            best = entry

    def scored(defining, block):
        nonlocal counter
        loss, tree, ar = score_full(defining, embedded, masks)
        entry = ScoredConfig(defining, ar, loss, tuple(int(b) for b in np.sort(block)), counter, tree)
        counter += 1
        return entry

    while coreset.size > params.max_exact and rounds < params.max_rounds:
        rounds += 1
        heap = _BoundedHeap(size)
        keep = params.per_block
        for _ in range(params.reshuffles):
            perm = rng.permutation(coreset)
            n_blocks = -(-perm.size // params.block_size)
            for block in np.array_split(perm, n_blocks):
                for defining in _block_configs(data, block, k, degree, keep, backend, n_jobs):
                    entry = scored(defining, block)
                    if entry.tree is None:
                        continue
                    heap.push(entry)
                    consider(entry)
        survivors = heap.sorted()
        if not survivors:
            break
        merged = np.unique(np.concatenate([np.asarray(e.block, dtype=np.int64) for e in survivors]))
        # drop the worst survivors until the coreset actually shrinks
        while merged.size >= coreset.size and len(survivors) > 1:
            survivors = survivors[:-1]
            merged = np.unique(np.concatenate([np.asarray(e.block, dtype=np.int64) for e in survivors]))
        history.append({"round": rounds, "coreset": int(coreset.size), "heap": len(survivors),
                        "best_loss": int(survivors[0].loss_full)})
        if merged.size >= coreset.size:
            break
        coreset = merged
        size = max(1, int(np.floor(size * params.shrink)))

    final = _BoundedHeap(max(size, 1))
    for defining in _block_configs(data, coreset, k, degree, max(size, 1), backend, n_jobs):
        entry = scored(defining, coreset)
        if entry.tree is None:
            continue
        final.push(entry)
        consider(entry)
    entries = final.sorted() or heap.sorted()
    if best is None:
        return CoresetResult(None, None, entries, coreset, rounds, history)
    return CoresetResult(best.tree, best.loss_full, entries, coreset, rounds, history)


# --------------------------------------------------------------------------
# selected-hyperplane search


@dataclass
class WSHResult:
    """Best tree for every size ``k = 1..K`` over the harvested candidate rules.

    ``trees[k - 1]`` and ``losses[k - 1]`` are None when no configuration of
    size k passed the filter. ``violations`` lists sizes whose best loss is
    larger than that of a smaller size.
    """

    trees: list
    losses: list
    candidates: list
    stats: FilterStats
    evaluated: list
    violations: list

    @property
    def tree(self):
        return self.trees[-1]

    @property
    def loss(self):
        return self.losses[-1]

    @property
    def found(self):
        return self.tree is not None


def distinct_points(config, table):
    """Number of distinct data points defining the rules of ``config``."""
    rows = list(config.rules) if isinstance(config, Configuration) else list(config)
    if not rows:
        return 0
    return int(np.unique(table.defining[rows]).size)


def sodt_wsh(data, k, degree=1, alpha=0, params=None, backend="vec", candidate_cap=DEFAULT_CANDIDATE_CAP,
             n_jobs=1):
    """Selected-hyperplane search.

    Stage one runs :func:`hodt_coreset` with a single rule to harvest
    low-loss candidate rules. Stage two enumerates every crossed-free
    configuration of up to ``k`` candidates; a size-j configuration is solved
    only when its rules are defined by at least ``min(alpha, j * G)`` distinct
    points. Returns a :class:`WSHResult`.
    """
    if not isinstance(data, Dataset):
        raise TypeError("data must be a Dataset")
    if k < 1:
        raise ValueError("k must be >= 1")
    if alpha < 0 or alpha >= data.d * k:
        raise InvalidParamsError(f"alpha must satisfy 0 <= alpha < D*K = {data.d * k}")
    params = params or CoresetParams()
    g = embedding_dim(data.d, degree)
    stage1 = hodt_coreset(data, 1, degree, params, backend, n_jobs)
    seen = {}
    for entry in sorted(stage1.heap, key=lambda e: (e.loss_full, e.index)):
        key = entry.defining[0]
        if key not in seen and len(seen) < candidate_cap:
            seen[key] = entry.loss_full
    candidates = list(seen)
    embedded = veronese_embed(data.points, degree)
    masks = LabelMasks(data.labels, data.n_classes)
    stats = FilterStats()
    trees, losses, evaluated = [None] * k, [None] * k, [0] * k
    if not candidates:
        return WSHResult(trees, losses, candidates, stats, evaluated, [])
    rules = RuleSet(embedded, candidates)
    solver = BatchSolver(rules, masks)
    levels = [empty_batch()] + [np.zeros((0, j + 1, j), dtype=np.int64) for j in range(1, k + 1)]
    best = [None] * k
    for i in range(rules.size):
        for j in range(min(k, i + 1), 0, -1):
            ext = extend_batch(levels[j - 1], i, rules, stats)
            if not ext.shape[0]:
                continue
            if j < k:
                levels[j] = np.concatenate([levels[j], ext])
            need = min(alpha, j * g)
            if need:
                keep = np.array([np.unique(rules.defining[row]).size >= need for row in ext[:, 0, :]])
                ext = ext[keep]
            if not ext.shape[0]:
                continue
            evaluated[j - 1] += ext.shape[0]
            _fold(best, j, ext, rules, masks, solver, backend)
    violations = []
    for j in range(k):
        if best[j] is None:
            continue
        loss, ncr, choice = best[j]
        config = Configuration.from_ncr(ncr)
        if choice is None or isinstance(choice, tuple):
            tree = build_tree(choice, config.rules, rules, masks, masks.full)
        else:
            tree = solver.tree(ncr, int(choice))
        trees[j], losses[j] = tree, int(loss)
        prev = [l for l in losses[:j] if l is not None]
        if prev and losses[j] > min(prev):
            violations.append(j + 1)
    return WSHResult(trees, losses, candidates, stats, evaluated, violations)


def _fold(best, j, ext, rules, masks, solver, backend):
    if backend == "vec" and j <= MAX_TEMPLATE_K:
        loss, arg = solver.solve(ext)
        loss = np.where(arg < 0, np.iinfo(np.int64).max, loss)
        t = int(np.argmin(loss))
        if arg[t] >= 0 and (best[j - 1] is None or loss[t] < best[j - 1][0]):
            best[j - 1] = (int(loss[t]), ext[t].copy(), int(arg[t]))
        return
    for t in range(ext.shape[0]):
        config = Configuration.from_ncr(ext[t])
        loss, nested = sodt_rec_nested(config, rules, masks, masks.full)
        if loss != INF and (best[j - 1] is None or loss < best[j - 1][0]):
            best[j - 1] = (int(loss), ext[t].copy(), nested)
