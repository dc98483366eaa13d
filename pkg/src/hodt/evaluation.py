"""Tree-quality metrics, the feasible-configuration census and experiment drivers."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .ancestry import RuleTable
from .exceptions import InvalidParamsError
from .geometry import Dataset, augment, veronese_embed

# --------------------------------------------------------------------------
# metrics


@dataclass
class TreeMetrics:
    train_acc: float
    test_acc: float
    tree_size: int
    max_depth: float
    avg_depth: float
    expected_depth: float

    def to_dict(self):
        return asdict(self)


def leaf_depths(tree):
    """Depth of each leaf, counted as its number of ancestors."""
    depth = tree.depths()
    return {leaf: depth[leaf] for leaf in tree.leaves()}


def accuracy(tree, data, degree=1):
    if data.n == 0:
        return float("nan")
    pred = tree.predict(augment(veronese_embed(data.points, degree).points))
    return float(np.mean(pred == data.labels))


def metrics(tree, train, test, degree=1):
    """The six quality measures of a tree.

    ``expected_depth`` weights each leaf's depth by the fraction of test
    points routed to it; ``avg_depth`` is the unweighted mean over leaves.
    A single leaf has size 0 and every depth 0.
    """
    depths = leaf_depths(tree)
    values = np.array(list(depths.values()), dtype=float)
    if test.n:
        reached = tree.apply(augment(veronese_embed(test.points, degree).points))
        weights = np.array([np.count_nonzero(reached == leaf) for leaf in depths], dtype=float) / test.n
        expected = float(weights @ values)
    else:
        expected = float("nan")
    return TreeMetrics(
        train_acc=accuracy(tree, train, degree),
        test_acc=accuracy(tree, test, degree),
        tree_size=tree.size,
        max_depth=float(values.max()),
        avg_depth=float(values.mean()),
        expected_depth=expected,
    )


# --------------------------------------------------------------------------
# census


@dataclass
class CensusCounts:
    """Feasible configuration counts per size k (index 0 is k=1)."""

    feasible: list
    attempted: list
    crossed: list
    degenerate: list
    n_rules: int
    n_valid: int

    def bound(self, k):
        return comb(self.n_rules, k)


def _compat_words(table, ranks):
    """Pairwise non-crossed table over ``ranks`` as (R, W) uint64 bitmasks of later rules."""
    r = len(ranks)
    w = max(1, -(-r // 64))
    valid = table.valid[ranks]
    ok = np.zeros((r, r), dtype=bool)
    idx = np.flatnonzero(valid)
    if idx.size:
        for a in idx:
            t, f = table.ancestry_against(int(ranks[a]), ranks[idx])
            ok[a, idx] = ~((t == 0) & (f == 0))
    ok &= valid[:, None] & valid[None, :]
    ok &= np.triu(np.ones((r, r), dtype=bool), 1)
    padded = np.zeros((r, w * 64), dtype=bool)
    padded[:, :r] = ok
    words = np.packbits(padded, axis=1, bitorder="little").view(np.uint64).reshape(r, w)
    return words, valid


def census_counts(table, k, chunk=1 << 18):
    """Count crossed-free configurations of every size up to ``k`` over a fitted table.

    The counts equal those of the streaming filtered enumeration; only the
    per-configuration bitmask of compatible later rules is stored, and the
    top level is counted without being materialized.
    """
    ranks = np.arange(table.size)
    r = ranks.size
    words, valid = _compat_words(table, ranks)
    invalid_after = np.array([int(np.count_nonzero(~valid[i + 1 :])) for i in range(r)], dtype=np.int64)
    feasible = [0] * k
    attempted = [0] * k
    degenerate = [0] * k
    attempted[0] = r
    feasible[0] = int(valid.sum())
    degenerate[0] = r - feasible[0]

    def expand(last, masks, level):
        # masks[i] holds the rules > last[i] compatible with every member
        if level == k:
            return
        attempted[level] += int((r - 1 - last).sum())
        degenerate[level] += int(invalid_after[last].sum())
        count = int(np.bitwise_count(masks).sum())
        feasible[level] += count
        if level + 1 == k or count == 0:
            return
        buf_last, buf_masks, size = [], [], 0
        for j in range(r):
            sel = np.flatnonzero((masks[:, j // 64] >> np.uint64(j % 64)) & np.uint64(1))
            if not sel.size:
                continue
            buf_last.append(np.full(sel.size, j, dtype=np.int64))
            buf_masks.append(masks[sel] & words[j])
            size += sel.size
            if size >= chunk:
                expand(np.concatenate(buf_last), np.concatenate(buf_masks), level + 1)
                buf_last, buf_masks, size = [], [], 0
        if size:
            expand(np.concatenate(buf_last), np.concatenate(buf_masks), level + 1)

    if k > 1:
        idx = np.flatnonzero(valid)
        expand(idx, words[idx], 1)
    crossed = [a - f - d for a, f, d in zip(attempted, feasible, degenerate)]
    return CensusCounts(feasible, attempted, crossed, degenerate, r, int(valid.sum()))


def gaussian_dataset(n, dim, rng):
    points = rng.normal(size=(n, dim))
    return Dataset(points, np.zeros(n, dtype=np.int64), 1)


@dataclass
class CensusRow:
    k: int
    mean: float
    std: float
    bound: int
    ratio: float
    counts: list = field(default_factory=list)


def count_feasible(k, degree=1, blocksize=10, dim=2, n=2000, replicates=5, seed=0, data=None):
    """Feasible-configuration census over ``replicates`` Gaussian datasets.

    Rules are defined by a random ``blocksize`` subsample while their sides
    are evaluated on all ``n`` points. Returns one :class:`CensusRow` per
    ``k = 1..K`` with the mean and standard deviation of the feasible count
    and the bound ``binomial(binomial(blocksize, G), k)``.
    """
    if blocksize < 1 or k < 1:
        raise InvalidParamsError("blocksize and k must be >= 1")
    rng = np.random.default_rng(seed)
    per_k = [[] for _ in range(k)]
    n_rules = None
    for _ in range(replicates):
        sample = data if data is not None else gaussian_dataset(n, dim, rng)
        if blocksize > sample.n:
            raise InvalidParamsError("blocksize exceeds the dataset size")
        embedded = veronese_embed(sample.points, degree)
        universe = np.sort(rng.choice(sample.n, size=blocksize, replace=False))
        table = RuleTable(embedded, universe=universe).fit_all()
        counts = census_counts(table, k)
        n_rules = counts.n_rules
        for j in range(k):
            per_k[j].append(counts.feasible[j])
    rows = []
    for j in range(k):
        vals = np.array(per_k[j], dtype=float)
        bound = comb(n_rules, j + 1)
        mean = float(vals.mean())
        rows.append(CensusRow(j + 1, mean, float(vals.std()), bound, bound / mean if mean else float("inf"),
                              [int(v) for v in per_k[j]]))
    return rows


# --------------------------------------------------------------------------
# experiments

PROTOCOLS = ("tree-size", "data-size", "dimension", "label-noise", "feature-noise")
DEFAULT_LEVELS = {
    "tree-size": [1, 2, 3],
    "data-size": [100, 200, 400, 800, 1600],
    "dimension": [2, 3, 4],
    "label-noise": [0, 5, 10, 20],
    "feature-noise": [0.0, 0.01, 0.05, 0.1],
}


def _settings(protocol, level, base):
    s = dict(base)
    key = {"tree-size": "k", "data-size": "n", "dimension": "dim", "label-noise": "label_pct",
           "feature-noise": "feature_sigma"}[protocol]
    s[key] = level
    return s


def _baseline_predictions(pattern, seed, level, n):
    path = Path(str(pattern).format(seed=seed, level=level))
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and not rows[0][0].lstrip("-").isdigit():
        rows = rows[1:]
    pred = np.array([int(r[0]) for r in rows], dtype=np.int64)
    if pred.shape[0] != n:
        raise InvalidParamsError(f"{path}: expected {n} predictions, found {pred.shape[0]}")
    return pred


def experiment_driver(protocol, levels=None, seeds=50, method="coreset", base=None, params=None, baselines=None,
                      n_jobs=1, progress=None):
    """Run a variation protocol and return per-seed records and per-level summaries.

    Each record holds the metrics of the learned tree and of the ground
    truth on one seed. ``baselines`` maps a method name to a path pattern
    (``{seed}`` and ``{level}`` placeholders) of CSV files with one predicted
    test label per row; their accuracies are reported alongside.
    """
    from .heuristics import CoresetParams, hodt_coreset
    from .solver import hodt
    from .synthetic import NoiseSpec, make_experiment

    if protocol not in PROTOCOLS:
        raise InvalidParamsError(f"protocol must be one of {PROTOCOLS}")
    base = {"k": 2, "dim": 2, "n": 100, "label_pct": 0, "feature_sigma": 0.0, **(base or {})}
    levels = DEFAULT_LEVELS[protocol] if levels is None else list(levels)
    records = []
    for level in levels:
        s = _settings(protocol, level, base)
        for seed in range(seeds):
            truth, train, test = make_experiment(s["k"], s["dim"], s["n"], seed,
                                                 NoiseSpec(s["label_pct"], s["feature_sigma"]))
            if method == "exact":
                tree = hodt(train, s["k"], n_jobs=n_jobs).tree
            elif method == "coreset":
                p = params or CoresetParams(seed=seed)
                tree = hodt_coreset(train, s["k"], params=p, n_jobs=n_jobs).tree
            else:
                raise InvalidParamsError("method must be 'exact' or 'coreset'")
            rec = {"level": level, "seed": seed, "method": "HODT", **metrics(tree, train, test).to_dict()}
            records.append(rec)
            gt = {"level": level, "seed": seed, "method": "Ground Truth",
                  **metrics(truth.tree, train, test).to_dict()}
            records.append(gt)
            for name, pattern in (baselines or {}).items():
                pred = _baseline_predictions(pattern, seed, level, test.n)
                records.append({"level": level, "seed": seed, "method": name,
                                "test_acc": float(np.mean(pred == test.labels))})
            if progress:
                progress(rec)
    return records, summarize(records)


SUMMARY_FIELDS = ("train_acc", "test_acc", "tree_size", "max_depth", "avg_depth", "expected_depth")


def summarize(records):
    """Mean and standard deviation per (level, method), accuracies in percent."""
    groups = {}
    for rec in records:
        groups.setdefault((rec["level"], rec["method"]), []).append(rec)
    rows = []
    for (level, method), recs in groups.items():
        row = {"level": level, "method": method, "n_seeds": len(recs)}
        for name in SUMMARY_FIELDS:
            vals = np.array([r[name] for r in recs if name in r], dtype=float)
            if not vals.size:
                continue
            scale = 100.0 if name.endswith("acc") else 1.0
            row[f"{name}_mean"] = float(vals.mean() * scale)
            row[f"{name}_std"] = float(vals.std() * scale)
        rows.append(row)
    return rows


def format_summary(rows):
    """``mean (std)`` table as text."""
    lines = []
    header = ["level", "method"] + list(SUMMARY_FIELDS)
    lines.append("\t".join(header))
    for row in rows:
        cells = [str(row["level"]), row["method"]]
        for name in SUMMARY_FIELDS:
            if f"{name}_mean" in row:
                cells.append(f"{row[f'{name}_mean']:.2f} ({row[f'{name}_std']:.2f})")
            else:
                cells.append("-")
        lines.append("\t".join(cells))
    return "\n".join(lines)
