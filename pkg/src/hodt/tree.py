"""Decision trees over a fixed rule configuration.

Given a feasible configuration, the solvers here find the minimum 0-1 loss
proper tree that uses every rule exactly once:

* :func:`sodt_rec` is the recursive dynamic program (root choice over
  :func:`splits`, minimum taken at every level);
* :func:`gen_dts_vec` enumerates every proper tree by inserting rules one at
  a time and :func:`sodt_vec` takes the minimum at the end;
* :class:`BatchSolver` evaluates the same tree set for a whole block of
  configurations at once on packed bitsets.

Point sets are Python integers used as bitsets (bit ``p`` is point ``p``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .ancestry import pack_bits
from .exceptions import CorruptModelError, InfeasibleConfigurationError
from .geometry import augment, positive_side

INF = float("inf")


class LabelMasks:
    """Per-class bitsets of a label vector."""

    def __init__(self, labels, n_classes=None):
        labels = np.asarray(labels, dtype=np.int64)
        self.labels = labels
        self.n = labels.shape[0]
        self.n_classes = int(n_classes if n_classes is not None else (labels.max() + 1 if self.n else 1))
        self.masks = [_to_int(labels == c) for c in range(self.n_classes)]
        self.full = (1 << self.n) - 1
        self.packed = pack_bits(np.stack([labels == c for c in range(self.n_classes)]))

    @classmethod
    def coerce(cls, labels):
        return labels if isinstance(labels, cls) else cls(labels)

    def leaf(self, members):
        """``(label, loss)`` of a leaf reached by ``members``; ties go to the smallest id."""
        best, best_count, total = 0, -1, 0
        for c, mask in enumerate(self.masks):
            count = (members & mask).bit_count()
            total += count
            if count > best_count:
                best, best_count = c, count
        if total == 0:
            return 0, 0
        return best, total - best_count


def _to_int(mask):
    return int.from_bytes(np.packbits(np.asarray(mask, bool), bitorder="little").tobytes(), "little")


def bits_to_mask(bits, n):
    raw = np.frombuffer(bits.to_bytes(-(-n // 8) or 1, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n].astype(bool)


def majority_label(members, labels):
    """Majority label of a point bitset and the number of points it misclassifies."""
    return LabelMasks.coerce(labels).leaf(members)


# --------------------------------------------------------------------------
# Tree datatype


@dataclass
class DecisionTree:
    """Array-backed binary tree in preorder.

    Internal nodes carry a rule rank with ``pos``/``neg`` child indices; leaves
    have ``rule == -1`` and a ``label``. ``hyperplanes`` maps every referenced
    rank to its :class:`Hyperplane`. ``members`` holds the training-point
    bitset reaching each leaf (None for internal nodes or loaded models).
    """

    rule: list
    pos: list
    neg: list
    label: list
    n_samples: list
    hyperplanes: dict
    members: list = field(default=None, repr=False)

    @classmethod
    def leaf_only(cls, label, n_samples=0):
        return cls([-1], [-1], [-1], [int(label)], [int(n_samples)], {}, [None])

    @property
    def n_nodes(self):
        return len(self.rule)

    @property
    def size(self):
        """Number of branch (internal) nodes."""
        return sum(1 for r in self.rule if r >= 0)

    def is_leaf(self, node):
        return self.rule[node] < 0

    def leaves(self):
        return [i for i, r in enumerate(self.rule) if r < 0]

    def depths(self):
        """Depth of every node; the root is at depth 0 and a leaf's depth counts its ancestors."""
        depth = [0] * self.n_nodes
        for i in range(self.n_nodes):
            if self.rule[i] >= 0:
                depth[self.pos[i]] = depth[i] + 1
                depth[self.neg[i]] = depth[i] + 1
        return depth

    def preorder_rules(self):
        return [r for r in self.rule if r >= 0]

    def apply(self, points_bar):
        """Leaf index reached by each (augmented, embedded) point."""
        points_bar = np.asarray(points_bar, dtype=float)
        out = np.empty(points_bar.shape[0], dtype=np.int64)
        stack = [(0, np.arange(points_bar.shape[0]))]
        while stack:
            node, idx = stack.pop()
            rank = self.rule[node]
            if rank < 0:
                out[idx] = node
                continue
            h = self.hyperplanes.get(rank)
            if h is None:
                raise CorruptModelError(f"tree references unknown rule {rank}")
            side = positive_side(h.normal, points_bar[idx])
            stack.append((self.neg[node], idx[~side]))
            stack.append((self.pos[node], idx[side]))
        return out

    def predict(self, points_bar):
        label = np.asarray(self.label, dtype=np.int64)
        return label[self.apply(points_bar)]


def predict(tree, embedded_points):
    """Predict labels for embedded (not augmented) points."""
    return tree.predict(augment(embedded_points))


def evaluate(tree, embedded_points, labels):
    """0-1 loss of ``tree`` on embedded points."""
    return int(np.count_nonzero(predict(tree, embedded_points) != np.asarray(labels)))


def build_tree(nested, rules, table, masks, members):
    """Materialize a nested ``(position, pos_sub, neg_sub)`` structure into a DecisionTree.

    ``nested`` uses configuration positions; None marks a leaf.
    """
    out = DecisionTree([], [], [], [], [], {}, [])

    def walk(sub, mem):
        idx = out.n_nodes
        out.rule.append(-1)
        out.pos.append(-1)
        out.neg.append(-1)
        out.label.append(-1)
        out.n_samples.append(mem.bit_count())
        out.members.append(None)
        if sub is None:
            out.label[idx] = masks.leaf(mem)[0]
            out.members[idx] = mem
            return idx
        row = int(rules[sub[0]])
        h = table.hyperplane(row)
        out.rule[idx] = h.rank
        out.hyperplanes[h.rank] = h
        b = table.bits(row)
        out.pos[idx] = walk(sub[1], mem & b)
        out.neg[idx] = walk(sub[2], mem & ~b)
        return idx

    walk(nested, members)
    return out


# --------------------------------------------------------------------------
# splits and the recursive solver


def _valid_roots(ar, positions):
    out = []
    for r in positions:
        row = ar[r]
        if all(row[j] != 0 for j in positions if j != r):
            pos = tuple(j for j in positions if j != r and row[j] > 0)
            neg = tuple(j for j in positions if j != r and row[j] < 0)
            out.append((pos, r, neg))
    return out


def splits(config):
    """Root choices of a configuration as ``(pos_config, root_rank, neg_config)``.

    A rule is a valid root when every other rule lies entirely on one of its
    sides. Returns an empty list when no rule qualifies, which can happen for
    cyclic (pinwheel) arrangements even without a crossed pair.
    """
    out = []
    for pos, r, neg in _valid_roots(config.ar.tolist(), tuple(range(config.k))):
        out.append((config.sub(pos), config.rules[r], config.sub(neg)))
    return out


def _check_feasible(config):
    if not config.is_feasible():
        raise InfeasibleConfigurationError(f"configuration {config.rules} contains a crossed pair")


def sodt_rec_nested(config, table, masks, members):
    """DP over root choices; returns ``(loss, nested)`` or ``(inf, None)``."""
    ar = config.ar.tolist()
    bits = [table.bits(r) for r in config.rules]
    memo = {}

    def solve(positions, mem):
        key = (positions, mem)
        hit = memo.get(key)
        if hit is not None:
            return hit
        if not positions:
            res = (masks.leaf(mem)[1], None)
        elif len(positions) == 1:
            r = positions[0]
            res = (masks.leaf(mem & bits[r])[1] + masks.leaf(mem & ~bits[r])[1], (r, None, None))
        else:
            res = (INF, None)
            for pos, r, neg in _valid_roots(ar, positions):
                lp, tp = solve(pos, mem & bits[r])
                if lp >= res[0]:
                    continue
                ln, tn = solve(neg, mem & ~bits[r])
                if lp + ln < res[0]:
                    res = (lp + ln, (r, tp, tn))
        memo[key] = res
        return res

    loss, nested = solve(tuple(range(config.k)), members)
    if config.k and nested is None:
        return INF, None
    return loss, nested


def sodt_rec(config, table, labels, members=None):
    """Minimum 0-1 loss proper tree over all rules of ``config``.

    Returns ``(tree, loss)``; ``(None, inf)`` if the configuration admits no
    proper tree.
    """
    _check_feasible(config)
    masks = LabelMasks.coerce(labels)
    if members is None:
        members = masks.full
    loss, nested = sodt_rec_nested(config, table, masks, members)
    if loss == INF:
        return None, INF
    return build_tree(nested, config.rules, table, masks, members), int(loss)


# --------------------------------------------------------------------------
# enumeration solver


def _insert(tree, p, ar):
    if tree is None:
        return (p, None, None)
    a = tree[0]
    s = ar[a][p]
    if s == 0:
        return None
    if s > 0:
        sub = _insert(tree[1], p, ar)
        return None if sub is None else (a, sub, tree[2])
    sub = _insert(tree[2], p, ar)
    return None if sub is None else (a, tree[1], sub)


def gen_nested(config):
    """Every proper tree of ``config``, one per successful rule-insertion order.

    A rule is inserted at the unique leaf reached by following, from the
    root, the side of each ancestor its defining points lie on; the order
    fails if that walk meets an ancestor with no ancestry relation to it.
    Trees may repeat (different orders can build the same tree).
    """
    ar = config.ar.tolist()

    def rec(partial, remaining):
        if not remaining:
            yield partial
            return
        for idx, p in enumerate(remaining):
            new = _insert(partial, p, ar)
            if new is not None:
                yield from rec(new, remaining[:idx] + remaining[idx + 1 :])

    yield from rec(None, tuple(range(config.k)))


def _nested_loss(nested, bits, masks, mem):
    if nested is None:
        return masks.leaf(mem)[1]
    b = bits[nested[0]]
    return _nested_loss(nested[1], bits, masks, mem & b) + _nested_loss(nested[2], bits, masks, mem & ~b)


def gen_dts_vec(config, table, labels, members=None):
    """All proper trees with their losses, in generation order."""
    _check_feasible(config)
    masks = LabelMasks.coerce(labels)
    if members is None:
        members = masks.full
    if config.k == 0:
        return [(build_tree(None, (), table, masks, members), masks.leaf(members)[1])]
    bits = [table.bits(r) for r in config.rules]
    out = []
    for nested in gen_nested(config):
        loss = _nested_loss(nested, bits, masks, members)
        out.append((build_tree(nested, config.rules, table, masks, members), loss))
    return out


def sodt_vec(config, table, labels, members=None):
    """Minimum of :func:`gen_dts_vec`, first minimum wins."""
    _check_feasible(config)
    masks = LabelMasks.coerce(labels)
    if members is None:
        members = masks.full
    if config.k == 0:
        return build_tree(None, (), table, masks, members), masks.leaf(members)[1]
    bits = [table.bits(r) for r in config.rules]
    best, best_loss = None, INF
    for nested in gen_nested(config):
        loss = _nested_loss(nested, bits, masks, members)
        if loss < best_loss:
            best, best_loss = nested, loss
    if best is None:
        return None, INF
    return build_tree(best, config.rules, table, masks, members), int(best_loss)


# --------------------------------------------------------------------------
# batched evaluation


@lru_cache(maxsize=None)
def tree_templates(k):
    """All labelled proper-tree shapes over positions ``0..k-1``.

    Each template is ``(nested, constraints, leaf_paths)`` where constraints
    are ``(ancestor, descendant, sign)`` triples required of the ancestry
    matrix and each leaf path is a sorted tuple of ``(position, sign)``.
    """

    def shapes(items):
        if not items:
            return [None]
        out = []
        for r in items:
            rest = [x for x in items if x != r]
            for assign in product((1, -1), repeat=len(rest)):
                pos = tuple(x for x, s in zip(rest, assign) if s > 0)
                neg = tuple(x for x, s in zip(rest, assign) if s < 0)
                for left in shapes(pos):
                    for right in shapes(neg):
                        out.append((r, left, right))
        return out

    def describe(nested, path, cons, leaves):
        if nested is None:
            leaves.append(tuple(sorted(path)))
            return
        r = nested[0]
        for a, s in path:
            cons.append((a, r, s))
        describe(nested[1], path + [(r, 1)], cons, leaves)
        describe(nested[2], path + [(r, -1)], cons, leaves)

    out = []
    for nested in shapes(tuple(range(k))):
        cons, leaves = [], []
        describe(nested, [], cons, leaves)
        out.append((nested, tuple(cons), tuple(leaves)))
    return tuple(out)


MAX_TEMPLATE_K = 5
_BIG = np.iinfo(np.int64).max


class BatchSolver:
    """Vectorized minimum-loss tree search over blocks of configurations.

    Every proper tree shape is checked against each configuration's ancestry
    matrix and scored on packed bitsets; the first minimal shape (in
    :func:`tree_templates` order) is kept per configuration.
    """

    def __init__(self, table, labels, base=None):
        self.table = table
        self.masks = LabelMasks.coerce(labels)
        n = self.masks.n
        if base is None:
            base = np.ones(n, dtype=bool)
        self.base = pack_bits(np.asarray(base, bool)[None])[0]
        self.class_bits = self.masks.packed & self.base

    def solve(self, batch):
        """Return ``(loss, template_index)`` arrays for an (m, k+1, k) block.

        Configurations without any proper tree get loss ``INT64_MAX`` and index -1.
        """
        m, _, k = batch.shape
        if k > MAX_TEMPLATE_K:
            raise ValueError(f"batched solver supports k <= {MAX_TEMPLATE_K}")
        if m == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
        if k == 0:
            loss = self._leaf_loss(np.broadcast_to(self.base, (1, self.base.shape[0])))
            return np.repeat(loss, m), np.zeros(m, dtype=np.int64)
        packed = self.table.packed()
        rules = batch[:, 0, :]
        ar = batch[:, 1:, :]
        pos_bits = packed[rules]  # (m, k, W)
        neg_bits = ~pos_bits & self.base
        pos_bits = pos_bits & self.base
        cache = {}
        best = np.full(m, _BIG, dtype=np.int64)
        arg = np.full(m, -1, dtype=np.int64)
        for t, (_, cons, leaves) in enumerate(tree_templates(k)):
            valid = np.ones(m, dtype=bool)
            for a, b, s in cons:
                valid &= ar[:, a, b] == s
            if not valid.any():
                continue
            total = np.zeros(m, dtype=np.int64)
            for path in leaves:
                loss = cache.get(path)
                if loss is None:
                    sides = [pos_bits[:, p] if s > 0 else neg_bits[:, p] for p, s in path]
                    region = sides[0].copy()
                    for side in sides[1:]:
                        region &= side
                    loss = self._leaf_loss(region)
                    cache[path] = loss
                total += loss
            better = valid & (total < best)
            best[better] = total[better]
            arg[better] = t
        return best, arg

    def _leaf_loss(self, region):
        # loops over the few classes and words beat reductions over short axes
        words = [np.ascontiguousarray(region[:, w]) for w in range(region.shape[1])]
        total = best = None
        for cb in self.class_bits:
            count = np.zeros(region.shape[0], dtype=np.int64)
            for w, word in enumerate(words):
                count += np.bitwise_count(word & cb[w])
            total = count.copy() if total is None else total + count
            best = count if best is None else np.maximum(best, count)
        return total - best

    def tree(self, ncr, template):
        """Materialize the tree chosen for one configuration."""
        k = ncr.shape[1]
        rules = tuple(int(r) for r in ncr[0])
        base_bits = int.from_bytes(self.base.tobytes(), "little") & self.masks.full
        nested = tree_templates(k)[template][0] if k else None
        return build_tree(nested, rules, self.table, self.masks, base_bits)


def solve_config(config, table, labels, members=None, backend="rec"):
    if backend == "rec":
        return sodt_rec(config, table, labels, members)
    if backend == "vec":
        return sodt_vec(config, table, labels, members)
    raise ValueError(f"unknown backend {backend!r}")
