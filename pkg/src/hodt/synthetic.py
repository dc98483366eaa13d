"""Random ground-truth hyperplane trees, uniform sampling and noise.

A ground-truth tree of size K is grown by repeatedly splitting a random leaf
with a random hyperplane through a point of that leaf's region. Leaves
receive the distinct labels ``0..K`` so the tree is the smallest one that
induces its labelling. Data are sampled uniformly from the unit cube.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidParamsError
from .geometry import Dataset, Hyperplane, augment
from .tree import DecisionTree

#: Each side of a new split must hold at least this fraction of its leaf's probe points.
MIN_SIDE_FRACTION = 0.05
N_PROBE = 4096
MAX_RETRIES = 200


@dataclass(frozen=True)
class GroundTruthSpec:
    k: int
    dim: int
    seed: int = 0
    low: float = 0.0
    high: float = 1.0

    def validate(self):
        if self.k < 0:
            raise InvalidParamsError("k must be >= 0")
        if self.dim < 1:
            raise InvalidParamsError("dim must be >= 1")
        if not self.high > self.low:
            raise InvalidParamsError("domain box must have high > low")


@dataclass(frozen=True)
class NoiseSpec:
    label_pct: float = 0.0
    feature_sigma: float = 0.0

    def validate(self):
        if not 0 <= self.label_pct <= 100:
            raise InvalidParamsError("label_pct must lie in [0, 100]")
        if self.feature_sigma < 0:
            raise InvalidParamsError("feature_sigma must be >= 0")


@dataclass
class GroundTruth:
    """A generated tree over raw coordinates plus its domain."""

    tree: DecisionTree
    spec: GroundTruthSpec

    @property
    def depth(self):
        return max(self.tree.depths()[i] for i in self.tree.leaves())

    @property
    def n_classes(self):
        return self.spec.k + 1

    def labels(self, points):
        return self.tree.predict(augment(points))

    def test_size(self):
        """``2**depth * (D - 1) * 500``, at least 500 points."""
        return 2**self.depth * max(self.spec.dim - 1, 1) * 500


def gen_ground_truth(spec, rng=None):
    """Grow a random size-``spec.k`` hyperplane tree with uniquely labelled leaves."""
    spec.validate()
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    probe = rng.uniform(spec.low, spec.high, size=(N_PROBE, spec.dim))
    probe_bar = augment(probe)
    # node arrays, grown in place; leaf_of[p] is the leaf holding probe point p
    rule, pos, neg = [-1], [-1], [-1]
    hyperplanes = {}
    leaf_of = np.zeros(N_PROBE, dtype=np.int64)
    for r in range(spec.k):
        for _ in range(MAX_RETRIES):
            leaves = [i for i, x in enumerate(rule) if x < 0]
            leaf = leaves[int(rng.integers(len(leaves)))]
            inside = np.flatnonzero(leaf_of == leaf)
            if inside.size < 2:
                continue
            normal = rng.normal(size=spec.dim)
            normal /= np.linalg.norm(normal)
            anchor = probe[inside[int(rng.integers(inside.size))]]
            w = np.append(normal, -normal @ anchor)
            side = probe_bar[inside] @ w >= 0
            frac = side.mean()
            if min(frac, 1 - frac) >= MIN_SIDE_FRACTION:
                break
        else:
            raise InvalidParamsError(f"could not place split {r + 1} after {MAX_RETRIES} retries")
        hyperplanes[r] = Hyperplane(r, (), w, np.zeros(0, dtype=bool))
        rule[leaf] = r
        pos[leaf], neg[leaf] = len(rule), len(rule) + 1
        rule += [-1, -1]
        pos += [-1, -1]
        neg += [-1, -1]
        leaf_of[inside[side]] = pos[leaf]
        leaf_of[inside[~side]] = neg[leaf]
    leaves = [i for i, x in enumerate(rule) if x < 0]
    label = [-1] * len(rule)
    for leaf, lab in zip(leaves, rng.permutation(len(leaves))):
        label[leaf] = int(lab)
    counts = [int(np.count_nonzero(leaf_of == i)) for i in range(len(rule))]
    tree = DecisionTree(rule, pos, neg, label, counts, hyperplanes)
    return GroundTruth(_preorder(tree), spec)


def _preorder(tree):
    """Renumber nodes so that the node arrays are in preorder."""
    order = []
    stack = [0]
    while stack:
        node = stack.pop()
        order.append(node)
        if tree.rule[node] >= 0:
            stack.append(tree.neg[node])
            stack.append(tree.pos[node])
    new = {old: i for i, old in enumerate(order)}
    remap = lambda i: new[i] if i >= 0 else -1
    return DecisionTree(
        [tree.rule[o] for o in order],
        [remap(tree.pos[o]) for o in order],
        [remap(tree.neg[o]) for o in order],
        [tree.label[o] for o in order],
        [tree.n_samples[o] for o in order],
        tree.hyperplanes,
    )


def sample_dataset(truth, n, rng=None):
    """Sample ``n`` points uniformly from the domain, labelled by ``truth``."""
    if n < 0:
        raise InvalidParamsError("n must be >= 0")
    rng = np.random.default_rng(truth.spec.seed) if rng is None else rng
    spec = truth.spec
    points = rng.uniform(spec.low, spec.high, size=(n, spec.dim))
    return Dataset(points, truth.labels(points).astype(np.int64), truth.n_classes)


def add_label_noise(data, pct, rng):
    """Increment (mod C) the labels of exactly ``floor(pct * N / 100)`` random points."""
    if not 0 <= pct <= 100:
        raise InvalidParamsError("pct must lie in [0, 100]")
    count = int(np.floor(pct * data.n / 100 + 1e-9))
    labels = data.labels.copy()
    if count:
        idx = rng.choice(data.n, size=count, replace=False)
        labels[idx] = (labels[idx] + 1) % data.n_classes
    return Dataset(data.points.copy(), labels, data.n_classes)


def add_feature_noise(data, sigma, rng):
    """Add Gaussian noise with standard deviation ``sigma`` times each feature's range."""
    if sigma < 0:
        raise InvalidParamsError("sigma must be >= 0")
    points = data.points.copy()
    if sigma > 0 and data.n:
        spread = points.max(axis=0) - points.min(axis=0)
        points = points + rng.normal(size=points.shape) * (sigma * spread)
    return Dataset(points, data.labels.copy(), data.n_classes)


def make_experiment(k, dim, n_train, seed, noise=None):
    """Ground truth, noisy training set and clean test set for one seed.

    All randomness comes from ``seed``: the tree, the training sample, the
    test sample and the noise use independent child streams.
    """
    noise = noise or NoiseSpec()
    noise.validate()
    tree_rng, train_rng, test_rng, noise_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)
    )
    truth = gen_ground_truth(GroundTruthSpec(k, dim, seed), tree_rng)
    train = sample_dataset(truth, n_train, train_rng)
    test = sample_dataset(truth, truth.test_size(), test_rng)
    train = add_label_noise(train, noise.label_pct, noise_rng)
    train = add_feature_noise(train, noise.feature_sigma, noise_rng)
    return truth, train, test
