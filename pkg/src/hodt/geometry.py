"""Veronese embedding, hyperplane fitting and the pairwise rule predicates.

A splitting rule is a hyperplane in embedded coordinates passing through G
data points. Its normal ``w`` has G+1 entries (the last is the bias) and the
positive side is ``w . (x, 1) >= 0``. Points within a relative tolerance of
the hyperplane count as positive, so every defining point lies on the
positive side of its own rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from math import comb

import numpy as np

from .exceptions import DimensionTooLargeError

#: Relative on-hyperplane tolerance used by the side rule.
SIDE_RTOL = 1e-9
#: Maximum admissible residual on defining points after normalization.
RESIDUAL_TOL = 1e-7
#: Singular values below ``RANK_RTOL * s_max`` are treated as zero.
RANK_RTOL = 1e-10
DEFAULT_MAX_DIM = 64


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] < 1:
            raise ValueError("points must be an N x D matrix with D >= 1")
        if self.labels.shape != (self.points.shape[0],):
            raise ValueError("labels must have one entry per point")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError("labels must lie in 0..n_classes-1")

    @classmethod
    def from_arrays(cls, points, labels, n_classes=None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        labels = np.asarray(labels, dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 1
        return cls(points, labels, int(n_classes))

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]

    def subset(self, index):
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.points[index], self.labels[index], self.n_classes)


@dataclass(frozen=True)
class EmbeddedDataset:
    points: np.ndarray
    degree: int
    n_features: int

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def g(self):
        return self.points.shape[1]


def embedding_dim(n_features, degree, max_dim=None):
    """Return ``binomial(degree + n_features, n_features) - 1``."""
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    g = comb(degree + n_features, n_features) - 1
    if max_dim is not None and g > max_dim:
        raise DimensionTooLargeError(
            f"embedding dimension {g} (D={n_features}, M={degree}) exceeds maximum {max_dim}"
        )
    return g


def monomial_powers(n_features, degree):
    """Exponent matrix of all monomials of total degree 1..degree, graded-lex order."""
    rows = []
    for d in range(1, degree + 1):
        for idx in combinations_with_replacement(range(n_features), d):
            row = [0] * n_features
            for k in idx:
                row[k] += 1
            rows.append(row)
    return np.array(rows, dtype=np.int64).reshape(-1, n_features)


def veronese_embed(points, degree, max_dim=DEFAULT_MAX_DIM):
    """Map each row of ``points`` to all its monomials of degree 1..``degree``.

    Parameters
    ----------
    points : array of shape (N, D), or a :class:`Dataset`
    degree : int
        Polynomial degree M >= 1.
    max_dim : int or None
        Raise :class:`DimensionTooLargeError` when G exceeds this.

    Returns
    -------
    EmbeddedDataset
    """
    if isinstance(points, Dataset):
        points = points.points
    x = np.asarray(points, dtype=float)
    if x.ndim != 2:
        raise ValueError("points must be two-dimensional")
    n_features = x.shape[1]
    embedding_dim(n_features, degree, max_dim)
    if degree == 1:
        return EmbeddedDataset(x.copy(), 1, n_features)
    powers = monomial_powers(n_features, degree)
    out = np.ones((x.shape[0], powers.shape[0]))
    for j, p in enumerate(powers):
        for k in np.flatnonzero(p):
            out[:, j] *= x[:, k] ** p[k]
    return EmbeddedDataset(out, degree, n_features)


def augment(points):
    points = np.asarray(points, dtype=float)
    return np.hstack([points, np.ones((points.shape[0], 1))])


def positive_side(normal, points_bar, rtol=SIDE_RTOL):
    """Side rule: True where ``w . xbar >= -rtol * sum_k |w_k xbar_k|``."""
    terms = points_bar * normal
    value = terms.sum(axis=-1)
    return value >= -rtol * np.abs(terms).sum(axis=-1)


def _orient(normals):
    norms = np.linalg.norm(normals, axis=-1, keepdims=True)
    normals = normals / norms
    nz = np.abs(normals) > 1e-12
    first = np.argmax(nz, axis=-1)
    sign = np.sign(np.take_along_axis(normals, first[:, None], axis=-1))
    sign[sign == 0] = 1.0
    return normals * sign


def fit_normals(defining_points, rtol=SIDE_RTOL):
    """Fit unit normals through batches of G points in R^G.

    ``defining_points`` has shape (m, G, G). Returns ``(normals, ok)`` with
    normals of shape (m, G+1); ``ok`` is False where the nullspace of the
    homogeneous system is not one-dimensional or the fit does not place every
    defining point on the hyperplane within tolerance.
    """
    p = np.asarray(defining_points, dtype=float)
    m, g = p.shape[0], p.shape[1]
    if m == 0:
        return np.empty((0, g + 1)), np.empty(0, dtype=bool)
    a = np.concatenate([p, np.ones((m, g, 1))], axis=2)
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    ok = s[:, -1] > RANK_RTOL * np.maximum(s[:, 0], 1e-300)
    normals = _orient(vh[:, -1, :])
    terms = a * normals[:, None, :]
    resid = np.abs(terms.sum(axis=-1))
    scale = np.abs(terms).sum(axis=-1)
    ok &= np.all(resid <= RESIDUAL_TOL * np.maximum(scale, 1.0), axis=1)
    # the side rule must put defining points on the positive side
    ok &= np.all(terms.sum(axis=-1) >= -rtol * scale, axis=1)
    return normals, ok


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """A fitted splitting rule.

    ``side_pos`` is a boolean mask over the points the rule was evaluated on;
    ``side_neg`` is its complement.
    """

    rank: int
    defining: tuple
    normal: np.ndarray
    side_pos: np.ndarray = field(repr=False)

    @property
    def side_neg(self):
        return ~self.side_pos

    def decide(self, points_bar):
        return positive_side(self.normal, points_bar)


def fit_hyperplane(embedded, defining, rank=None):
    """Fit the hyperplane through the given G embedded points.

    Returns None when the points are not in general position.
    """
    pts = embedded.points if isinstance(embedded, EmbeddedDataset) else np.asarray(embedded, float)
    defining = tuple(int(i) for i in defining)
    n, g = pts.shape
    if len(defining) != g:
        raise ValueError(f"need exactly G={g} defining points, got {len(defining)}")
    if len(set(defining)) != g or min(defining) < 0 or max(defining) >= n:
        raise ValueError("defining indices must be distinct and < N")
    normals, ok = fit_normals(pts[list(defining)][None])
    if not ok[0]:
        return None
    normal = normals[0]
    side = positive_side(normal, augment(pts))
    if rank is None:
        from .combinatorics import colex_rank

        rank = colex_rank(sorted(defining))
    return Hyperplane(rank, tuple(sorted(defining)), normal, side)


def ancestry(h_i, h_j):
    """+1 if all of h_j's defining points lie in h_i^+, -1 if all in h_i^-, else 0."""
    s = h_i.side_pos[list(h_j.defining)]
    if s.all():
        return 1
    if not s.any():
        return -1
    return 0


def crossed(h_i, h_j):
    """True when each rule's defining points lie on both sides of the other."""
    a = h_j.side_pos[list(h_i.defining)]
    b = h_i.side_pos[list(h_j.defining)]
    return bool(a.any() and not a.all() and b.any() and not b.all())
