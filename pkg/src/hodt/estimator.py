"""scikit-learn style wrappers."""

from __future__ import annotations

from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.preprocessing import LabelEncoder
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import HODTError, InvalidParamsError
from .geometry import Dataset, augment, embedding_dim, veronese_embed
from .heuristics import CoresetParams, hodt_coreset, sodt_wsh
from .io import Model
from .solver import BACKENDS, hodt

METHODS = ("exact", "coreset", "wsh")


class VeroneseEmbedding(TransformerMixin, BaseEstimator):
    """Map features to all monomials of total degree 1..``degree`` (graded-lex order).

    Parameters
    ----------
    degree : int, default=2
    max_dim : int or None, default=None
        Refuse embeddings with more output features than this.
    """

    def __init__(self, degree=2, max_dim=None):
        self.degree = degree
        self.max_dim = max_dim

    def fit(self, X, y=None):
        X = check_array(X)
        self.n_features_in_ = X.shape[1]
        self.n_output_features_ = embedding_dim(self.n_features_in_, self.degree, self.max_dim)
        return self

    def transform(self, X):
        check_is_fitted(self, "n_output_features_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return veronese_embed(X, self.degree, max_dim=None).points


class HODTClassifier(ClassifierMixin, BaseEstimator):
    """Size-constrained hypersurface decision tree.

    Parameters
    ----------
    k : int, default=1
        Number of branch nodes.
    degree : int, default=1
        Degree of the splitting hypersurfaces (1 gives oblique hyperplanes).
    method : {"exact", "coreset", "wsh"}, default="exact"
        Exact search, the coreset heuristic, or selected-hyperplane search.
    backend : {"vec", "rec"}, default="vec"
        Per-configuration tree solver.
    n_jobs : int or None, default=None
        Worker threads; None reads ``HODT_THREADS`` and falls back to 1.
    block_size, reshuffles, heap_size, max_exact, shrink :
        Coreset parameters (ignored by the exact method).
    alpha : int, default=0
        Distinct-point threshold of the selected-hyperplane search.
    random_state : int, default=0

    Attributes
    ----------
    classes_ : ndarray
    tree_ : DecisionTree
    loss_ : int
        Training 0-1 loss of ``tree_``.
    model_ : Model
    """

    def __init__(self, k=1, degree=1, method="exact", backend="vec", n_jobs=None, block_size=20,
                 reshuffles=1, heap_size=10, max_exact=40, shrink=0.5, alpha=0, random_state=0):
        self.k = k
        self.degree = degree
        self.method = method
        self.backend = backend
        self.n_jobs = n_jobs
        self.block_size = block_size
        self.reshuffles = reshuffles
        self.heap_size = heap_size
        self.max_exact = max_exact
        self.shrink = shrink
        self.alpha = alpha
        self.random_state = random_state

    def _coreset_params(self):
        return CoresetParams(self.block_size, self.reshuffles, self.heap_size, self.max_exact, self.shrink,
                             int(self.random_state or 0))

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if self.method not in METHODS:
            raise InvalidParamsError(f"method must be one of {METHODS}")
        if self.backend not in BACKENDS:
            raise InvalidParamsError(f"backend must be one of {BACKENDS}")
        if int(self.k) < 1:
            raise InvalidParamsError("k must be >= 1")
        encoder = LabelEncoder().fit(y)
        self.classes_ = encoder.classes_
        data = Dataset.from_arrays(X, encoder.transform(y), len(self.classes_))
        self.n_features_in_ = X.shape[1]
        g = embedding_dim(X.shape[1], self.degree)
        if self.method == "exact":
            if self.k * g > data.n:
                raise InvalidParamsError(f"k * G = {self.k * g} exceeds the {data.n} training points")
            sol = hodt(data, self.k, self.degree, backend=self.backend, n_jobs=self.n_jobs)
            tree, loss, self.stats_ = sol.tree, sol.loss, sol.stats
        elif self.method == "coreset":
            res = hodt_coreset(data, self.k, self.degree, self._coreset_params(), self.backend, self.n_jobs)
            tree, loss = res.tree, res.loss
        else:
            res = sodt_wsh(data, self.k, self.degree, self.alpha, self._coreset_params(), self.backend,
                           n_jobs=self.n_jobs)
            tree, loss = res.tree, res.loss
        if tree is None:
            raise HODTError("no feasible tree of the requested size exists for this data")
        self.tree_ = tree
        self.loss_ = int(loss)
        self.model_ = Model(tree, self.degree, X.shape[1], {"K": int(self.k), "loss": int(loss)})
        return self

    def apply(self, X):
        """Index of the leaf each sample reaches."""
        check_is_fitted(self, "tree_")
        X = self._validate(X)
        return self.tree_.apply(augment(veronese_embed(X, self.degree, max_dim=None).points))

    def predict(self, X):
        check_is_fitted(self, "tree_")
        return self.classes_[self.model_.predict(self._validate(X))]

    def _validate(self, X):
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X
