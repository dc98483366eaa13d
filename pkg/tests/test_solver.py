import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hodt import Dataset, hodt, odt_size_naive
from hodt.solver import ExactSearch, resolve_threads
from hodt.tree import evaluate

from conftest import random_dataset


def _stump_oracle(x, y):
    best = None
    for t in x:
        loss = 0
        for side in (x >= t, x < t):
            if side.any():
                loss += side.sum() - np.bincount(y[side]).max()
        best = loss if best is None else min(best, loss)
    return best


class TestOracles:
    @given(st.integers(0, 10_000))
    def test_one_dimensional_stump(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.permutation(40)[:12].astype(float)
        y = rng.integers(0, 2, size=12)
        sol = hodt(Dataset.from_arrays(x, y), 1)
        assert sol.loss == _stump_oracle(x, y)

    @given(st.integers(0, 10_000), st.integers(1, 2))
    def test_matches_naive(self, seed, k):
        data = random_dataset(seed, 8, 2, n_classes=3)
        ref = odt_size_naive(data, k)
        for backend in ("vec", "rec"):
            sol = hodt(data, k, backend=backend)
            assert sol.loss == ref.loss
            if sol.found:
                emb = sol.table.embedded.points
                assert evaluate(sol.tree, emb, data.labels) == sol.loss
                assert sol.tree.size == k

    def test_stats_match_naive(self):
        data = random_dataset(4, 9, 2)
        a, b = hodt(data, 2), odt_size_naive(data, 2)
        # streaming counts also include the size-1 extensions
        assert a.stats.feasible == b.stats.feasible + a.stats.rules_fitted
        assert a.stats.configs_evaluated == b.stats.configs_evaluated
        assert a.stats.crossed_rejected == b.stats.crossed_rejected

    def test_quadratic_separates_disc(self):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1, 1, size=(14, 2))
        y = (np.sum(x**2, axis=1) < 0.4).astype(int)
        lin = hodt(Dataset.from_arrays(x, y), 1, degree=1)
        quad = hodt(Dataset.from_arrays(x, y), 1, degree=2)
        assert quad.loss <= lin.loss

    def test_non_collinear_four_points(self):
        x = np.array([[-1.0, 0.0], [-2.0, 0.1], [1.0, 0.2], [2.0, -0.1]])
        assert hodt(Dataset.from_arrays(x, [0, 0, 1, 1]), 1).loss == 0

    def test_one_dimensional_four_points(self):
        x = np.array([-1.0, -2.0, 1.0, 2.0])
        assert hodt(Dataset.from_arrays(x, [0, 0, 1, 1]), 1).loss == 0


class TestEdgeCases:
    def test_too_few_points(self):
        sol = hodt(Dataset.from_arrays(np.zeros((1, 2)), [0]), 1)
        assert not sol.found and sol.loss is None

    def test_more_rules_than_exist(self):
        sol = hodt(random_dataset(0, 3, 2), 4)
        assert not sol.found

    def test_k_above_template_limit_uses_generator(self):
        rng = np.random.default_rng(3)
        data = Dataset.from_arrays(rng.permutation(20)[:8].astype(float), rng.integers(0, 2, 8))
        a = hodt(data, 6, backend="vec")
        b = hodt(data, 6, backend="rec")
        assert a.loss == b.loss == odt_size_naive(data, 6).loss

    def test_invalid_arguments(self):
        data = random_dataset(0, 5)
        with pytest.raises(ValueError):
            hodt(data, 0)
        with pytest.raises(ValueError):
            hodt(data, 1, backend="gpu")
        with pytest.raises(TypeError):
            hodt(np.zeros((3, 2)), 1)


class TestStreaming:
    def test_pending_empty_after_step(self):
        search = ExactSearch(random_dataset(1, 10), 2, batch_size=2)
        for _ in range(10):
            search.step()
            assert search.pending == []
        assert search.solution().loss == hodt(random_dataset(1, 10), 2).loss

    def test_deterministic_across_threads(self):
        data = random_dataset(2, 14, 2, n_classes=3)
        a = hodt(data, 2, n_jobs=1, batch_size=16)
        b = hodt(data, 2, n_jobs=3, batch_size=16)
        assert a.loss == b.loss
        assert a.config.rules == b.config.rules
        assert a.stats.to_dict() == b.stats.to_dict()
        assert a.tree.rule == b.tree.rule

    def test_batch_size_does_not_change_answer(self):
        data = random_dataset(5, 12, 2)
        ref = hodt(data, 2)
        for bs in (1, 7, 100_000):
            sol = hodt(data, 2, batch_size=bs)
            assert (sol.loss, sol.config.rules) == (ref.loss, ref.config.rules)

    def test_keep_returns_sorted_top(self):
        sol = hodt(random_dataset(6, 10), 2, keep=5)
        losses = [t[0] for t in sol.top]
        assert len(sol.top) == 5 and losses == sorted(losses)
        assert losses[0] == sol.loss

    def test_first_minimum_wins(self):
        # all labels equal: every configuration ties at zero, so the first in stream order wins
        data = Dataset.from_arrays(np.random.default_rng(0).random((7, 2)), np.zeros(7, int), 1)
        sol = hodt(data, 2, keep=3)
        assert sol.loss == 0
        assert sol.top[0][1] == 0

    def test_stats_identity(self):
        s = hodt(random_dataset(7, 10), 3).stats
        assert s.extensions_attempted == s.feasible + s.crossed_rejected + s.degenerate_rejected


class TestThreads:
    def test_env_fallback(self, monkeypatch):
        monkeypatch.setenv("HODT_THREADS", "3")
        assert resolve_threads(None) == 3
        assert resolve_threads(2) == 2
