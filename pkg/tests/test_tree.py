from itertools import permutations
from math import factorial

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hodt import InfeasibleConfigurationError
from hodt.ancestry import RuleTable, cal_arm, nested_combs_fa
from hodt.geometry import augment, veronese_embed
from hodt.tree import (
    INF,
    BatchSolver,
    DecisionTree,
    LabelMasks,
    bits_to_mask,
    evaluate,
    gen_dts_vec,
    gen_nested,
    predict,
    sodt_rec,
    sodt_vec,
    splits,
    tree_templates,
)

from conftest import PINWHEEL, random_dataset


def _setup(seed, n, k, n_classes=2):
    data = random_dataset(seed, n, 2, n_classes)
    table = RuleTable(veronese_embed(data.points, 1)).fit_all()
    configs = list(nested_combs_fa(table.embedded, k, table))
    return data, table, configs


def _subtree_rules(tree, node):
    if tree.is_leaf(node):
        return []
    return [tree.rule[node]] + _subtree_rules(tree, tree.pos[node]) + _subtree_rules(tree, tree.neg[node])


def _assert_proper(tree, config):
    where = {r: i for i, r in enumerate(config.rules)}
    for node in range(tree.n_nodes):
        if tree.is_leaf(node):
            continue
        a = where[tree.rule[node]]
        for r in _subtree_rules(tree, tree.pos[node]):
            assert config.ar[a, where[r]] == 1
        for r in _subtree_rules(tree, tree.neg[node]):
            assert config.ar[a, where[r]] == -1


class TestMasks:
    def test_leaf_majority_and_ties(self):
        masks = LabelMasks(np.array([0, 1, 1, 0]))
        assert masks.leaf(0b0110) == (1, 0)
        assert masks.leaf(0b0011) == (0, 1)
        assert masks.leaf(0) == (0, 0)

    def test_bits_round_trip(self):
        mask = np.array([True, False, True, True, False, False, False, False, True])
        from hodt.tree import _to_int

        np.testing.assert_array_equal(bits_to_mask(_to_int(mask), mask.size), mask)


class TestSolversAgree:
    @given(st.integers(0, 5000), st.integers(1, 3))
    def test_rec_equals_vec_equals_batch(self, seed, k):
        data, table, configs = _setup(seed, 7, k, n_classes=3)
        masks = LabelMasks(data.labels, data.n_classes)
        solver = BatchSolver(table, masks)
        if not configs:
            return
        batch = np.stack([c.ncr() for c in configs])
        bloss, barg = solver.solve(batch)
        for c, bl, ba in zip(configs, bloss, barg):
            t_rec, l_rec = sodt_rec(c, table, masks)
            t_vec, l_vec = sodt_vec(c, table, masks)
            assert l_rec == l_vec
            if l_rec == INF:
                assert ba == -1
                continue
            assert bl == l_rec
            tree = solver.tree(c.ncr(), int(ba))
            assert evaluate(tree, table.embedded.points, data.labels) == l_rec
            assert evaluate(t_rec, table.embedded.points, data.labels) == l_rec

    @given(st.integers(0, 5000))
    def test_tree_count_at_most_factorial(self, seed):
        _, table, configs = _setup(seed, 6, 3)
        for c in configs[:30]:
            assert len(list(gen_nested(c))) <= factorial(3)

    @given(st.integers(0, 5000))
    def test_generated_trees_are_proper(self, seed):
        data, table, configs = _setup(seed, 6, 3)
        for c in configs[:20]:
            for tree, loss in gen_dts_vec(c, table, data.labels):
                assert tree.size == 3
                _assert_proper(tree, c)
                assert evaluate(tree, table.embedded.points, data.labels) == loss

    def test_templates_cover_every_insertion_order(self):
        # a config where every pair is on the positive side: all k! chains are proper
        for k in (1, 2, 3):
            assert len(tree_templates(k)) >= factorial(k)
        assert len(tree_templates(2)) == 4


class TestSplits:
    def test_pinwheel_has_no_root(self):
        table = RuleTable(veronese_embed(PINWHEEL, 1)).fit_all()
        ranks = tuple(sorted(table.rank_of(p) for p in [(0, 1), (2, 3), (4, 5)]))
        config = cal_arm(ranks, table)
        assert config.is_feasible()
        assert splits(config) == []
        tree, loss = sodt_rec(config, table, np.zeros(6, dtype=int))
        assert tree is None and loss == INF
        assert list(gen_nested(config)) == []
        loss, arg = BatchSolver(table, np.zeros(6, dtype=int)).solve(config.ncr()[None])
        assert arg[0] == -1

    def test_infeasible_raises(self):
        pts = np.array([[0.0, 0.0], [2.0, 2.0], [0.0, 2.0], [2.0, 0.0]])
        table = RuleTable(veronese_embed(pts, 1)).fit_all()
        ranks = tuple(sorted((table.rank_of((0, 1)), table.rank_of((2, 3)))))
        config = cal_arm(ranks, table)
        assert not config.is_feasible()
        with pytest.raises(InfeasibleConfigurationError):
            sodt_rec(config, table, np.zeros(4, dtype=int))

    def test_split_sides_follow_ancestry(self):
        _, table, configs = _setup(11, 7, 3)
        for c in configs[:20]:
            for pos, root, neg in splits(c):
                i = c.rules.index(root)
                for r in pos.rules:
                    assert c.ar[i, c.rules.index(r)] == 1
                for r in neg.rules:
                    assert c.ar[i, c.rules.index(r)] == -1
                assert pos.k + neg.k == c.k - 1


class TestTreeType:
    def test_stump_predicts_by_side(self):
        pts = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.5], [-1.0, 0.5]])
        # defining points count as positive
        labels = np.array([1, 1, 1, 0])
        table = RuleTable(veronese_embed(pts, 1)).fit_all()
        config = cal_arm((table.rank_of((0, 1)),), table)
        tree, loss = sodt_rec(config, table, labels)
        assert loss == 0
        np.testing.assert_array_equal(predict(tree, table.embedded.points), labels)
        assert tree.depths() == [0, 1, 1]

    def test_leaf_only(self):
        tree = DecisionTree.leaf_only(2, 5)
        assert tree.size == 0
        np.testing.assert_array_equal(tree.predict(augment(np.zeros((3, 2)))), [2, 2, 2])

    def test_apply_matches_members(self):
        data, table, configs = _setup(5, 8, 2)
        c = configs[0]
        tree, _ = sodt_rec(c, table, data.labels)
        leaf_of = tree.apply(augment(table.embedded.points))
        for leaf in tree.leaves():
            members = bits_to_mask(tree.members[leaf], data.n)
            np.testing.assert_array_equal(members, leaf_of == leaf)

    def test_permutations_of_rules_give_same_loss(self):
        data, table, configs = _setup(8, 7, 3)
        for c in configs[:10]:
            _, ref = sodt_rec(c, table, data.labels)
            for perm in list(permutations(range(3)))[1:3]:
                sub = c.sub(perm)
                _, got = sodt_rec(sub, table, data.labels)
                assert got == ref
