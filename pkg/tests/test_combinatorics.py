from itertools import combinations
from math import comb

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hodt.combinatorics import (
    CombinationStream,
    binomial,
    colex_block,
    colex_rank,
    colex_unrank,
    nested_combs,
    nested_combs_steps,
)


class TestBinomial:
    def test_values(self):
        assert binomial(5, 2) == 10
        assert binomial(2, 5) == 0
        assert binomial(0, 0) == 1

    def test_saturate(self):
        with pytest.raises(OverflowError):
            binomial(200, 100, saturate=True)
        assert binomial(200, 100) == comb(200, 100)

    def test_negative(self):
        with pytest.raises(ValueError):
            binomial(-1, 2)


class TestColex:
    def test_small_order(self):
        combos = [colex_unrank(r, 2) for r in range(6)]
        assert combos == [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]

    @given(st.integers(1, 5).flatmap(lambda k: st.tuples(st.just(k), st.integers(0, 10**12))))
    def test_round_trip(self, args):
        k, rank = args
        combo = colex_unrank(rank, k)
        assert list(combo) == sorted(set(combo))
        assert colex_rank(combo) == rank

    @given(st.sets(st.integers(0, 60), min_size=1, max_size=6))
    def test_rank_then_unrank(self, s):
        combo = tuple(sorted(s))
        assert colex_unrank(colex_rank(combo), len(combo)) == combo

    def test_rank_rejects_unsorted(self):
        with pytest.raises(ValueError):
            colex_rank((3, 1))

    @pytest.mark.parametrize("g", [1, 2, 3])
    def test_blocks_are_contiguous(self, g):
        for n in range(g - 1, 8):
            block = colex_block(n, g)
            ranks = [colex_rank(row) for row in block]
            assert ranks == list(range(comb(n, g), comb(n + 1, g)))


class TestStream:
    @pytest.mark.parametrize("g", [1, 2, 3])
    def test_each_combination_once_in_rank_order(self, g):
        stream = CombinationStream(g)
        seen = []
        for _ in range(7):
            n, block = stream.add_point()
            assert all(c[-1] == n for c in block)
            seen.extend(block)
            assert stream.css[g] == []
        assert sorted(seen) == sorted(combinations(range(7), g))
        assert len(set(seen)) == len(seen)

    def test_block_is_the_rank_block(self):
        stream = CombinationStream(2)
        for _ in range(6):
            n, block = stream.add_point()
            assert {colex_rank(c) for c in block} == set(range(comb(n, 2), comb(n + 1, 2)))


class TestNestedCombs:
    @pytest.mark.parametrize("n,k,g", [(4, 2, 2), (5, 3, 2), (6, 2, 1), (5, 2, 3), (6, 1, 2)])
    def test_complete_against_naive(self, n, k, g):
        rules = range(comb(n, g))
        expected = set(combinations(rules, k))
        got = list(nested_combs(n, k, g))
        assert len(got) == len(set(got)) == comb(comb(n, g), k)
        assert {tuple(sorted(c)) for c in got} == expected

    def test_steps_emit_new_ranks_only(self):
        for n, configs in nested_combs_steps(6, 2, 2):
            for c in configs:
                assert max(c) >= comb(n, 2)
                assert max(c) < comb(n + 1, 2)
