"""Search cache: combined best-list/priority ring plus visited ring."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphann.cache import SearchCache


class TestInsert:
    def test_first_insert_lands_in_best(self):
        c = SearchCache(k_out=4, prioq_size=8, visited_size=8)
        c.insert(5, 3.0)
        assert c.best() == [(5, 3.0)]
        assert c.is_known(5)

    def test_displacement_from_best(self):
        c = SearchCache(k_out=1, prioq_size=8, visited_size=8)
        c.insert(10, 3.0)
        c.insert(11, 1.0)
        assert c.best() == [(11, 1.0)]
        # the displaced candidate is still queued for expansion
        assert c.pop_best() == (11, 1.0)
        assert c.pop_best() == (10, 3.0)

    def test_duplicate_insert_rejected(self):
        c = SearchCache(k_out=2, prioq_size=4, visited_size=4)
        c.insert(1, 1.0)
        with pytest.raises(ValueError, match="already known"):
            c.insert(1, 1.0)

    def test_tie_breaks_by_id(self):
        c = SearchCache(k_out=3, prioq_size=6, visited_size=4)
        c.insert(9, 2.0)
        c.insert(4, 2.0)
        c.insert(7, 2.0)
        assert [i for i, _ in c.best()] == [4, 7, 9]


class TestPop:
    def test_pop_order(self):
        c = SearchCache(k_out=4, prioq_size=8, visited_size=8)
        c.insert(1, 1.0)
        c.insert(2, 2.0)
        assert c.pop_best() == (1, 1.0)
        assert c.is_known(1)

    def test_exhausted(self):
        c = SearchCache(k_out=2, prioq_size=4, visited_size=4)
        assert c.pop_best() is None
        c.insert(3, 1.0)
        c.pop_best()
        assert c.pop_best() is None

    def test_drain_sorted_after_random_inserts(self, rng):
        c = SearchCache(k_out=8, prioq_size=128, visited_size=256)
        ids = rng.permutation(100)
        for i in ids:
            c.insert(int(i), float(rng.random()))
        drained = []
        while (item := c.pop_best()) is not None:
            drained.append(item)
        dists = [d for _, d in drained]
        assert dists == sorted(dists)
        assert len(set(i for i, _ in drained)) == len(drained)

    def test_pop_all_unique_after_50(self, rng):
        c = SearchCache(k_out=4, prioq_size=64, visited_size=128)
        for i in rng.permutation(50):
            c.insert(int(i), float(rng.integers(0, 20)))
        seen = []
        while (item := c.pop_best()) is not None:
            seen.append(item)
        assert len(seen) == 50
        assert [d for _, d in seen] == sorted(d for _, d in seen)


class TestRingBehavior:
    def test_worse_than_full_tail_is_forgotten(self):
        c = SearchCache(k_out=1, prioq_size=2, visited_size=4)
        c.insert(0, 1.0)
        c.insert(1, 2.0)
        c.insert(2, 3.0)
        assert c.forgotten == 0
        c.insert(3, 9.0)  # capacity 3 reached, strictly worse than the tail
        assert not c.is_known(3)
        assert c.forgotten == 1

    def test_visited_tail_eviction_keeps_id_known(self):
        c = SearchCache(k_out=1, prioq_size=1, visited_size=4)
        c.insert(0, 5.0)
        c.pop_best()  # 0 visited, still in best
        c.insert(1, 1.0)  # displaces 0 from the 2-slot ring
        assert c.is_known(0)  # parked in the visited ring
        assert c.best() == [(1, 1.0)]

    def test_visited_ring_wraparound_forgets(self):
        # tight rings: improving candidates displace visited entries into
        # the visited ring, whose wraparound eventually forgets them
        c = SearchCache(k_out=1, prioq_size=1, visited_size=1)
        for i, dist in enumerate([50.0, 40.0, 30.0, 20.0, 10.0]):
            if not c.is_known(i):
                c.insert(i, dist)
            c.pop_best()
        assert c.forgotten >= 1
        assert not c.is_known(0)
        # the current best entry is always known
        best_id = c.best()[0][0]
        assert c.is_known(best_id)


@given(st.lists(st.tuples(st.integers(0, 60), st.integers(0, 50)), min_size=1, max_size=120))
@settings(max_examples=60, deadline=None)
def test_random_ops_keep_invariants(ops):
    c = SearchCache(k_out=4, prioq_size=8, visited_size=6)
    inserted = set()
    for node, dist in ops:
        if not c.is_known(node):
            c.insert(node, float(dist))
            inserted.add(node)
    # sorted ascending by (dist, id), no duplicate ids, size bounds hold
    entries = [(float(c._dists[i]), int(c._ids[i])) for i in range(len(c))]
    assert entries == sorted(entries)
    assert len(set(i for _, i in entries)) == len(entries)
    assert len(c) <= c.capacity
    assert len(c.best()) <= c.k_out
    # every id the membership map reports lives in a ring slot
    live = set(i for _, i in entries) | set(int(v) for v in c._vring[: c._vlen])
    for node in list(c._refs):
        assert node in live
