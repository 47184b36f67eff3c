"""Stopping rule, greedy search, seeds, and both query modes."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import graphann as ga
from graphann.config import ConfigError, QueryConfig
from graphann.graph import AdjacencyLayer, Hierarchy
from graphann.search import greedy_search, stopping_check

from conftest import naive_topk


class TestStoppingCheck:
    def test_direct_substitution(self):
        # margin = 0.5 * min(2.0, 1.0) = 0.5; threshold = 4.5
        assert stopping_check(5.0, 4.0, 1.0, 2.0, 0.5) is True

    def test_zero_slack(self):
        assert stopping_check(4.0001, 4.0, 1.0, 2.0, 0.0) is True
        assert stopping_check(4.0, 4.0, 1.0, 2.0, 0.0) is False

    def test_boundary_is_strict(self):
        assert stopping_check(4.5, 4.0, 1.0, 2.0, 0.5) is False
        assert stopping_check(np.nextafter(4.5, 5.0), 4.0, 1.0, 2.0, 0.5) is True

    def test_global_bound_caps_margin(self):
        # min picks d_nn1_max when the local estimate is larger
        assert stopping_check(4.6, 4.0, 10.0, 1.0, 0.5) is True
        assert stopping_check(4.4, 4.0, 10.0, 1.0, 0.5) is False

    @given(
        st.floats(0, 100), st.floats(0, 100), st.floats(0, 100),
        st.floats(0, 100), st.floats(0, 4), st.floats(0, 4),
    )
    @settings(max_examples=80, deadline=None)
    def test_monotone_in_tau(self, d_next, d_bk, d_b1, d_max, tau1, tau2):
        lo, hi = sorted((tau1, tau2))
        if stopping_check(d_next, d_bk, d_b1, d_max, hi):
            assert stopping_check(d_next, d_bk, d_b1, d_max, lo)


def single_layer_hierarchy(dataset, k=8, k_nn=4, exact=True):
    """One exact bottom layer over the whole dataset, for search tests."""
    from graphann import backend

    n = dataset.n
    cfg = ga.BuildConfig(k=k, k_nn=k_nn, k_sym=k - k_nn, s=max(k_nn + 1, 2), g=2, seed=0)
    layer = AdjacencyLayer(n, k, k_nn)
    if exact:
        members = np.arange(n, dtype=np.int32)
        pos, dists = backend.impl.batch_bruteforce(dataset.vectors, members, k_nn)
        k_eff = min(k_nn, n - 1)
        layer.adjacency[:, :k_eff] = np.where(pos[:, :k_eff] >= 0, members[pos[:, :k_eff]], -1)
        layer.nn_dists[:, :k_eff] = dists[:, :k_eff]
        layer.d_nn1[:] = dists[:, 0] if k_eff else np.inf
    h = Hierarchy([layer], [None], s=cfg.s, g=cfg.g, config=cfg, dim=dataset.d)
    h.attach(dataset)
    h.stats = ga.compute_stats(h) if exact and n > 1 else None
    return h


class TestGreedySearch:
    def test_exact_match_descends_to_zero(self, rng):
        ds = ga.gen_synthetic(128, 8, seed=5, law="uniform")
        h = single_layer_hierarchy(ds)
        seeds = rng.choice(128, 4, replace=False).astype(np.int32)
        q = ds.vectors[17]
        seed_d = np.array([ga.squared_distance(q, ds.vectors[s]) for s in seeds])
        res = greedy_search(
            ds.vectors, h.rows_for(0), h.layers[0], seeds, seed_d, q,
            QueryConfig(k_out=4, tau=0.6), h.stats.d_nn1_max,
        )
        assert res.hits[0] == (17, 0.0)

    def test_matches_bruteforce_on_exact_graph(self, rng):
        # single-batch build: exact direct slots plus inverse links
        ds = ga.gen_synthetic(256, 2, seed=9, law="uniform")
        cfg = ga.BuildConfig(k=12, k_nn=6, k_sym=6, s=256, g=2, refinements=0, seed=1)
        h, _ = ga.build(ds, cfg)
        good = 0
        for i in range(256):
            q = ds.vectors[i]
            seeds = rng.choice(256, 4, replace=False).astype(np.int32)
            seed_d = np.array([ga.squared_distance(q, ds.vectors[s]) for s in seeds])
            res = greedy_search(
                ds.vectors, h.rows_for(0), h.layers[0], seeds, seed_d, q,
                QueryConfig(k_out=4, tau=0.6), h.stats.d_nn1_max,
            )
            want, _ = naive_topk(ds.vectors, q, 1)
            good += res.hits[0][0] == want[0]
        assert good >= 250

    def test_iteration_cap(self, rng):
        ds = ga.gen_synthetic(128, 4, seed=3, law="uniform")
        h = single_layer_hierarchy(ds)
        q = ds.vectors[0]
        res = greedy_search(
            ds.vectors, h.rows_for(0), h.layers[0],
            np.array([64], dtype=np.int32),
            np.array([ga.squared_distance(q, ds.vectors[64])]),
            q, QueryConfig(k_out=4, tau=0.6, max_iterations=1), h.stats.d_nn1_max,
        )
        assert res.steps == 1
        assert res.terminated_by == "iteration-cap"

    def test_empty_seed_rejected(self):
        ds = ga.gen_synthetic(16, 4, seed=1)
        h = single_layer_hierarchy(ds)
        with pytest.raises(ValueError):
            greedy_search(
                ds.vectors, h.rows_for(0), h.layers[0],
                np.array([], dtype=np.int32), np.array([]),
                ds.vectors[0], QueryConfig(k_out=2), 1.0,
            )

    def test_invalid_seed_rejected(self):
        ds = ga.gen_synthetic(16, 4, seed=1)
        h = single_layer_hierarchy(ds)
        with pytest.raises(ValueError):
            greedy_search(
                ds.vectors, h.rows_for(0), h.layers[0],
                np.array([99], dtype=np.int32), np.array([0.0]),
                ds.vectors[0], QueryConfig(k_out=2), 1.0,
            )

    def test_hit_distances_recompute_bitwise(self, rng):
        ds = ga.gen_synthetic(256, 8, seed=13, law="clustered", clusters=6)
        h = single_layer_hierarchy(ds)
        for _ in range(50):
            q = (rng.standard_normal(8) * 2).astype(np.float32)
            res = ga.query(h, q, QueryConfig(k_out=5, tau=0.6))
            for node, dist in res.hits:
                assert ga.squared_distance(q, ds.vectors[node]) == dist

    def test_tau_infinity_visits_reachable_component(self, rng):
        ds = ga.gen_synthetic(128, 4, seed=21, law="uniform")
        h = single_layer_hierarchy(ds, k=8, k_nn=4)
        q = (rng.random(4)).astype(np.float32)
        cfg = QueryConfig(k_out=8, tau=1e18, max_iterations=10_000, prioq_size=512, visited_size=4096)
        res = ga.query(h, q, cfg)
        want_ids, want_d = naive_topk(ds.vectors, q, 8)
        np.testing.assert_array_equal(res.ids, want_ids)
        np.testing.assert_allclose(res.dists, want_d, rtol=1e-12)

    def test_monotone_tau_first_hit(self, rng):
        ds = ga.gen_synthetic(512, 8, seed=2, law="clustered", clusters=10)
        h = single_layer_hierarchy(ds, k=8, k_nn=4)
        for trial in range(30):
            q = (rng.standard_normal(8) * 2).astype(np.float32)
            prev = None
            for tau in (0.0, 0.2, 0.4, 0.8, 1.6):
                res = ga.query(h, q, QueryConfig(k_out=4, tau=tau))
                d0 = res.dists[0]
                if prev is not None:
                    assert d0 <= prev + 1e-12
                prev = d0


class TestQueryConfigValidation:
    def test_prioq_floor(self):
        with pytest.raises(ConfigError):
            QueryConfig(k_out=200, prioq_size=256)

    def test_bad_kout(self):
        with pytest.raises(ConfigError):
            QueryConfig(k_out=0)


class TestTopLayerSeeds:
    def test_single_node_top(self):
        ds = ga.gen_synthetic(20, 4, seed=3)
        h = single_layer_hierarchy(ds)
        # fake a one-node top layer referencing dataset id 7
        top = AdjacencyLayer(1, h.layers[0].k, h.layers[0].k_nn)
        h.layers.append(top)
        h.to_bottom.append(np.array([7], dtype=np.int32))
        ids, dists, scanned = ga.top_layer_seeds(h, ds.vectors[3], k_out=4)
        assert list(ids) == [7]
        assert scanned == 1

    def test_exact_point_first(self, small_index, small_clustered):
        h, _ = small_index
        top_rows = h.rows_for(h.num_layers - 1)
        target = int(top_rows[5])
        ids, dists, _ = ga.top_layer_seeds(h, small_clustered.vectors[target], k_out=4)
        assert ids[0] == target
        assert dists[0] == 0.0

    def test_matches_exhaustive_scan(self, small_index, small_clustered, rng):
        h, _ = small_index
        top_rows = h.rows_for(h.num_layers - 1)
        q = (rng.standard_normal(16) * 2).astype(np.float32)
        ids, dists, scanned = ga.top_layer_seeds(h, q, k_out=8)
        d = ((small_clustered.vectors[top_rows].astype(np.float64) - q.astype(np.float64)) ** 2).sum(axis=1)
        order = np.argsort(d, kind="stable")[:8]
        np.testing.assert_array_equal(np.sort(ids), np.sort(top_rows[order]))
        assert scanned == len(top_rows)


class TestQueryModes:
    def test_self_queries_hit_themselves(self, small_index, small_clustered):
        h, _ = small_index
        for i in range(0, 400, 37):
            res = ga.query(h, small_clustered.vectors[i], QueryConfig(k_out=5, tau=0.6))
            assert res.hits[0] == (i, 0.0)

    def test_hierarchical_single_layer_is_bruteforce(self, rng):
        ds = ga.gen_synthetic(64, 4, seed=5)
        h = single_layer_hierarchy(ds)
        q = rng.random(4).astype(np.float32)
        res = ga.hierarchical_query(h, q, QueryConfig(k_out=6, tau=0.5))
        want_ids, want_d = naive_topk(ds.vectors, q, 6)
        np.testing.assert_array_equal(res.ids, want_ids)

    def test_hierarchical_finds_replicated_point(self, small_index, small_clustered):
        h, _ = small_index
        top_rows = h.rows_for(h.num_layers - 1)
        target = int(top_rows[3])
        res = ga.hierarchical_query(h, small_clustered.vectors[target], QueryConfig(k_out=5, tau=0.6))
        assert res.hits[0] == (target, 0.0)

    def test_cross_mode_agreement_recorded(self, rng):
        # two-layer hierarchy: compare descent against top-to-bottom jump;
        # the agreement rate is informational (recorded, not pinned)
        ds = ga.gen_synthetic(4096, 16, seed=31, law="clustered", clusters=32)
        cfg = ga.BuildConfig(k=12, k_nn=6, k_sym=6, s=1024, g=4, refinements=1, seed=3)
        h, _ = ga.build(ds, cfg)
        assert h.num_layers == 2
        agree = 0
        trials = 500
        qcfg = QueryConfig(k_out=5, tau=0.6)
        for _ in range(trials):
            q = (rng.standard_normal(16) * 2).astype(np.float32)
            a = ga.hierarchical_query(h, q, qcfg)
            b = ga.query(h, q, qcfg)
            agree += a.hits[0][0] == b.hits[0][0]
        rate = agree / trials
        print(f"\n[recorded] hierarchical vs jump first-hit agreement: {rate:.3f}")
        assert rate > 0.5  # loose sanity floor; the exact rate is informational

    def test_batch_query_matches_sequential_any_thread_count(self, small_index, small_clustered):
        h, _ = small_index
        queries = small_clustered.vectors[:32]
        cfg = QueryConfig(k_out=5, tau=0.6)
        seq = ga.batch_query(h, queries, cfg, threads=1)
        par = ga.batch_query(h, queries, cfg, threads=4)
        for a, b in zip(seq, par):
            np.testing.assert_array_equal(a.ids, b.ids)
            np.testing.assert_array_equal(a.dists, b.dists)
            assert a.steps == b.steps

    def test_dimension_mismatch_rejected(self, small_index):
        h, _ = small_index
        with pytest.raises(ValueError, match="dimension"):
            ga.query(h, np.zeros(4, dtype=np.float32))
