"""Greedy downhill graph query with backtracking.

Two query modes exist over a built hierarchy: `query` jumps from a
brute-force scan of the top layer straight to the bottom layer, which is
the fast path for answering external queries; `hierarchical_query`
descends layer by layer, seeding each finer layer with the best points of
the coarser one, which is what construction uses to merge sub-trees.

All distances are squared Euclidean; the stopping slack is applied in
squared space as well, so tau values are this library's own calibration
knob rather than universal constants.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend
from .config import QueryConfig
from .graph import Hierarchy

TERMINATED_BY = {0: "stopping-rule", 1: "queue-empty", 2: "iteration-cap"}


@dataclass
class QueryResult:
    """Ascending (id, distance) results plus search-effort diagnostics."""

    ids: np.ndarray
    dists: np.ndarray
    visited_count: int
    steps: int
    terminated_by: str
    distinct_touched: int = 0
    forgotten: int = 0

    @property
    def hits(self) -> list[tuple[int, float]]:
        return [(int(i), float(d)) for i, d in zip(self.ids, self.dists)]


def stopping_check(
    d_next: float, d_best_k: float, d_best_1: float, d_nn1_max: float, tau: float
) -> bool:
    """True when the closest unvisited candidate lies beyond the slack.

    The margin is tau * min(d_nn1_max, d_best_1) on top of the k-th best
    known distance; the comparison is strict, so a candidate exactly on
    the threshold keeps the search going.
    """
    return bool(d_next > d_best_k + tau * min(d_nn1_max, d_best_1))


def greedy_search(
    X: np.ndarray,
    to_row: np.ndarray,
    layer,
    seed_ids: np.ndarray,
    seed_dists: np.ndarray,
    q: np.ndarray,
    cfg: QueryConfig,
    d_nn1_max: float,
) -> QueryResult:
    """Run the greedy loop on one layer from precomputed seeds.

    Pops the closest unvisited candidate, discards neighbors that are
    already known, computes distances for the rest and admits those inside
    the stopping threshold; ends on the stopping rule, queue exhaustion or
    the iteration cap.
    """
    seed_ids = np.asarray(seed_ids, dtype=np.int32)
    seed_dists = np.asarray(seed_dists, dtype=np.float64)
    if seed_ids.size == 0:
        raise ValueError("greedy search needs at least one seed")
    if seed_ids.min() < 0 or seed_ids.max() >= layer.node_count:
        raise ValueError("seed id out of range for this layer")
    q = np.ascontiguousarray(q, dtype=np.float32)
    ids, dists, visited, steps, term, distinct, forgotten = backend.impl.greedy_search(
        X,
        to_row,
        layer.adjacency,
        layer.k_nn,
        layer.sym_count,
        q,
        seed_ids,
        seed_dists,
        cfg.k_out,
        cfg.tau,
        d_nn1_max,
        cfg.max_iterations,
        cfg.prioq_size,
        cfg.visited_size,
    )
    return QueryResult(ids, dists, visited, steps, TERMINATED_BY[term], distinct, forgotten)


def top_layer_seeds(h: Hierarchy, q: np.ndarray, k_out: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Scan every top-layer node, return the k_out best as dataset ids.

    Distances stay valid at finer layers because coarse points are
    replicas. Also returns the number of distance computations spent.
    """
    q = np.ascontiguousarray(q, dtype=np.float32)
    top = h.num_layers - 1
    rows = h.rows_for(top)
    gathered = h.vectors()[rows]
    k = min(k_out, len(rows))
    local, dists = backend.impl.exhaustive_topk(gathered, q, k)
    return rows[local].astype(np.int32), dists, len(rows)


def query(h: Hierarchy, q: np.ndarray, cfg: QueryConfig | None = None) -> QueryResult:
    """Top-to-bottom jump: brute-force the top layer, then search the bottom.

    The seeds exist at the bottom layer too, so their distances are
    inserted into the cache unchanged and marked known.
    """
    cfg = cfg or QueryConfig()
    q = _check_query(h, q)
    seed_ids, seed_dists, scanned = top_layer_seeds(h, q, cfg.k_out)
    res = greedy_search(
        h.vectors(),
        h.rows_for(0),
        h.layers[0],
        seed_ids,
        seed_dists,
        q,
        cfg,
        _bottom_slack_bound(h),
    )
    res.visited_count += scanned
    # scan ids beyond the seeds were touched once and dropped
    res.distinct_touched += scanned - len(seed_ids)
    return res


def hierarchical_query(
    h: Hierarchy,
    q: np.ndarray,
    cfg: QueryConfig | None = None,
    start_layer: int | None = None,
    stop_layer: int = 0,
    segment: tuple[int, int] | None = None,
    slack_bounds: list[float] | None = None,
    segment_cache: dict | None = None,
) -> QueryResult:
    """Layer-by-layer descent used for construction-time merging.

    Brute-forces the start layer (or one segment of it), then repeatedly
    hands the best k_out points down as seeds for a greedy search on the
    next finer layer, so targets are approached from multiple sides.
    Results are in stop_layer-local ids (dataset ids for stop_layer 0).
    Construction passes precomputed per-layer slack bounds to avoid
    rescanning mutating layers.
    """
    cfg = cfg or QueryConfig()
    q = _check_query(h, q)
    start = h.num_layers - 1 if start_layer is None else start_layer
    if not (0 <= stop_layer <= start < h.num_layers):
        raise ValueError(f"invalid layer range {start}..{stop_layer} for {h.num_layers} layers")

    X = h.vectors()
    rows = h.rows_for(start)
    lo, hi = segment if segment is not None else (0, len(rows))
    if segment_cache is not None:
        gathered = segment_cache.get((start, lo, hi))
        if gathered is None:
            gathered = X[rows[lo:hi]]
            segment_cache[(start, lo, hi)] = gathered
    else:
        gathered = X[rows[lo:hi]]
    k = min(cfg.k_out, hi - lo)
    local, dists = backend.impl.exhaustive_topk(gathered, q, k)
    ids = (local + lo).astype(np.int32)
    visited = hi - lo
    steps = 0
    distinct = (hi - lo) - len(ids)
    forgotten = 0
    term = "queue-empty"
    impl = backend.impl
    for j in range(start - 1, stop_layer - 1, -1):
        bottom_ids = h.rows_for(j + 1)[ids]
        seed_ids = h.local_ids(j, bottom_ids)
        layer = h.layers[j]
        bound = slack_bounds[j] if slack_bounds is not None else _layer_slack_bound(h, j)
        ids, dists, nvis, nsteps, tcode, ndist, nforgot = impl.greedy_search(
            X,
            h.rows_for(j),
            layer.adjacency,
            layer.k_nn,
            layer.sym_count,
            q,
            seed_ids,
            dists,
            cfg.k_out,
            cfg.tau,
            bound,
            cfg.max_iterations,
            cfg.prioq_size,
            cfg.visited_size,
        )
        visited += nvis
        steps += nsteps
        distinct += ndist
        forgotten += nforgot
        term = TERMINATED_BY[tcode]
    return QueryResult(ids, dists, visited, steps, term, distinct, forgotten)


def batch_query(
    h: Hierarchy, queries: np.ndarray, cfg: QueryConfig | None = None, threads: int = 1
) -> list[QueryResult]:
    """Independent queries distributed over a worker pool.

    Results are deterministic regardless of scheduling: no state is shared
    between in-flight queries and the hierarchy is read-only here.
    """
    cfg = cfg or QueryConfig()
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    if threads <= 1:
        return [query(h, qv, cfg) for qv in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda qv: query(h, qv, cfg), queries))


def _check_query(h: Hierarchy, q: np.ndarray) -> np.ndarray:
    q = np.ascontiguousarray(q, dtype=np.float32)
    if q.ndim != 1 or (h.dim and q.shape[0] != h.dim):
        raise ValueError(f"query shape {q.shape} does not match index dimension {h.dim}")
    return q


def _bottom_slack_bound(h: Hierarchy) -> float:
    if h.stats is not None:
        return h.stats.d_nn1_max
    return h.layers[0].live_d_nn1_max()


def _layer_slack_bound(h: Hierarchy, j: int) -> float:
    if j == 0:
        return _bottom_slack_bound(h)
    return h.layers[j].live_d_nn1_max()
