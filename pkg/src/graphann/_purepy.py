"""Pure numpy/Python fallback for the compiled kernels.

Semantics mirror graphann._core exactly: float32 vectors, float64
accumulation, ties broken by ascending id everywhere. Every distance in
this backend goes through `_row_dists` so that stored and recomputed
values agree bitwise.

Termination codes shared with the compiled module:
0 = stopping rule, 1 = queue exhausted, 2 = iteration cap.
"""

from __future__ import annotations

import numpy as np

from .cache import SearchCache

TERM_STOPPING = 0
TERM_QUEUE_EMPTY = 1
TERM_ITERATION_CAP = 2

_INF = float("inf")


def _row_dists(q: np.ndarray, rows: np.ndarray) -> np.ndarray:
    diff = rows.astype(np.float64) - q.astype(np.float64)
    return (diff * diff).sum(axis=1)


def squared_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(_row_dists(a, b[None, :])[0])


def squared_l2_many(q: np.ndarray, X: np.ndarray, rows: np.ndarray) -> np.ndarray:
    return _row_dists(q, X[rows])


def exhaustive_topk(X: np.ndarray, q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact top-k of q against every row of X; ties by ascending row id."""
    d = _row_dists(q, X)
    k = min(k, X.shape[0])
    order = np.argsort(d, kind="stable")[:k]
    return order.astype(np.int32), d[order]


def batch_bruteforce(
    X: np.ndarray, member_rows: np.ndarray, k_nn: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exact kNN lists within a member set.

    Returns (positions, dists) of shape (m, k_nn); positions index into
    `member_rows`, unused slots hold -1 / inf when the set is smaller than
    k_nn + 1.
    """
    member_rows = np.asarray(member_rows, dtype=np.int32)
    m = member_rows.shape[0]
    rows = X[member_rows]
    out_pos = np.full((m, k_nn), -1, dtype=np.int32)
    out_d = np.full((m, k_nn), _INF, dtype=np.float64)
    k_eff = min(k_nn, m - 1)
    for i in range(m):
        d = _row_dists(rows[i], rows)
        d[i] = _INF  # no self-loop
        order = np.argsort(d, kind="stable")[:k_eff]
        out_pos[i, :k_eff] = order
        out_d[i, :k_eff] = d[order]
    return out_pos, out_d


def _neighbor_ids(adj: np.ndarray, k_nn: int, sym_count: np.ndarray, node: int) -> list[int]:
    row = adj[node]
    out = [int(row[j]) for j in range(k_nn) if row[j] >= 0]
    out.extend(int(row[k_nn + j]) for j in range(int(sym_count[node])))
    return out


def greedy_search(
    X: np.ndarray,
    to_row: np.ndarray,
    adj: np.ndarray,
    k_nn: int,
    sym_count: np.ndarray,
    q: np.ndarray,
    seed_ids: np.ndarray,
    seed_dists: np.ndarray,
    k_out: int,
    tau: float,
    d_nn1_max: float,
    max_iterations: int,
    prioq_size: int,
    visited_size: int,
):
    """Greedy downhill graph search with backtracking; see search.greedy_search."""
    cache = SearchCache(k_out, prioq_size, visited_size)
    ever: set[int] = set()
    for sid, sd in zip(seed_ids, seed_dists):
        sid = int(sid)
        if not cache.is_known(sid):
            cache.insert(sid, float(sd))
            ever.add(sid)

    visited_count = 0
    steps = 0
    rejects = 0
    term = TERM_QUEUE_EMPTY
    while True:
        head = cache.peek_best()
        if head is None:
            term = TERM_QUEUE_EMPTY
            break
        pos, node, dist = head
        thr = _INF
        if len(cache) >= k_out:
            thr = cache.d_best_k + tau * min(d_nn1_max, cache.d_best_1)
        if dist > thr:
            term = TERM_STOPPING
            break
        if steps >= max_iterations:
            term = TERM_ITERATION_CAP
            break
        cache.mark_visited(pos)
        cands: list[tuple[float, int]] = []
        seen_here: set[int] = set()
        for nb in _neighbor_ids(adj, k_nn, sym_count, node):
            if nb in seen_here or cache.is_known(nb):
                continue
            seen_here.add(nb)
            dval = float(_row_dists(q, X[to_row[nb]][None, :])[0])
            visited_count += 1
            ever.add(nb)
            cands.append((dval, nb))
        cands.sort()
        for dval, nb in cands:
            if dval <= thr:
                cache.insert(nb, dval)
            else:
                rejects += 1
        steps += 1

    hits = cache.best()
    hit_ids = np.array([h[0] for h in hits], dtype=np.int32)
    hit_dists = np.array([h[1] for h in hits], dtype=np.float64)
    return (
        hit_ids,
        hit_dists,
        visited_count,
        steps,
        term,
        len(ever),
        cache.forgotten + rejects,
    )


class SymScratch:
    """Interface twin of the compiled per-thread scratch; holds only the
    fallback buffer here."""

    def __init__(self, node_count, k_total, cap, visited_size, budget, n_fallback):
        self.fb = np.full(n_fallback, -1, dtype=np.int32)


def sym_check_pair(
    X: np.ndarray,
    to_row: np.ndarray,
    adj: np.ndarray,
    k_nn: int,
    sym_count: np.ndarray,
    x: int,
    z: int,
    d_xz: float,
    tau: float,
    d_nn1_max: float,
    budget: int,
    k_out: int,
    prioq_size: int,
    visited_size: int,
    n_fallback: int,
    scratch: SymScratch,
):
    """Reachability check for one inverse-link candidate.

    Verdict 0 when x already sits in z's slots, 1 when a budgeted greedy
    search from z toward x's vector reaches x inside the slack margin,
    2 when an inverse link is needed; the returned fallback buffer (shared
    with later calls) then holds the closest explored candidates.
    """
    scratch.fb[:] = -1
    row = adj[z, : k_nn + int(sym_count[z])]
    if (row == x).any():
        return 0, scratch.fb
    q = X[to_row[x]]
    cache = SearchCache(k_out, prioq_size, visited_size)
    cache.insert(z, float(d_xz))
    found = False
    steps = 0
    while not found:
        head = cache.peek_best()
        if head is None:
            break
        pos, node, dist = head
        thr = _INF
        if len(cache) >= k_out:
            thr = cache.d_best_k + tau * min(d_nn1_max, cache.d_best_1)
        if dist > thr:
            break
        if steps >= budget:
            break
        cache.mark_visited(pos)
        cands: list[tuple[float, int]] = []
        seen_here: set[int] = set()
        for nb in _neighbor_ids(adj, k_nn, sym_count, node):
            if nb in seen_here or cache.is_known(nb):
                continue
            seen_here.add(nb)
            dval = float(_row_dists(q, X[to_row[nb]][None, :])[0])
            cands.append((dval, nb))
        cands.sort()
        for dval, nb in cands:
            if dval <= thr:
                cache.insert(nb, dval)
                if nb == x:
                    found = True
        steps += 1
    if found:
        return 1, scratch.fb
    fb = [nid for nid, _ in cache.best() if nid != x and nid != z][:n_fallback]
    scratch.fb[: len(fb)] = fb
    return 2, scratch.fb
