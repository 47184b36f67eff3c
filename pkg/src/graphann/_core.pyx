# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled hot kernels: distances, exhaustive scans, the greedy search.

Semantics match graphann._purepy exactly; float32 vectors, float64
accumulation, ties by ascending id. The greedy loop runs without the GIL
so query batches scale across threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fmin

cnp.import_array()

ctypedef cnp.float32_t f32
ctypedef cnp.float64_t f64
ctypedef cnp.int32_t i32
ctypedef cnp.uint8_t u8

TERM_STOPPING = 0
TERM_QUEUE_EMPTY = 1
TERM_ITERATION_CAP = 2

cdef int _STOP = 0
cdef int _EMPTY = 1
cdef int _CAP = 2


cdef inline double _sqdist(const f32* a, const f32* b, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0
    cdef double diff
    cdef Py_ssize_t i
    for i in range(d):
        diff = <double> a[i] - <double> b[i]
        acc += diff * diff
    return acc


def squared_l2(const f32[::1] a, const f32[::1] b):
    if a.shape[0] != b.shape[0]:
        raise ValueError("vector lengths differ")
    return _sqdist(&a[0], &b[0], a.shape[0])


def squared_l2_many(const f32[::1] q, const f32[:, ::1] X, const i32[::1] rows):
    cdef Py_ssize_t m = rows.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    out_arr = np.empty(m, dtype=np.float64)
    cdef f64[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(m):
            out[i] = _sqdist(&q[0], &X[rows[i], 0], d)
    return out_arr


cdef inline int _topk_search(const f64* dist, const i32* ids, int length, double d, int node) noexcept nogil:
    # first index whose (dist, id) sorts after (d, node)
    cdef int lo = 0, hi = length, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if dist[mid] < d or (dist[mid] == d and ids[mid] <= node):
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline int _topk_insert(f64* dist, i32* ids, int length, int cap, double d, int node) noexcept nogil:
    # sorted bounded insert; returns the new length
    cdef int pos = _topk_search(dist, ids, length, d, node)
    cdef int i
    if length == cap:
        if pos == cap:
            return length
        length -= 1
    for i in range(length, pos, -1):
        dist[i] = dist[i - 1]
        ids[i] = ids[i - 1]
    dist[pos] = d
    ids[pos] = node
    return length + 1


def exhaustive_topk(const f32[:, ::1] X, const f32[::1] q, int k):
    """Exact top-k of q against every row of X; ties by ascending row id."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    if k > n:
        k = <int> n
    ids_arr = np.empty(k, dtype=np.int32)
    dist_arr = np.empty(k, dtype=np.float64)
    cdef i32[::1] ids = ids_arr
    cdef f64[::1] dist = dist_arr
    cdef int length = 0
    cdef Py_ssize_t i
    cdef double dv
    with nogil:
        for i in range(n):
            dv = _sqdist(&q[0], &X[i, 0], d)
            if length < k or dv < dist[length - 1] or (dv == dist[length - 1] and <int> i < ids[length - 1]):
                length = _topk_insert(&dist[0], &ids[0], length, k, dv, <int> i)
    return ids_arr, dist_arr


def batch_bruteforce(const f32[:, ::1] X, const i32[::1] member_rows, int k_nn):
    """Exact within-batch kNN lists; returns positions into member_rows."""
    cdef Py_ssize_t m = member_rows.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef int k_eff = k_nn if k_nn < m - 1 else <int> (m - 1)
    pos_arr = np.full((m, k_nn), -1, dtype=np.int32)
    dist_arr = np.full((m, k_nn), np.inf, dtype=np.float64)
    cdef i32[:, ::1] pos = pos_arr
    cdef f64[:, ::1] dist = dist_arr
    cdef Py_ssize_t i, j
    cdef int length
    cdef double dv
    if k_eff <= 0:
        return pos_arr, dist_arr
    with nogil:
        for i in range(m):
            length = 0
            for j in range(m):
                if j == i:
                    continue
                dv = _sqdist(&X[member_rows[i], 0], &X[member_rows[j], 0], d)
                if length < k_eff or dv < dist[i, length - 1] or (dv == dist[i, length - 1] and <int> j < pos[i, length - 1]):
                    length = _topk_insert(&dist[i, 0], &pos[i, 0], length, k_eff, dv, <int> j)
    return pos_arr, dist_arr


# --- combined best-list / priority ring ------------------------------------

cdef inline void _vring_push(i32* vring, int vsize, int* vlen, int* vpos,
                             u8* counts, long* forgotten, int node) noexcept nogil:
    cdef int old
    if vlen[0] == vsize:
        old = vring[vpos[0]]
        counts[old] -= 1
        if counts[old] == 0:
            forgotten[0] += 1
        vring[vpos[0]] = node
        vpos[0] = (vpos[0] + 1) % vsize
    else:
        vring[vlen[0]] = node
        vlen[0] += 1
    counts[node] += 1


cdef inline void _ring_insert(f64* rdist, i32* rid, u8* rvis, int cap, int* rlen,
                              i32* vring, int vsize, int* vlen, int* vpos,
                              u8* counts, long* forgotten,
                              double d, int node) noexcept nogil:
    cdef int pos = _topk_search(rdist, rid, rlen[0], d, node)
    cdef int tail_id, i
    if rlen[0] == cap:
        if pos == cap:
            forgotten[0] += 1  # worse than the tail of a full ring: never admitted
            return
        tail_id = rid[cap - 1]
        if rvis[cap - 1]:
            _vring_push(vring, vsize, vlen, vpos, counts, forgotten, tail_id)
        counts[tail_id] -= 1
        if counts[tail_id] == 0:
            forgotten[0] += 1
    else:
        rlen[0] += 1
    for i in range(rlen[0] - 1, pos, -1):
        rdist[i] = rdist[i - 1]
        rid[i] = rid[i - 1]
        rvis[i] = rvis[i - 1]
    rdist[pos] = d
    rid[pos] = node
    rvis[pos] = 0
    counts[node] += 1


cdef struct _SearchState:
    int rlen
    int vlen
    int vpos
    long visited_count
    long steps
    long distinct
    long forgotten
    int term


cdef void _greedy_core(const f32[:, ::1] X, const i32[::1] to_row,
                       const i32[:, ::1] adj, int k_nn, const i32[::1] sym_count,
                       const f32[::1] q,
                       const i32[::1] seed_ids, const f64[::1] seed_dists,
                       int k_out, double tau, double d_nn1_max,
                       long max_iterations, int target, long budget,
                       f64* rdist, i32* rid, u8* rvis, int cap,
                       i32* vring, int vsize,
                       u8* counts, u8* ever, i32* touched,
                       f64* cand_d, i32* cand_id,
                       _SearchState* st) noexcept nogil:
    """Shared greedy loop. target >= 0 turns on found-target mode (the
    search stops as soon as `target` enters the cache; st.term is 1 when
    found). budget caps expansions in that mode. When `touched` is not
    NULL every first-touched id is appended there (st.distinct of them) so
    callers can reset the scratch arrays cheaply."""
    cdef Py_ssize_t d = X.shape[1]
    cdef int i, j, pos, node, nb, m, found
    cdef double dv, thr, dhead

    st.rlen = 0
    st.vlen = 0
    st.vpos = 0
    st.visited_count = 0
    st.steps = 0
    st.distinct = 0
    st.forgotten = 0
    st.term = _EMPTY

    for i in range(<int> seed_ids.shape[0]):
        node = seed_ids[i]
        if counts[node] > 0:
            continue
        _ring_insert(rdist, rid, rvis, cap, &st.rlen, vring, vsize, &st.vlen, &st.vpos,
                     counts, &st.forgotten, seed_dists[i], node)
        if ever[node] == 0:
            ever[node] = 1
            if touched != NULL:
                touched[st.distinct] = node
            st.distinct += 1

    found = 0
    while True:
        pos = -1
        for i in range(st.rlen):
            if rvis[i] == 0:
                pos = i
                break
        if pos < 0:
            st.term = _EMPTY
            break
        dhead = rdist[pos]
        thr = INFINITY
        if st.rlen >= k_out:
            thr = rdist[k_out - 1] + tau * fmin(d_nn1_max, rdist[0])
        if dhead > thr:
            st.term = _STOP
            break
        if target >= 0:
            if st.steps >= budget:
                st.term = _CAP
                break
        elif st.steps >= max_iterations:
            st.term = _CAP
            break
        node = rid[pos]
        rvis[pos] = 1
        _vring_push(vring, vsize, &st.vlen, &st.vpos, counts, &st.forgotten, node)

        m = 0
        for j in range(k_nn + sym_count[node]):
            if j >= k_nn:
                nb = adj[node, k_nn + (j - k_nn)]
            else:
                nb = adj[node, j]
                if nb < 0:
                    continue
            if counts[nb] > 0:
                continue
            found = 0
            for i in range(m):
                if cand_id[i] == nb:
                    found = 1
                    break
            if found:
                continue
            dv = _sqdist(&q[0], &X[to_row[nb], 0], d)
            st.visited_count += 1
            if ever[nb] == 0:
                ever[nb] = 1
                if touched != NULL:
                    touched[st.distinct] = nb
                st.distinct += 1
            cand_d[m] = dv
            cand_id[m] = nb
            m += 1
        # insertion sort by (dist, id)
        for i in range(1, m):
            dv = cand_d[i]
            nb = cand_id[i]
            j = i - 1
            while j >= 0 and (cand_d[j] > dv or (cand_d[j] == dv and cand_id[j] > nb)):
                cand_d[j + 1] = cand_d[j]
                cand_id[j + 1] = cand_id[j]
                j -= 1
            cand_d[j + 1] = dv
            cand_id[j + 1] = nb
        found = 0
        for i in range(m):
            if cand_d[i] <= thr:
                _ring_insert(rdist, rid, rvis, cap, &st.rlen, vring, vsize, &st.vlen, &st.vpos,
                             counts, &st.forgotten, cand_d[i], cand_id[i])
                if cand_id[i] == target:
                    found = 1
            else:
                st.forgotten += 1
        st.steps += 1
        if found:
            st.term = 1
            return
    if target >= 0:
        st.term = 0


def greedy_search(const f32[:, ::1] X, const i32[::1] to_row,
                  const i32[:, ::1] adj, int k_nn, const i32[::1] sym_count,
                  const f32[::1] q,
                  const i32[::1] seed_ids, const f64[::1] seed_dists,
                  int k_out, double tau, double d_nn1_max,
                  long max_iterations, int prioq_size, int visited_size):
    cdef int cap = k_out + prioq_size
    cdef Py_ssize_t nc = adj.shape[0]
    rdist_arr = np.empty(cap, dtype=np.float64)
    rid_arr = np.empty(cap, dtype=np.int32)
    rvis_arr = np.zeros(cap, dtype=np.uint8)
    vring_arr = np.empty(visited_size, dtype=np.int32)
    counts_arr = np.zeros(nc, dtype=np.uint8)
    ever_arr = np.zeros(nc, dtype=np.uint8)
    cand_d_arr = np.empty(adj.shape[1], dtype=np.float64)
    cand_id_arr = np.empty(adj.shape[1], dtype=np.int32)
    cdef f64[::1] rdist = rdist_arr
    cdef i32[::1] rid = rid_arr
    cdef u8[::1] rvis = rvis_arr
    cdef i32[::1] vring = vring_arr
    cdef u8[::1] counts = counts_arr
    cdef u8[::1] ever = ever_arr
    cdef f64[::1] cand_d = cand_d_arr
    cdef i32[::1] cand_id = cand_id_arr
    cdef _SearchState st
    with nogil:
        _greedy_core(X, to_row, adj, k_nn, sym_count, q, seed_ids, seed_dists,
                     k_out, tau, d_nn1_max, max_iterations, -1, 0,
                     &rdist[0], &rid[0], &rvis[0], cap, &vring[0], visited_size,
                     &counts[0], &ever[0], NULL, &cand_d[0], &cand_id[0], &st)
    cdef int nhits = st.rlen if st.rlen < k_out else k_out
    return (
        rid_arr[:nhits].copy(),
        rdist_arr[:nhits].copy(),
        st.visited_count,
        st.steps,
        st.term,
        st.distinct,
        st.forgotten,
    )


class SymScratch:
    """Reusable buffers for a symmetrize pass (one per worker thread)."""

    def __init__(self, node_count, k_total, cap, visited_size, budget, n_fallback):
        self.rdist = np.empty(cap, dtype=np.float64)
        self.rid = np.empty(cap, dtype=np.int32)
        self.rvis = np.zeros(cap, dtype=np.uint8)
        self.vring = np.empty(visited_size, dtype=np.int32)
        self.counts = np.zeros(node_count, dtype=np.uint8)
        self.ever = np.zeros(node_count, dtype=np.uint8)
        self.cand_d = np.empty(k_total, dtype=np.float64)
        self.cand_id = np.empty(k_total, dtype=np.int32)
        # every touched id is appended once; one expansion touches <= k ids
        self.touched = np.empty(1 + (budget + 1) * k_total, dtype=np.int32)
        self.fb = np.full(n_fallback, -1, dtype=np.int32)
        self.seed_id = np.empty(1, dtype=np.int32)
        self.seed_dist = np.empty(1, dtype=np.float64)


def sym_check_pair(const f32[:, ::1] X, const i32[::1] to_row,
                   const i32[:, ::1] adj, int k_nn, const i32[::1] sym_count,
                   int x, int z, double d_xz,
                   double tau, double d_nn1_max,
                   long budget, int k_out, int prioq_size, int visited_size,
                   int n_fallback, scratch):
    """Reachability check for one inverse-link candidate.

    Returns (verdict, fallback_ids): 0 when x already sits in z's slots,
    1 when a budgeted greedy search from z toward x's vector reaches x
    inside the slack margin, 2 when an inverse link is needed (fallback
    then holds the closest explored candidates, -1 padded).
    """
    cdef int cap = k_out + prioq_size
    cdef f64[::1] rdist = scratch.rdist
    cdef i32[::1] rid = scratch.rid
    cdef u8[::1] rvis = scratch.rvis
    cdef i32[::1] vring = scratch.vring
    cdef u8[::1] counts = scratch.counts
    cdef u8[::1] ever = scratch.ever
    cdef f64[::1] cand_d = scratch.cand_d
    cdef i32[::1] cand_id = scratch.cand_id
    cdef i32[::1] touched = scratch.touched
    cdef i32[::1] fb = scratch.fb
    cdef i32[::1] seed_id = scratch.seed_id
    cdef f64[::1] seed_dist = scratch.seed_dist
    cdef const f32[::1] q = X[to_row[x]]
    cdef _SearchState st
    cdef int j, node, m
    cdef int wrote = 0
    cdef int verdict = 0
    cdef bint present = False
    seed_id[0] = z
    seed_dist[0] = d_xz
    with nogil:
        for j in range(k_nn + sym_count[z]):
            if adj[z, j] == x:
                present = True
                break
        if not present:
            _greedy_core(X, to_row, adj, k_nn, sym_count, q, seed_id, seed_dist,
                         k_out, tau, d_nn1_max, 0, x, budget,
                         &rdist[0], &rid[0], &rvis[0], cap, &vring[0], visited_size,
                         &counts[0], &ever[0], &touched[0], &cand_d[0], &cand_id[0], &st)
            verdict = 1 if st.term else 2
            if verdict == 2:
                m = st.rlen if st.rlen < k_out else k_out
                for j in range(m):
                    node = rid[j]
                    if node != x and node != z and wrote < n_fallback:
                        fb[wrote] = node
                        wrote += 1
            for j in range(wrote, n_fallback):
                fb[j] = -1
            # reset scratch for the next check
            for j in range(<int> st.distinct):
                counts[touched[j]] = 0
                ever[touched[j]] = 0
            for j in range(cap):
                rvis[j] = 0
    return verdict, scratch.fb
