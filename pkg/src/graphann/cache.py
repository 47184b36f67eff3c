"""Per-query search cache: best-list, priority ring and visited ring.

One cache serves one query. It is a single distance-sorted ring whose
first `k_out` entries form the best-list; the unvisited entries form the
priority queue. A separate id ring remembers points that were expanded or
displaced after being visited. A refcount map over both gives the O(1)
is-known test that guards against re-computing distances.

Entries displaced from the sorted ring are handled by state:
unvisited -> forgotten (the id may be re-encountered and re-computed),
visited   -> id pushed onto the visited ring to keep cycles blocked.
Ids overwritten by visited-ring wraparound are forgotten too. `forgotten`
counts these losses; the query-level accounting invariant is
distance_computations <= distinct_ids_touched + forgotten + filter_rejects.
"""

from __future__ import annotations

import numpy as np

_F64 = np.float64
_I32 = np.int32


class SearchCache:
    def __init__(self, k_out: int, prioq_size: int, visited_size: int):
        if k_out < 1 or prioq_size < 1 or visited_size < 1:
            raise ValueError("cache geometry values must be >= 1")
        self.k_out = k_out
        self.capacity = k_out + prioq_size
        self._dists = np.empty(self.capacity, dtype=_F64)
        self._ids = np.empty(self.capacity, dtype=_I32)
        self._vis = np.zeros(self.capacity, dtype=bool)
        self._len = 0
        self._vring = np.empty(visited_size, dtype=_I32)
        self._vsize = visited_size
        self._vlen = 0
        self._vpos = 0
        self._refs: dict[int, int] = {}
        self.forgotten = 0

    def __len__(self) -> int:
        return self._len

    def is_known(self, node: int) -> bool:
        return node in self._refs

    @property
    def d_best_1(self) -> float:
        return float(self._dists[0]) if self._len else float("inf")

    @property
    def d_best_k(self) -> float:
        if self._len < self.k_out:
            return float("inf")
        return float(self._dists[self.k_out - 1])

    def _ref_drop(self, node: int) -> None:
        c = self._refs[node] - 1
        if c == 0:
            del self._refs[node]
            self.forgotten += 1
        else:
            self._refs[node] = c

    def _vring_push(self, node: int) -> None:
        if self._vlen == self._vsize:
            self._ref_drop(int(self._vring[self._vpos]))
            self._vring[self._vpos] = node
            self._vpos = (self._vpos + 1) % self._vsize
        else:
            self._vring[self._vlen] = node
            self._vlen += 1
        self._refs[node] = self._refs.get(node, 0) + 1

    def insert(self, node: int, dist: float) -> None:
        """Place an unknown candidate by ascending (distance, id).

        The caller pre-filters through `is_known`; inserting a known id is
        a bug on the caller's side.
        """
        if node in self._refs:
            raise ValueError(f"id {node} is already known to this cache")
        pos = self._search(dist, node)
        if self._len == self.capacity:
            if pos == self.capacity:
                self.forgotten += 1  # worse than the current tail: never admitted
                return
            tail = self.capacity - 1
            tail_id = int(self._ids[tail])
            if self._vis[tail]:
                self._vring_push(tail_id)
            self._ref_drop(tail_id)
        else:
            self._len += 1
        end = self._len - 1
        self._dists[pos + 1 : end + 1] = self._dists[pos:end]
        self._ids[pos + 1 : end + 1] = self._ids[pos:end]
        self._vis[pos + 1 : end + 1] = self._vis[pos:end]
        self._dists[pos] = dist
        self._ids[pos] = node
        self._vis[pos] = False
        self._refs[node] = self._refs.get(node, 0) + 1

    def _search(self, dist: float, node: int) -> int:
        lo, hi = 0, self._len
        while lo < hi:
            mid = (lo + hi) // 2
            if (self._dists[mid], self._ids[mid]) <= (dist, node):
                lo = mid + 1
            else:
                hi = mid
        return lo

    def peek_best(self) -> tuple[int, int, float] | None:
        """(position, id, dist) of the closest unvisited entry, or None."""
        for i in range(self._len):
            if not self._vis[i]:
                return i, int(self._ids[i]), float(self._dists[i])
        return None

    def mark_visited(self, pos: int) -> None:
        self._vis[pos] = True
        self._vring_push(int(self._ids[pos]))

    def pop_best(self) -> tuple[int, float] | None:
        """Take the closest unvisited candidate and mark it visited.

        Returns None when every known candidate has been expanded.
        """
        found = self.peek_best()
        if found is None:
            return None
        pos, node, dist = found
        self.mark_visited(pos)
        return node, dist

    def best(self) -> list[tuple[int, float]]:
        """The up-to-k_out closest entries seen so far, ascending."""
        m = min(self._len, self.k_out)
        return [(int(self._ids[i]), float(self._dists[i])) for i in range(m)]
