"""Fixed-degree layered adjacency storage.

Each layer keeps, per node, k id slots: the first k_nn hold the nearest
neighbors found so far sorted by ascending (distance, id), the remaining
k_sym hold inverse links claimed one by one. -1 marks an empty slot.

Concurrency: build phases write direct slots node-partitioned without
coordination; claiming an inverse slot is the only cross-node write and
goes through a per-layer lock. Between phases a join acts as the
publication barrier; queries only read published layers.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .config import BuildConfig
from .data import Dataset

SENTINEL = -1


@dataclass(frozen=True)
class GraphStats:
    """Bottom-layer first-neighbor distance statistics (squared space).

    d_nn1_max bounds the stopping-rule slack globally.
    """

    d_nn1_mean: float
    d_nn1_max: float


class AdjacencyLayer:
    def __init__(self, node_count: int, k: int, k_nn: int):
        if not (1 <= k_nn <= k):
            raise ValueError(f"need 1 <= k_nn <= k, got k_nn={k_nn} k={k}")
        self.node_count = node_count
        self.k = k
        self.k_nn = k_nn
        self.k_sym = k - k_nn
        self.adjacency = np.full((node_count, k), SENTINEL, dtype=np.int32)
        self.nn_dists = np.full((node_count, k_nn), np.inf, dtype=np.float64)
        self.sym_count = np.zeros(node_count, dtype=np.int32)
        self.d_nn1 = np.full(node_count, np.inf, dtype=np.float64)
        self._sym_lock = threading.Lock()

    def __getstate__(self):
        state = self.__dict__.copy()
        del state["_sym_lock"]  # locks are per-process
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._sym_lock = threading.Lock()

    def _check_node(self, node: int) -> None:
        if not (0 <= node < self.node_count):
            raise IndexError(f"node {node} out of range [0, {self.node_count})")

    def direct_count(self, node: int) -> int:
        row = self.adjacency[node, : self.k_nn]
        return int((row != SENTINEL).sum())

    def neighbors(self, node: int) -> np.ndarray:
        """Direct slots first (non-empty ones), then the used inverse slots."""
        self._check_node(node)
        row = self.adjacency[node]
        direct = row[: self.k_nn]
        direct = direct[direct != SENTINEL]
        sym = row[self.k_nn : self.k_nn + int(self.sym_count[node])]
        return np.concatenate([direct, sym])

    def insert_nn(self, node: int, candidate: int, dist: float):
        """Sorted insert into the direct slots; ties break by ascending id.

        Returns (improved, evicted) where evicted is the displaced
        (id, dist) pair, surfaced so the symmetrize pass can re-examine it,
        or None. A candidate currently parked in an inverse slot is moved
        rather than duplicated.
        """
        self._check_node(node)
        self._check_node(candidate)
        if candidate == node:
            raise ValueError("a node cannot neighbor itself")
        row = self.adjacency[node]
        k_nn = self.k_nn
        dists = self.nn_dists[node]
        for j in range(k_nn):
            if row[j] == candidate:
                return False, None
        last_id = int(row[k_nn - 1])
        if last_id != SENTINEL and (dist, candidate) >= (float(dists[k_nn - 1]), last_id):
            return False, None

        sym_n = int(self.sym_count[node])
        for j in range(sym_n):
            if row[k_nn + j] == candidate:
                row[k_nn + j : k_nn + sym_n - 1] = row[k_nn + j + 1 : k_nn + sym_n]
                row[k_nn + sym_n - 1] = SENTINEL
                self.sym_count[node] = sym_n - 1
                break

        evicted = None
        if last_id != SENTINEL:
            evicted = (last_id, float(dists[k_nn - 1]))
        pos = 0
        while pos < k_nn and row[pos] != SENTINEL and (float(dists[pos]), int(row[pos])) <= (dist, candidate):
            pos += 1
        row[pos + 1 : k_nn] = row[pos : k_nn - 1]
        dists[pos + 1 :] = dists[pos : k_nn - 1]
        row[pos] = candidate
        dists[pos] = dist
        if pos == 0:
            self.d_nn1[node] = dist
        return True, evicted

    def merge_hits(self, node: int, hit_ids: np.ndarray, hit_dists: np.ndarray):
        """Apply a batch of query hits to one node's direct slots.

        Equivalent to insert_nn over the hits in ascending order: the
        direct slots end up holding the k_nn smallest (distance, id) pairs
        of the union, hits already parked in inverse slots move over, and
        the displaced former neighbors are returned for re-examination.
        """
        k_nn = self.k_nn
        row = self.adjacency[node]
        dvec = self.nn_dists[node]
        row_list = row.tolist()
        d_list = dvec.tolist()
        cur = []
        cur_ids = set()
        for j in range(k_nn):
            if row_list[j] == SENTINEL:
                break
            cur.append((d_list[j], row_list[j]))
            cur_ids.add(row_list[j])
        merged = cur + [
            (float(d), int(i)) for i, d in zip(hit_ids.tolist(), hit_dists.tolist()) if i not in cur_ids
        ]
        if len(merged) == len(cur):
            return []
        merged.sort()
        new = merged[:k_nn]
        chosen = set(i for _, i in new)
        if chosen == cur_ids and len(new) == len(cur):
            return []
        evicted = [(i, d) for d, i in cur if i not in chosen]
        sym_n = int(self.sym_count[node])
        if sym_n:
            kept = [i for i in row_list[k_nn : k_nn + sym_n] if i not in chosen]
            if len(kept) != sym_n:
                row[k_nn : k_nn + len(kept)] = kept
                row[k_nn + len(kept) : k_nn + sym_n] = SENTINEL
                self.sym_count[node] = len(kept)
        nf2 = len(new)
        row[:nf2] = [i for _, i in new]
        row[nf2:k_nn] = SENTINEL
        dvec[:nf2] = [d for d, _ in new]
        dvec[nf2:] = np.inf
        self.d_nn1[node] = new[0][0]
        return evicted

    def reserve_sym_slot(self, node: int, candidate: int) -> bool:
        """Atomically claim the next inverse slot of `node` for `candidate`.

        Returns False when the budget is spent or the candidate already
        occupies any slot; under concurrent callers no slot is assigned
        twice and sym_count never exceeds k_sym.
        """
        self._check_node(node)
        self._check_node(candidate)
        if candidate == node:
            raise ValueError("a node cannot link to itself")
        with self._sym_lock:
            used = int(self.sym_count[node])
            if used >= self.k_sym:
                return False
            row = self.adjacency[node]
            for j in range(self.k_nn):
                if row[j] == candidate:
                    return False
            for j in range(used):
                if row[self.k_nn + j] == candidate:
                    return False
            row[self.k_nn + used] = candidate
            self.sym_count[node] = used + 1
            return True

    def refresh_d_nn1(self) -> None:
        self.d_nn1[:] = self.nn_dists[:, 0]

    def live_d_nn1_max(self) -> float:
        """Largest finite first-neighbor distance, 0.0 before any links."""
        vals = self.d_nn1[np.isfinite(self.d_nn1)]
        return float(vals.max()) if vals.size else 0.0


class Hierarchy:
    """Stack of adjacency layers, bottom (index 0, full dataset) to top.

    Coarse layers replicate a subset of the points; `to_bottom[j]` maps
    layer-j local ids to dataset ids (identity at the bottom, stored as
    None). Segment offsets only matter while building and are not
    persisted.
    """

    def __init__(
        self,
        layers: list[AdjacencyLayer],
        to_bottom: list[np.ndarray | None],
        s: int,
        g: int,
        config: BuildConfig,
        stats: GraphStats | None = None,
        dim: int = 0,
    ):
        if len(to_bottom) != len(layers):
            raise ValueError("one translation entry per layer expected")
        if to_bottom[0] is not None:
            raise ValueError("bottom layer translation must be None (identity)")
        self.layers = layers
        self.to_bottom = to_bottom
        self.s = s
        self.g = g
        self.config = config
        self.stats = stats
        self.dim = dim
        self.dataset: Dataset | None = None
        # transient construction bookkeeping, not persisted
        self.layer_offsets: list[np.ndarray] | None = None
        self.bottom_perm: np.ndarray | None = None
        self.bottom_segment_of: np.ndarray | None = None
        self._identity: np.ndarray | None = None
        self._inverse: dict[int, np.ndarray] = {}

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def n(self) -> int:
        return self.layers[0].node_count

    @property
    def bottom_batches(self) -> int:
        """Number of bottom-layer batches under the (s, g) geometry."""
        return self.g ** (self.num_layers - 1)

    def attach(self, dataset: Dataset) -> "Hierarchy":
        if dataset.n != self.n:
            raise ValueError(f"dataset has {dataset.n} vectors, index was built over {self.n}")
        if self.dim and dataset.d != self.dim:
            raise ValueError(f"dataset dimension {dataset.d} != index dimension {self.dim}")
        self.dataset = dataset
        self.dim = dataset.d
        return self

    def vectors(self) -> np.ndarray:
        if self.dataset is None:
            raise RuntimeError("no dataset attached; call attach() after loading an index")
        return self.dataset.vectors

    def rows_for(self, layer_index: int) -> np.ndarray:
        """Layer-local id -> dataset row translation as a dense array."""
        t = self.to_bottom[layer_index]
        if t is not None:
            return t
        if self._identity is None:
            self._identity = np.arange(self.n, dtype=np.int32)
        return self._identity

    def local_ids(self, layer_index: int, bottom_ids: np.ndarray) -> np.ndarray:
        """Translate dataset ids to layer-local ids (-1 where absent)."""
        if layer_index == 0:
            return np.asarray(bottom_ids, dtype=np.int32)
        inv = self._inverse.get(layer_index)
        if inv is None:
            inv = np.full(self.n, SENTINEL, dtype=np.int32)
            t = self.to_bottom[layer_index]
            inv[t] = np.arange(len(t), dtype=np.int32)
            self._inverse[layer_index] = inv
        return inv[np.asarray(bottom_ids, dtype=np.int32)]

    def invalidate_caches(self) -> None:
        self._inverse.clear()
