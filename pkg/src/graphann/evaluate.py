"""Brute-force ground truth and quality metrics.

The oracle is the reference everything else is judged against: an
exhaustive scan per query with ties broken by ascending id. Two recall
conventions exist in the literature, so both are provided under explicit
names: `recall_at` counts the single true nearest neighbor inside the
first k answers (relevant here because reported distances are exact: the
true neighbor is either ranked first or missed outright), while
`k_recall_at` measures top-k overlap.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import backend
from .data import Dataset
from .graph import SENTINEL, AdjacencyLayer


@dataclass(frozen=True)
class GroundTruth:
    """Per-query exhaustive top-k ids and distances, ascending."""

    ids: np.ndarray  # (m, k_gt) int32
    dists: np.ndarray  # (m, k_gt) float64


def brute_force_oracle(
    dataset: Dataset, queries: np.ndarray, k_gt: int, threads: int = 1
) -> GroundTruth:
    """Exhaustive top-k_gt scan for every query."""
    if k_gt > dataset.n:
        raise ValueError(f"k_gt={k_gt} exceeds dataset size {dataset.n}")
    queries = np.ascontiguousarray(queries, dtype=np.float32)
    if queries.ndim == 1:
        queries = queries[None, :]
    if queries.shape[1] != dataset.d:
        raise ValueError(f"query dimension {queries.shape[1]} != dataset dimension {dataset.d}")
    X = dataset.vectors
    m = queries.shape[0]
    ids = np.empty((m, k_gt), dtype=np.int32)
    dists = np.empty((m, k_gt), dtype=np.float64)

    def scan(i: int) -> None:
        ids[i], dists[i] = backend.impl.exhaustive_topk(X, queries[i], k_gt)

    if threads <= 1:
        for i in range(m):
            scan(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(scan, range(m)))
    return GroundTruth(ids, dists)


def recall_at(result_ids: np.ndarray, gt_first: np.ndarray, k: int) -> float:
    """R@k: fraction of queries whose true nearest neighbor appears in the
    first k proposed ids.

    `gt_first` is the id of the exact nearest neighbor per query (column 0
    of an oracle table).
    """
    result_ids = np.asarray(result_ids)
    gt_first = np.asarray(gt_first).reshape(-1)
    if result_ids.shape[0] != gt_first.shape[0]:
        raise ValueError(
            f"results cover {result_ids.shape[0]} queries, ground truth {gt_first.shape[0]}"
        )
    hits = sum(
        1 for i in range(len(gt_first)) if gt_first[i] in result_ids[i, :k]
    )
    return hits / len(gt_first)


def k_recall_at(result_ids: np.ndarray, gt_ids: np.ndarray, k: int) -> float:
    """Top-k overlap |proposed_k ∩ exact_k| / k, averaged over queries."""
    result_ids = np.asarray(result_ids)
    gt_ids = np.asarray(gt_ids)
    if result_ids.shape[0] != gt_ids.shape[0]:
        raise ValueError("query count mismatch between results and ground truth")
    if gt_ids.shape[1] < k:
        raise ValueError(f"ground truth holds {gt_ids.shape[1]} ids per query, need {k}")
    total = 0.0
    for i in range(result_ids.shape[0]):
        total += len(set(result_ids[i, :k].tolist()) & set(gt_ids[i, :k].tolist())) / k
    return total / result_ids.shape[0]


def oracle_knn_graph(dataset: Dataset, k: int, threads: int = 1) -> np.ndarray:
    """Exact k nearest neighbors of every dataset point (self excluded)."""
    gt = brute_force_oracle(dataset, dataset.vectors, k + 1, threads=threads)
    out = np.empty((dataset.n, k), dtype=np.int32)
    for i in range(dataset.n):
        row = [int(x) for x in gt.ids[i] if int(x) != i]
        out[i] = row[:k]
    return out


def consensus_at_k(layer: AdjacencyLayer, oracle_ids: np.ndarray, k: int) -> float:
    """C@k: average overlap between stored and exact k-neighbor lists."""
    if k > layer.k_nn:
        raise ValueError(f"k={k} exceeds the stored neighbor count k_nn={layer.k_nn}")
    if oracle_ids.shape[0] != layer.node_count:
        raise ValueError("oracle graph and layer cover different node sets")
    if oracle_ids.shape[1] < k:
        raise ValueError(f"oracle graph holds {oracle_ids.shape[1]} neighbors, need {k}")
    total = 0.0
    for node in range(layer.node_count):
        mine = layer.adjacency[node, :k]
        mine = set(int(x) for x in mine if x != SENTINEL)
        total += len(mine & set(int(x) for x in oracle_ids[node, :k])) / k
    return total / layer.node_count
