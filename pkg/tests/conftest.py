"""Shared fixtures and independent reference implementations.

`naive_topk` / `naive_knn_graph` are deliberately written with plain
numpy, separately from the library kernels, so expected values in tests
come from an independent route.

The 10k x 128 benchmark fixture uses the public siftsmall files when they
are available (tests/data/siftsmall or $GRAPHANN_SIFTSMALL_DIR, see
scripts/fetch_siftsmall.py); without network access it falls back to a
deterministic SIFT-shaped synthetic set (integer-valued, clustered, 100
held-out queries) so the same assertions still run at the same scale.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

import graphann as ga

SIFTSMALL_ENV = "GRAPHANN_SIFTSMALL_DIR"


def naive_sqdist(a, b):
    """Scalar-loop squared distance; the reference for kernel outputs."""
    acc = 0.0
    for x, y in zip(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)):
        acc += (float(x) - float(y)) ** 2
    return acc


def naive_topk(X, q, k):
    """Exhaustive top-k by (distance, id) using plain numpy."""
    X64 = np.asarray(X, dtype=np.float64)
    q64 = np.asarray(q, dtype=np.float64)
    d = ((X64 - q64) ** 2).sum(axis=1)
    order = np.argsort(d, kind="stable")[:k]
    return order.astype(np.int64), d[order]


def naive_knn_graph(X, k):
    """Exact kNN lists for every row, self excluded, ties by id."""
    n = X.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        ids, _ = naive_topk(X, X[i], k + 1)
        ids = [j for j in ids if j != i]
        out[i] = ids[:k]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def small_clustered():
    return ga.gen_synthetic(400, 16, seed=11, law="clustered", clusters=8)


@pytest.fixture(scope="session")
def small_index(small_clustered):
    cfg = ga.BuildConfig(k=8, k_nn=4, k_sym=4, s=16, g=2, refinements=1, seed=7)
    h, stats = ga.build(small_clustered, cfg)
    return h, stats


def _load_siftsmall(root: Path):
    base = ga.load_vectors(root / "siftsmall_base.fvecs")
    queries = ga.load_vectors(root / "siftsmall_query.fvecs")
    gt = ga.load_ids(root / "siftsmall_groundtruth.ivecs")
    return base, queries, gt


def make_sift_shaped(n=10000, d=128, m=100, seed=1234):
    """Integer-valued clustered vectors mimicking SIFT descriptor scale."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(30, 225, size=(64, d))
    assign = rng.integers(0, 64, size=n)
    base = np.clip(np.rint(centers[assign] + rng.normal(0, 12, (n, d))), 0, 255)
    picks = rng.choice(n, size=m, replace=False)
    queries = np.clip(np.rint(base[picks] + rng.normal(0, 12, (m, d))), 0, 255)
    return base.astype(np.float32), queries.astype(np.float32)


class BenchData:
    """The 10k x 128 recall benchmark instance used by acceptance tests."""

    def __init__(self, base, queries, gt_ids, official: bool):
        self.base = base  # Dataset
        self.queries = queries  # (m, d) float32
        self.gt_ids = gt_ids  # (m, k_gt) int32, exhaustive, ascending
        self.official = official

    @property
    def label(self):
        return "siftsmall (official)" if self.official else "sift-shaped synthetic (official files unavailable)"


@pytest.fixture(scope="session")
def bench_data():
    for candidate in (
        os.environ.get(SIFTSMALL_ENV),
        Path(__file__).parent / "data" / "siftsmall",
    ):
        if candidate and Path(candidate).exists():
            base, queries, gt = _load_siftsmall(Path(candidate))
            return BenchData(base, queries.vectors, gt, official=True)
    base, queries = make_sift_shaped()
    ds = ga.Dataset(base)
    # ground truth for the synthetic analog via an independent numpy scan
    m = queries.shape[0]
    gt = np.empty((m, 100), dtype=np.int32)
    b64 = base.astype(np.float64)
    for i in range(m):
        dist = ((b64 - queries[i].astype(np.float64)) ** 2).sum(axis=1)
        gt[i] = np.argsort(dist, kind="stable")[:100]
    return BenchData(ds, queries, gt, official=False)


@pytest.fixture(scope="session")
def bench_index(bench_data):
    """Default-config build shared by the benchmark-scale acceptance tests."""
    h, stats = ga.build(bench_data.base, ga.BuildConfig(seed=7))
    return h, stats
