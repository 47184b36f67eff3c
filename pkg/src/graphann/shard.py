"""Sharded builds: independent sub-indices whose answers merge at query time.

The dataset order is shuffled once (seeded), then cut into contiguous
shards; each shard gets its own full hierarchy and no cross-shard edges
ever exist, so shards build independently and in any order. A query fans
out, per-shard ids are globalized through the stored permutation and the
lists k-way-merge by distance (ties by ascending dataset id).

A sharded index persists as a directory: manifest.json, the permutation,
and one index file per shard. `iter_shard_results` processes shards one
at a time for machines that cannot hold every sub-index at once.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .build import BuildStats, build
from .config import BuildConfig, QueryConfig
from .data import Dataset, FormatError
from .graph import Hierarchy
from .index_file import load_index, save_index
from .search import QueryResult, query

_MANIFEST = "manifest.json"
_PERMFILE = "permutation.i32"


@dataclass
class ShardedIndex:
    shards: list[tuple[int, Hierarchy]]  # (offset in shuffled order, sub-index)
    shard_size: int
    permutation: np.ndarray  # shuffled position -> dataset id
    config: BuildConfig

    def __post_init__(self):
        offsets = [off for off, _ in self.shards]
        sizes = [h.n for _, h in self.shards]
        expect = 0
        for off, size in zip(offsets, sizes):
            if off != expect:
                raise ValueError(f"shard offsets must tile 0..n-1, got {offsets}")
            expect = off + size
        if expect != len(self.permutation):
            raise ValueError("shards do not cover the permutation range")


def shard_datasets(
    dataset: Dataset, shard_size: int, seed: int
) -> tuple[np.ndarray, list[tuple[int, Dataset]]]:
    """Shuffle, slice, gather: the per-shard datasets and the permutation."""
    n = dataset.n
    perm = np.random.default_rng(seed).permutation(n).astype(np.int32)
    count = math.ceil(n / shard_size)
    out = []
    for i in range(count):
        lo, hi = i * shard_size, min((i + 1) * shard_size, n)
        out.append((lo, Dataset(dataset.vectors[perm[lo:hi]].copy())))
    return perm, out


def build_sharded(
    dataset: Dataset,
    shard_size: int,
    cfg: BuildConfig | None = None,
    threads: int = 1,
) -> tuple[ShardedIndex, list[BuildStats]]:
    """Independently build ceil(n / shard_size) sub-indices."""
    cfg = cfg or BuildConfig()
    if shard_size < cfg.s:
        raise ValueError(f"shard_size must be >= s (got {shard_size} < {cfg.s})")
    perm, subsets = shard_datasets(dataset, shard_size, cfg.seed)
    shards: list[tuple[int, Hierarchy]] = []
    all_stats: list[BuildStats] = []
    for shard_idx, (offset, sub) in enumerate(subsets):
        try:
            h, stats = build(sub, cfg, threads=threads)
        except Exception as exc:
            raise RuntimeError(f"shard {shard_idx} (offset {offset}) failed to build") from exc
        shards.append((offset, h))
        all_stats.append(stats)
    return ShardedIndex(shards, shard_size, perm, cfg), all_stats


def _merge_shard_results(
    parts: list[tuple[int, QueryResult]], permutation: np.ndarray, k_out: int
) -> QueryResult:
    pairs: list[tuple[float, int, str]] = []
    visited = steps = 0
    for offset, res in parts:
        for local, dist in zip(res.ids, res.dists):
            pairs.append((float(dist), int(permutation[offset + int(local)]), res.terminated_by))
        visited += res.visited_count
        steps += res.steps
    pairs.sort(key=lambda p: (p[0], p[1]))
    top = pairs[:k_out]
    term = top[0][2] if top else "queue-empty"
    return QueryResult(
        ids=np.array([p[1] for p in top], dtype=np.int32),
        dists=np.array([p[0] for p in top], dtype=np.float64),
        visited_count=visited,
        steps=steps,
        terminated_by=term,
    )


def query_sharded(
    si: ShardedIndex, q: np.ndarray, cfg: QueryConfig | None = None, threads: int = 1
) -> QueryResult:
    """Query every shard and merge to the global top k_out."""
    cfg = cfg or QueryConfig()

    def one(item: tuple[int, Hierarchy]) -> tuple[int, QueryResult]:
        offset, h = item
        return offset, query(h, q, cfg)

    if threads > 1 and len(si.shards) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, si.shards))
    else:
        parts = [one(item) for item in si.shards]
    return _merge_shard_results(parts, si.permutation, cfg.k_out)


def save_sharded(si: ShardedIndex, dir_path: str | Path) -> None:
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "shard_count": len(si.shards),
        "shard_size": si.shard_size,
        "n": int(len(si.permutation)),
        "offsets": [off for off, _ in si.shards],
        "config": si.config.to_dict(),
        "permutation_file": _PERMFILE,
        "shard_files": [f"shard_{i:04d}.idx" for i in range(len(si.shards))],
    }
    (root / _MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    (root / _PERMFILE).write_bytes(si.permutation.astype("<i4").tobytes())
    for i, (_, h) in enumerate(si.shards):
        save_index(h, root / manifest["shard_files"][i])


def _read_manifest(root: Path) -> dict:
    mf = root / _MANIFEST
    if not mf.exists():
        raise FormatError(f"{root}: missing {_MANIFEST}")
    manifest = json.loads(mf.read_text())
    if manifest.get("version") != 1:
        raise FormatError(f"{root}: unsupported sharded-index version {manifest.get('version')}")
    return manifest


def load_sharded(dir_path: str | Path, dataset: Dataset) -> ShardedIndex:
    """Load every shard eagerly and attach its slice of the dataset."""
    root = Path(dir_path)
    manifest = _read_manifest(root)
    perm = np.frombuffer((root / manifest["permutation_file"]).read_bytes(), dtype="<i4").copy()
    shards = []
    for off, fname in zip(manifest["offsets"], manifest["shard_files"]):
        h = load_index(root / fname)
        lo = off
        h.attach(Dataset(dataset.vectors[perm[lo : lo + h.n]].copy()))
        shards.append((off, h))
    cfg = BuildConfig.from_dict(manifest["config"])
    return ShardedIndex(shards, manifest["shard_size"], perm, cfg)


def iter_shard_results(
    dir_path: str | Path, dataset: Dataset, q: np.ndarray, cfg: QueryConfig | None = None
):
    """Sequential-loading mode: yield (offset, QueryResult) one shard at a
    time, holding a single sub-index in memory."""
    cfg = cfg or QueryConfig()
    root = Path(dir_path)
    manifest = _read_manifest(root)
    perm = np.frombuffer((root / manifest["permutation_file"]).read_bytes(), dtype="<i4").copy()
    for off, fname in zip(manifest["offsets"], manifest["shard_files"]):
        h = load_index(root / fname)
        h.attach(Dataset(dataset.vectors[perm[off : off + h.n]].copy()))
        yield off, query(h, q, cfg)


def query_sharded_sequential(
    dir_path: str | Path, dataset: Dataset, q: np.ndarray, cfg: QueryConfig | None = None
) -> QueryResult:
    """Bounded-memory variant of query_sharded over a persisted directory."""
    cfg = cfg or QueryConfig()
    root = Path(dir_path)
    manifest = _read_manifest(root)
    perm = np.frombuffer((root / manifest["permutation_file"]).read_bytes(), dtype="<i4").copy()
    parts = list(iter_shard_results(dir_path, dataset, q, cfg))
    return _merge_shard_results(parts, perm, cfg.k_out)
