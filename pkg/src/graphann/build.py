"""Bottom-up hierarchical graph construction.

The dataset is shuffled and cut into b batches whose exact kNN graphs are
cheap to compute. Sub-trees then merge in groups of g per level: a coarse
segment of s points is sampled from each group (weighted by first-neighbor
distance so sparse regions stay represented), brute-forced and
symmetrized, and every layer underneath is fused top-down by querying each
point through the freshly built structure and updating its neighbor list.
Refinement repeats the fuse-and-symmetrize pass to sharpen imprecise
layers.

Single-worker builds are deterministic for a fixed seed; multi-worker
builds may order inverse-slot claims differently but keep every structural
invariant.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .config import BuildConfig, QueryConfig
from .data import ConfigError, Dataset
from .graph import SENTINEL, AdjacencyLayer, GraphStats, Hierarchy
from .search import hierarchical_query

SYM_CHECK_BUDGET = 16  # expansions allowed per reachability check
SYM_CHECK_PRIOQ = 64
SYM_CHECK_VISITED = 128
SYM_FALLBACK = 8  # path candidates tried when the inverse budget is full
CONSENSUS_SAMPLE = 256
CONSENSUS_K = 10


@dataclass
class BuildStats:
    """Construction diagnostics; everything recomputable from the index."""

    phase_seconds: dict[str, float] = field(default_factory=dict)
    mean_sym_used: float = 0.0
    sym_used_per_layer: list[float] = field(default_factory=list)
    d_nn1_trajectory: list[tuple[float, float]] = field(default_factory=list)
    consensus_trajectory: list[tuple[str, float]] = field(default_factory=list)
    reduced_knn_batches: int = 0
    dropped_sym_links: int = 0
    build_seconds: float = 0.0
    threads: int = 1


def plan_geometry(n: int, s: int, g: int) -> tuple[int, int]:
    """Choose layer count l and bottom batch count b = g**(l-1).

    The deepest tree whose ideal capacity s * g**(l-1) still fits inside n
    is used, so every bottom batch holds between s and s*g points and the
    remainder is spread over the first batches.
    """
    t = 0
    while s * g ** (t + 1) <= n:
        t += 1
    return t + 1, g**t


def partition_bottom(n: int, b: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Seeded shuffle, then contiguous slices: batch i covers
    perm[offsets[i]:offsets[i+1]]."""
    perm = rng.permutation(n).astype(np.int32)
    base, rem = divmod(n, b)
    sizes = np.full(b, base, dtype=np.int64)
    sizes[:rem] += 1
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return perm, offsets


def build_base(
    layer: AdjacencyLayer, X: np.ndarray, to_row: np.ndarray, members: np.ndarray
) -> bool:
    """Exact within-batch kNN lists for every member; ties break by id.

    Returns True when the batch was too small to fill all k_nn slots (the
    effective neighbor count is reduced for that batch).
    """
    members = np.asarray(members, dtype=np.int32)
    k_nn = layer.k_nn
    pos, dists = backend.impl.batch_bruteforce(X, to_row[members], k_nn)
    k_eff = min(k_nn, len(members) - 1)
    ids = np.where(pos[:, :k_eff] >= 0, members[pos[:, :k_eff]], SENTINEL)
    layer.adjacency[members, :k_eff] = ids
    layer.nn_dists[members, :k_eff] = dists[:, :k_eff]
    layer.d_nn1[members] = dists[:, 0] if k_eff > 0 else np.inf
    return k_eff < k_nn


def select_points(
    weights: np.ndarray, count: int, rng: np.random.Generator
) -> tuple[np.ndarray, bool]:
    """Weighted sampling without replacement, probability proportional to weight.

    Reservoir keys log(u)/w are drawn once and the `count` largest win,
    which is the one-pass exponential-keys scheme; all-zero weights fall
    back to uniform sampling (flagged in the second return value).
    """
    weights = np.asarray(weights, dtype=np.float64)
    m = len(weights)
    if count > m:
        raise ValueError(f"cannot select {count} from {m} nodes")
    u = rng.random(m)
    uniform = False
    if not (weights > 0).any():
        keys = u
        uniform = True
    else:
        with np.errstate(divide="ignore"):
            keys = np.log(u) / weights  # -inf where weight == 0
    if count == m:
        return np.arange(m, dtype=np.int64), uniform
    chosen = np.argsort(-keys, kind="stable")[:count]
    return np.sort(chosen), uniform


def _merge_query_config(cfg: BuildConfig) -> QueryConfig:
    return QueryConfig(
        k_out=cfg.k,
        tau=cfg.tau_build,
        max_iterations=400,
        prioq_size=max(256, 2 * cfg.k),
        visited_size=512,
    )


def _segment_of(h: Hierarchy, layer_index: int, node: int) -> int:
    if layer_index == 0:
        return int(h.bottom_segment_of[node])
    return node // h.s


def _worker_ranges(total: int, threads: int) -> list[tuple[int, int]]:
    threads = max(1, min(threads, total))
    step = (total + threads - 1) // threads
    return [(i, min(i + step, total)) for i in range(0, total, step)]


def merge_layer(
    h: Hierarchy, layer_index: int, tau_build: float, threads: int = 1
) -> dict[int, list[tuple[int, float]]]:
    """Fuse the g partitions of one layer into a consistent kNN graph.

    Every point descends from its group's segment of the current top layer
    down to this layer and merges the points it finds into its direct
    slots. Displaced former neighbors are returned per node so the
    following symmetrize pass can re-examine them.
    """
    layer = h.layers[layer_index]
    if layer_index == 0 and h.bottom_segment_of is None:
        raise RuntimeError(
            "merge/refine need construction bookkeeping; they apply to "
            "freshly built hierarchies, not loaded ones"
        )
    start = h.num_layers - 1
    cfg = _merge_query_config(h.config)
    X = h.vectors()
    to_row = h.rows_for(layer_index)
    shift = h.g ** (start - layer_index)
    bounds = [lyr.live_d_nn1_max() for lyr in h.layers]
    seg_cache: dict = {}
    rescued: dict[int, list[tuple[int, float]]] = {}

    def run(lo: int, hi: int) -> dict[int, list[tuple[int, float]]]:
        out: dict[int, list[tuple[int, float]]] = {}
        for x in range(lo, hi):
            seg = _segment_of(h, layer_index, x) // shift
            res = hierarchical_query(
                h,
                X[to_row[x]],
                cfg,
                start_layer=start,
                stop_layer=layer_index,
                segment=(seg * h.s, (seg + 1) * h.s),
                slack_bounds=bounds,
                segment_cache=seg_cache,
            )
            keep = res.ids != x
            evicted = layer.merge_hits(x, res.ids[keep], res.dists[keep])
            if evicted:
                out[x] = evicted
        return out

    if threads <= 1:
        rescued = run(0, layer.node_count)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for part in pool.map(lambda r: run(*r), _worker_ranges(layer.node_count, threads)):
                rescued.update(part)
    return rescued


def symmetrize(
    h: Hierarchy,
    layer_index: int,
    tau_build: float,
    rescued: dict[int, list[tuple[int, float]]] | None = None,
    threads: int = 1,
) -> int:
    """Add inverse links where a neighbor cannot reach back.

    For node x and each direct neighbor z (plus neighbors just displaced
    from x's list): skip when x already sits in z's slots, otherwise run a
    budgeted path check from z toward x and claim an inverse slot on z if
    the search does not reach x inside the slack margin. When z's budget
    is spent the link moves to the next best candidate along the checked
    path; with no taker it is dropped (returned count).
    """
    layer = h.layers[layer_index]
    X = h.vectors()
    to_row = h.rows_for(layer_index)
    d_max = layer.live_d_nn1_max()
    rescued = rescued or {}
    k_out = max(1, layer.k_nn)
    prioq = max(SYM_CHECK_PRIOQ, 2 * k_out)
    impl = backend.impl
    adjacency = layer.adjacency
    nn_dists = layer.nn_dists
    sym_count = layer.sym_count
    k_nn = layer.k_nn

    def check_and_link(x: int, z: int, d_xz: float, scratch) -> int:
        verdict, fallbacks = impl.sym_check_pair(
            X, to_row, adjacency, k_nn, sym_count,
            x, z, d_xz, tau_build, d_max,
            SYM_CHECK_BUDGET, k_out, prioq, SYM_CHECK_VISITED, SYM_FALLBACK,
            scratch,
        )
        if verdict != 2:
            return 0
        if layer.reserve_sym_slot(z, x):
            return 0
        for c in fallbacks:
            c = int(c)
            if c >= 0 and c != x and layer.reserve_sym_slot(c, x):
                return 0
        return 1

    def run(lo: int, hi: int) -> int:
        dropped = 0
        scratch = impl.SymScratch(
            layer.node_count, layer.k, k_out + prioq, SYM_CHECK_VISITED,
            SYM_CHECK_BUDGET, SYM_FALLBACK,
        )
        for x in range(lo, hi):
            row = adjacency[x]
            for j in range(k_nn):
                z = int(row[j])
                if z == SENTINEL:
                    continue
                dropped += check_and_link(x, z, float(nn_dists[x, j]), scratch)
            for z, d_xz in rescued.get(x, ()):
                dropped += check_and_link(x, int(z), float(d_xz), scratch)
        return dropped

    if threads <= 1:
        return run(0, layer.node_count)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return sum(pool.map(lambda r: run(*r), _worker_ranges(layer.node_count, threads)))


def refine_layer(h: Hierarchy, layer_index: int, tau_build: float, threads: int = 1) -> int:
    """One more fuse-and-symmetrize round over an already merged layer."""
    rescued = merge_layer(h, layer_index, tau_build, threads)
    return symmetrize(h, layer_index, tau_build, rescued, threads)


def compute_stats(h: Hierarchy) -> GraphStats:
    """Mean and max first-neighbor distance over the bottom layer."""
    d = h.layers[0].d_nn1
    if not np.isfinite(d).all():
        raise ValueError("bottom layer has nodes without a first neighbor")
    return GraphStats(float(d.mean()), float(d.max()))


def _sample_consensus(h: Hierarchy, sample: np.ndarray) -> float:
    """Exact-neighbor overlap of the bottom direct slots on sampled nodes."""
    X = h.vectors()
    layer = h.layers[0]
    k = min(CONSENSUS_K, layer.k_nn, layer.node_count - 1)
    total = 0.0
    for node in sample:
        ids, _ = backend.impl.exhaustive_topk(X, X[node], k + 1)
        truth = [int(i) for i in ids if int(i) != node][:k]
        mine = set(int(i) for i in layer.adjacency[node, :k] if i != SENTINEL)
        total += len(set(truth) & mine) / k
    return total / len(sample)


def build(
    dataset: Dataset,
    cfg: BuildConfig | None = None,
    threads: int = 1,
    track_consensus: bool = False,
) -> tuple[Hierarchy, BuildStats]:
    """Construct the full hierarchy over a dataset.

    Deterministic for a fixed (dataset, cfg.seed) when threads == 1.
    """
    cfg = cfg or BuildConfig()
    n = dataset.n
    if n < cfg.s:
        raise ConfigError(f"dataset has {n} points but batches need at least s={cfg.s}")
    X = dataset.vectors
    rng = np.random.default_rng(cfg.seed)
    consensus_rng = np.random.default_rng((cfg.seed, 0xC0115E15))
    stats = BuildStats(threads=threads)
    t_begin = time.perf_counter()

    l, b = plan_geometry(n, cfg.s, cfg.g)
    perm, offsets = partition_bottom(n, b, rng)
    bottom = AdjacencyLayer(n, cfg.k, cfg.k_nn)
    h = Hierarchy([bottom], [None], cfg.s, cfg.g, cfg, dim=dataset.d)
    h.attach(dataset)
    batch_of = np.empty(n, dtype=np.int32)
    for i in range(b):
        batch_of[perm[offsets[i] : offsets[i + 1]]] = i
    h.bottom_segment_of = batch_of
    h.bottom_perm = perm
    h.layer_offsets = [offsets]

    sample = None
    if track_consensus:
        sample = consensus_rng.choice(n, size=min(CONSENSUS_SAMPLE, n), replace=False)

    def timed(key: str, fn, *args, **kw):
        t0 = time.perf_counter()
        out = fn(*args, **kw)
        stats.phase_seconds[key] = stats.phase_seconds.get(key, 0.0) + time.perf_counter() - t0
        return out

    def base_phase():
        reduced = 0
        batches = [perm[offsets[i] : offsets[i + 1]] for i in range(b)]
        if threads <= 1:
            for members in batches:
                reduced += build_base(bottom, X, h.rows_for(0), members)
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                reduced = sum(
                    pool.map(lambda m: build_base(bottom, X, h.rows_for(0), m), batches)
                )
        return reduced

    stats.reduced_knn_batches = timed("level0/base", base_phase)
    stats.dropped_sym_links += timed("level0/sym", symmetrize, h, 0, cfg.tau_build, None, threads)
    stats.d_nn1_trajectory.append(_bottom_d_nn1(h))

    for level in range(1, l):
        selected = timed(f"level{level}/select", _select_level, h, level, rng)
        new_layer = AdjacencyLayer(len(selected), cfg.k, cfg.k_nn)
        h.layers.append(new_layer)
        h.to_bottom.append(h.rows_for(level - 1)[selected].astype(np.int32))
        h.invalidate_caches()

        def new_base():
            reduced = 0
            seg_count = len(selected) // cfg.s
            ranges = [
                np.arange(i * cfg.s, (i + 1) * cfg.s, dtype=np.int32) for i in range(seg_count)
            ]
            if threads <= 1:
                for members in ranges:
                    reduced += build_base(new_layer, X, h.rows_for(level), members)
            else:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    reduced = sum(
                        pool.map(lambda m: build_base(new_layer, X, h.rows_for(level), m), ranges)
                    )
            return reduced

        stats.reduced_knn_batches += timed(f"level{level}/base", new_base)
        stats.dropped_sym_links += timed(
            f"level{level}/sym", symmetrize, h, level, cfg.tau_build, None, threads
        )

        for j in range(level - 1, -1, -1):
            rescued = timed(f"level{level}/merge{j}", merge_layer, h, j, cfg.tau_build, threads)
            stats.dropped_sym_links += timed(
                f"level{level}/merge{j}/sym", symmetrize, h, j, cfg.tau_build, rescued, threads
            )
            if j == 0 and sample is not None:
                stats.consensus_trajectory.append((f"level{level}/merge", _sample_consensus(h, sample)))
            for r in range(cfg.refinements):
                stats.dropped_sym_links += timed(
                    f"level{level}/refine{j}.{r}", refine_layer, h, j, cfg.tau_build, threads
                )
                if j == 0 and sample is not None:
                    stats.consensus_trajectory.append(
                        (f"level{level}/refine{r}", _sample_consensus(h, sample))
                    )
        stats.d_nn1_trajectory.append(_bottom_d_nn1(h))

    h.stats = compute_stats(h)
    per_layer = [float(layer.sym_count.mean()) for layer in h.layers]
    stats.sym_used_per_layer = per_layer
    stats.mean_sym_used = per_layer[0]
    stats.build_seconds = time.perf_counter() - t_begin
    return h, stats


def _bottom_d_nn1(h: Hierarchy) -> tuple[float, float]:
    d = h.layers[0].d_nn1
    finite = d[np.isfinite(d)]
    if finite.size == 0:
        return (float("inf"), float("inf"))
    return (float(finite.mean()), float(finite.max()))


def _select_level(h: Hierarchy, level: int, rng: np.random.Generator) -> np.ndarray:
    """Pick s points per new segment, split equally over the g child segments.

    Children are taken in construction order; within a child the
    first-neighbor distances weight the reservoir draw.
    """
    cfg = h.config
    child = h.layers[level - 1]
    if level == 1:
        child_offsets = h.layer_offsets[0]
        child_count = len(child_offsets) - 1
        child_range = lambda i: (int(child_offsets[i]), int(child_offsets[i + 1]))
    else:
        child_count = child.node_count // cfg.s
        child_range = lambda i: (i * cfg.s, (i + 1) * cfg.s)
    group_count = child_count // cfg.g
    quota_base, quota_rem = divmod(cfg.s, cfg.g)

    picked: list[np.ndarray] = []
    for gid in range(group_count):
        for ci in range(cfg.g):
            child_idx = gid * cfg.g + ci
            lo, hi = child_range(child_idx)
            quota = quota_base + (1 if ci < quota_rem else 0)
            if level == 1:
                members = h.bottom_perm[lo:hi]
                weights = child.d_nn1[members]
                local, _ = select_points(weights, quota, rng)
                picked.append(members[local])
            else:
                weights = child.d_nn1[lo:hi]
                local, _ = select_points(weights, quota, rng)
                picked.append((local + lo).astype(np.int32))
    return np.concatenate(picked).astype(np.int32)
