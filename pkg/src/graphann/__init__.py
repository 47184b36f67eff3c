"""Parallel approximate nearest neighbor search over hierarchical kNN graphs.

Build a fixed-degree kNN graph bottom-up from brute-forced batches, then
answer queries by jumping from a brute-force scan of the coarse top layer
into a greedy search of the bottom layer. A brute-force oracle and
recall/consensus metrics are included for verification, plus a CLI for
building, querying and benchmark sweeps.
"""

from . import backend
from .build import BuildStats, build, compute_stats, merge_layer, refine_layer, select_points, symmetrize
from .cache import SearchCache
from .config import BuildConfig, QueryConfig
from .data import (
    ConfigError,
    Dataset,
    FormatError,
    gen_synthetic,
    load_ids,
    load_vectors,
    squared_distance,
    write_ids,
    write_vectors,
)
from .evaluate import GroundTruth, brute_force_oracle, consensus_at_k, k_recall_at, recall_at
from .graph import AdjacencyLayer, GraphStats, Hierarchy
from .index_file import IndexFormatError, load_index, save_index
from .search import (
    QueryResult,
    batch_query,
    greedy_search,
    hierarchical_query,
    query,
    stopping_check,
    top_layer_seeds,
)
from .shard import (
    ShardedIndex,
    build_sharded,
    load_sharded,
    query_sharded,
    query_sharded_sequential,
    save_sharded,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyLayer",
    "BuildConfig",
    "BuildStats",
    "ConfigError",
    "Dataset",
    "FormatError",
    "GraphStats",
    "GroundTruth",
    "Hierarchy",
    "IndexFormatError",
    "QueryConfig",
    "QueryResult",
    "SearchCache",
    "ShardedIndex",
    "backend",
    "batch_query",
    "brute_force_oracle",
    "build",
    "build_sharded",
    "compute_stats",
    "consensus_at_k",
    "gen_synthetic",
    "greedy_search",
    "hierarchical_query",
    "k_recall_at",
    "load_ids",
    "load_index",
    "load_sharded",
    "load_vectors",
    "merge_layer",
    "query",
    "query_sharded",
    "query_sharded_sequential",
    "recall_at",
    "refine_layer",
    "save_index",
    "save_sharded",
    "select_points",
    "squared_distance",
    "stopping_check",
    "symmetrize",
    "top_layer_seeds",
    "write_ids",
    "write_vectors",
]
