"""Command-line harness: build, query, gt, bench.

Every run prints its full effective configuration as a JSON line so any
report can be reproduced; errors go to stderr as one machine-readable
JSON line. Exit codes: 0 success, 1 runtime failure, 2 usage/config
error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import backend
from .build import build
from .config import BuildConfig, QueryConfig
from .data import ConfigError, Dataset, FormatError, load_ids, load_vectors, write_ids
from .evaluate import brute_force_oracle, consensus_at_k, k_recall_at, oracle_knn_graph, recall_at
from .index_file import load_index, save_index
from .search import batch_query
from .shard import build_sharded, load_sharded, query_sharded, save_sharded

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _fail(code: int, message: str, **extra) -> int:
    payload = {"error": message, "exit_code": code, **extra}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("GGNN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _load_dataset(args) -> Dataset:
    path = Path(args.data)
    if not path.exists():
        raise FileNotFoundError(f"dataset not found: {path}")
    return load_vectors(path, args.format)


def _build_config(args) -> BuildConfig:
    return BuildConfig(
        k=args.k,
        k_nn=args.knn,
        k_sym=args.ksym,
        s=args.s,
        g=args.g,
        refinements=args.refine,
        tau_build=args.tau_build,
        seed=args.seed,
    )


def _echo(kind: str, payload: dict) -> None:
    print(json.dumps({"event": kind, "utc": _utc_now(), **payload}, sort_keys=True))


def cmd_build(args) -> int:
    dataset = _load_dataset(args)
    cfg = _build_config(args)
    threads = _threads(args)
    _echo(
        "config",
        {
            "command": "build",
            "backend": backend.BACKEND,
            "config": cfg.to_dict(),
            "data": str(args.data),
            "data_hash": dataset.content_hash(),
            "n": dataset.n,
            "d": dataset.d,
            "shard_size": args.shard_size,
            "threads": threads,
        },
    )
    t0 = time.perf_counter()
    if args.shard_size:
        si, stats_list = build_sharded(dataset, args.shard_size, cfg, threads=threads)
        save_sharded(si, args.out)
        _echo(
            "build-stats",
            {
                "seconds": time.perf_counter() - t0,
                "shards": len(si.shards),
                "mean_sym_used": [s.mean_sym_used for s in stats_list],
                "dropped_sym_links": sum(s.dropped_sym_links for s in stats_list),
                "out": str(args.out),
            },
        )
    else:
        h, stats = build(dataset, cfg, threads=threads)
        save_index(h, args.out)
        _echo(
            "build-stats",
            {
                "seconds": stats.build_seconds,
                "layers": [layer.node_count for layer in h.layers],
                "mean_sym_used": stats.mean_sym_used,
                "dropped_sym_links": stats.dropped_sym_links,
                "d_nn1_mean": h.stats.d_nn1_mean,
                "d_nn1_max": h.stats.d_nn1_max,
                "reduced_knn_batches": stats.reduced_knn_batches,
                "out": str(args.out),
            },
        )
    return EXIT_OK


def _load_any_index(args, dataset: Dataset):
    path = Path(args.index)
    if not path.exists():
        raise FileNotFoundError(f"index not found: {path}")
    if path.is_dir():
        return load_sharded(path, dataset), True
    return load_index(path).attach(dataset), False


def cmd_query(args) -> int:
    dataset = _load_dataset(args)
    queries = load_vectors(args.queries, args.format)
    index, sharded = _load_any_index(args, dataset)
    qcfg = QueryConfig(k_out=args.kout, tau=args.tau)
    threads = _threads(args)
    _echo(
        "config",
        {
            "command": "query",
            "backend": backend.BACKEND,
            "tau": args.tau,
            "k_out": args.kout,
            "data_hash": dataset.content_hash(),
            "queries": str(args.queries),
            "m": queries.n,
            "threads": threads,
            "sharded": sharded,
        },
    )
    t0 = time.perf_counter()
    if sharded:
        results = [query_sharded(index, qv, qcfg, threads=threads) for qv in queries.vectors]
    else:
        results = batch_query(index, queries.vectors, qcfg, threads=threads)
    wall = time.perf_counter() - t0
    ids = np.full((queries.n, args.kout), -1, dtype=np.int32)
    for i, res in enumerate(results):
        ids[i, : len(res.ids)] = res.ids
    write_ids(args.out, ids)
    _echo(
        "query-stats",
        {
            "mean_query_seconds": wall / queries.n,
            "mean_visited": float(np.mean([r.visited_count for r in results])),
            "mean_steps": float(np.mean([r.steps for r in results])),
            "out": str(args.out),
        },
    )
    return EXIT_OK


def cmd_gt(args) -> int:
    dataset = _load_dataset(args)
    queries = load_vectors(args.queries, args.format)
    threads = _threads(args)
    _echo(
        "config",
        {
            "command": "gt",
            "backend": backend.BACKEND,
            "k_gt": args.kout,
            "data_hash": dataset.content_hash(),
            "m": queries.n,
            "threads": threads,
        },
    )
    gt = brute_force_oracle(dataset, queries.vectors, args.kout, threads=threads)
    write_ids(args.out, gt.ids)
    _echo("gt-stats", {"out": str(args.out), "m": queries.n, "k_gt": args.kout})
    return EXIT_OK


def _parse_sweep(text: str) -> list[float]:
    a, b, step = (float(t) for t in text.split(":"))
    if step <= 0 or b < a:
        raise ValueError(f"bad sweep spec {text!r}")
    out = []
    v = a
    while v <= b + 1e-9:
        out.append(round(v, 10))
        v += step
    return out


def cmd_bench(args) -> int:
    dataset = _load_dataset(args)
    queries = load_vectors(args.queries, args.format)
    cfg = _build_config(args)
    threads = _threads(args)
    taus = _parse_sweep(args.tau_sweep) if args.tau_sweep else [0.3, 0.4, 0.5, 0.6, 0.7, 0.8]
    refine_list = (
        [int(t) for t in args.refine_sweep.split(",")] if args.refine_sweep else [cfg.refinements]
    )

    if args.gt == "auto":
        gt_ids = brute_force_oracle(dataset, queries.vectors, args.kout, threads=threads).ids
    else:
        gt_ids = load_ids(args.gt)

    config_echo = {
        "command": "bench",
        "backend": backend.BACKEND,
        "config": cfg.to_dict(),
        "data": str(args.data),
        "data_hash": dataset.content_hash(),
        "n": dataset.n,
        "d": dataset.d,
        "m": queries.n,
        "tau_sweep": taus,
        "refine_sweep": refine_list,
        "k_out": args.kout,
        "threads": threads,
        "cores": os.cpu_count(),
        "gt": str(args.gt),
    }
    _echo("config", config_echo)

    oracle_graph = None
    if len(refine_list) > 1:
        oracle_graph = oracle_knn_graph(dataset, min(10, cfg.k_nn), threads=threads)

    rows = []
    for refinements in refine_list:
        rcfg = BuildConfig(**{**cfg.to_dict(), "refinements": refinements})
        t0 = time.perf_counter()
        h, bstats = build(dataset, rcfg, threads=threads)
        build_wall = time.perf_counter() - t0
        consensus = None
        if oracle_graph is not None:
            consensus = consensus_at_k(h.layers[0], oracle_graph, min(10, cfg.k_nn))
        for tau in taus:
            qcfg = QueryConfig(k_out=args.kout, tau=tau)
            batch_query(h, queries.vectors, qcfg, threads=threads)  # warm pass
            lat = []
            results = []
            t0 = time.perf_counter()
            for qv in queries.vectors:
                t1 = time.perf_counter()
                results.append(batch_query(h, qv[None, :], qcfg, threads=1)[0])
                lat.append(time.perf_counter() - t1)
            wall = time.perf_counter() - t0
            ids = np.stack([np.pad(r.ids, (0, args.kout - len(r.ids)), constant_values=-1) for r in results])
            row = {
                "refinements": refinements,
                "tau": tau,
                "recall_at_1": recall_at(ids, gt_ids[:, 0], 1),
                "recall_at_10": recall_at(ids, gt_ids[:, 0], min(10, args.kout)),
                "k_recall_at_10": (
                    k_recall_at(ids, gt_ids, min(10, args.kout, gt_ids.shape[1]))
                ),
                "mean_visited": float(np.mean([r.visited_count for r in results])),
                "mean_steps": float(np.mean([r.steps for r in results])),
                "mean_query_seconds": wall / queries.n,
                "p50_query_seconds": float(np.percentile(lat, 50)),
                "p99_query_seconds": float(np.percentile(lat, 99)),
                "build_seconds": build_wall,
                "consensus_at_10": consensus,
            }
            rows.append(row)
            _echo("bench-row", row)

    report = {"generated_utc": _utc_now(), "config": config_echo, "rows": rows}
    out_base = Path(args.out) if args.out else Path("bench_report")
    wrote = []
    if args.report in ("json", "both"):
        p = out_base.with_suffix(".json")
        p.write_text(json.dumps(report, indent=2, sort_keys=True))
        wrote.append(str(p))
    if args.report in ("csv", "both"):
        p = out_base.with_suffix(".csv")
        cols = list(rows[0].keys())
        lines = [",".join(cols)]
        for row in rows:
            lines.append(",".join("" if row[c] is None else repr(row[c]) for c in cols))
        p.write_text("\n".join(lines) + "\n")
        wrote.append(str(p))
        pareto = out_base.parent / (out_base.name + "_pareto.csv")
        lines = ["mean_query_seconds,recall_at_1"]
        for row in rows:
            lines.append(f"{row['mean_query_seconds']!r},{row['recall_at_1']!r}")
        pareto.write_text("\n".join(lines) + "\n")
        wrote.append(str(pareto))
    _echo("bench-report", {"files": wrote, "rows": len(rows)})
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphann",
        description="Hierarchical kNN-graph ANN search: build, query, ground truth, benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, queries=False, index=False, out=True):
        p.add_argument("--data", required=True, help="base vectors (fvecs/bvecs)")
        p.add_argument("--format", choices=["fvecs", "bvecs"], default="fvecs")
        if queries:
            p.add_argument("--queries", required=True, help="query vectors")
        if index:
            p.add_argument("--index", required=True, help="index file or sharded index dir")
        if out:
            p.add_argument("--out", required=True, help="output path")
        p.add_argument("--threads", type=int, default=None, help="worker pool cap (env GGNN_THREADS)")
        p.add_argument("--seed", type=int, default=0)

    def build_knobs(p):
        p.add_argument("--k", type=int, default=24)
        p.add_argument("--knn", type=int, default=12)
        p.add_argument("--ksym", type=int, default=12)
        p.add_argument("--s", type=int, default=32)
        p.add_argument("--g", type=int, default=4)
        p.add_argument("--refine", type=int, default=2)
        p.add_argument("--tau-build", type=float, default=0.5)

    p = sub.add_parser("build", help="build and persist an index")
    common(p)
    build_knobs(p)
    p.add_argument("--shard-size", type=int, default=None, help="build independent shards of this size")
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("query", help="query a persisted index, write ivecs results")
    common(p, queries=True, index=True)
    p.add_argument("--tau", type=float, default=0.6)
    p.add_argument("--kout", type=int, default=10)
    p.set_defaults(fn=cmd_query)

    p = sub.add_parser("gt", help="exhaustive ground truth, write ivecs")
    common(p, queries=True)
    p.add_argument("--kout", type=int, default=100, help="neighbors per query")
    p.set_defaults(fn=cmd_gt)

    p = sub.add_parser("bench", help="tau / refinement sweeps with JSON+CSV reports")
    common(p, queries=True)
    build_knobs(p)
    p.add_argument("--gt", default="auto", help="ground-truth ivecs path or 'auto'")
    p.add_argument("--tau-sweep", default=None, help="a:b:step (default 0.3:0.8:0.1)")
    p.add_argument("--refine-sweep", default=None, help="comma list of refinement counts")
    p.add_argument("--kout", type=int, default=10)
    p.add_argument("--report", choices=["json", "csv", "both"], default="both")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except FileNotFoundError as exc:
        return _fail(EXIT_USAGE, str(exc))
    except (ConfigError, FormatError, ValueError) as exc:
        return _fail(EXIT_USAGE, str(exc))
    except Exception as exc:  # pragma: no cover - last-resort reporting
        return _fail(EXIT_RUNTIME, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
