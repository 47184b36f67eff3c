"""Compare the compiled kernels against the pure-Python fallback.

Times the primitive kernels and an end-to-end build + query batch on both
backends and prints a table plus the speedup. Run from the repo root:

    python benchmarks/compare_backends.py [--n 4096] [--d 64] [--queries 200]
"""

import argparse
import time

import numpy as np

import graphann as ga
from graphann import backend
from graphann.config import QueryConfig


def timeit(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name, ds, queries, cfg, qcfg):
    rows = {}
    X = ds.vectors
    rng = np.random.default_rng(0)
    pairs = rng.integers(0, ds.n, size=(2000, 2))
    with backend.use(name):
        impl = backend.impl
        rows["squared_l2 x2000"] = timeit(
            lambda: [impl.squared_l2(X[i], X[j]) for i, j in pairs]
        )
        rows["exhaustive_topk x50"] = timeit(
            lambda: [impl.exhaustive_topk(X, X[i], 10) for i in range(50)]
        )
        members = np.arange(min(256, ds.n), dtype=np.int32)
        rows["batch_bruteforce(256)"] = timeit(
            lambda: impl.batch_bruteforce(X, members, cfg.k_nn)
        )
        t0 = time.perf_counter()
        h, _ = ga.build(ds, cfg)
        rows["build"] = time.perf_counter() - t0
        rows[f"query x{len(queries)}"] = timeit(
            lambda: ga.batch_query(h, queries, qcfg), repeat=2
        )
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=4096)
    parser.add_argument("--d", type=int, default=64)
    parser.add_argument("--queries", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    names = backend.available()
    if "compiled" not in names:
        print("compiled backend not built; run `python setup.py build_ext --inplace` first")

    ds = ga.gen_synthetic(args.n, args.d, seed=args.seed, law="clustered", clusters=32)
    queries = ga.gen_synthetic(args.queries, args.d, seed=args.seed + 1, law="clustered",
                               clusters=32).vectors
    cfg = ga.BuildConfig(k=12, k_nn=6, k_sym=6, s=32, g=4, refinements=1, seed=args.seed)
    qcfg = QueryConfig(k_out=10, tau=0.6)

    results = {name: bench_backend(name, ds, queries, cfg, qcfg) for name in names}
    print(f"\nn={args.n} d={args.d} queries={args.queries}  backends: {', '.join(names)}\n")
    width = max(len(k) for k in next(iter(results.values())))
    header = f"{'kernel':<{width}}  " + "  ".join(f"{n:>12}" for n in names)
    if len(names) == 2:
        header += f"  {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for key in next(iter(results.values())):
        vals = [results[n][key] for n in names]
        line = f"{key:<{width}}  " + "  ".join(f"{v:>11.4f}s" for v in vals)
        if len(vals) == 2 and vals[0] > 0:
            line += f"  {vals[1] / vals[0]:>8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
