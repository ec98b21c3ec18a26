"""Benchmark the compiled kernels against the NumPy fallback.

Run:  python benchmarks/bench_backends.py [--repeat 5]

Times the CSR mat-mat product (the propagation hot loop) and the
boosting split scan (the tree-growing hot loop) on a range of sizes,
for every available backend.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from graphstack.backend import available_backends
from graphstack.graph import Graph
from graphstack.kernels import KernelSpec, build_kernel


def random_graph(num_nodes, avg_degree, seed):
    rng = np.random.default_rng(seed)
    num_edges = num_nodes * avg_degree // 2
    u = rng.integers(0, num_nodes, num_edges)
    v = rng.integers(0, num_nodes, num_edges)
    return Graph.from_edges(num_nodes, list(zip(u.tolist(), v.tolist())))


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


MATMAT_SIZES = [(1_000, 10, 4), (10_000, 10, 4), (50_000, 16, 8),
                (200_000, 16, 4)]
SPLIT_SIZES = [1_000, 10_000, 100_000, 1_000_000]


def bench_matmat(backends, repeat, sizes):
    print("\ncsr_matmat: best of {} (seconds)".format(repeat))
    header = f"{'nodes':>8} {'deg':>4} {'cols':>5}"
    names = list(backends)
    print(header + "".join(f" {n:>12}" for n in names) + f" {'speedup':>9}")
    for num_nodes, degree, cols in sizes:
        graph = random_graph(num_nodes, degree, seed=num_nodes)
        op = build_kernel(graph, KernelSpec("sym_norm_adjacency"))
        dense = np.random.default_rng(0).standard_normal((num_nodes, cols))
        times = {}
        for name, impl in backends.items():
            times[name] = time_call(
                lambda impl=impl: impl.csr_matmat(op.indptr, op.indices,
                                                  op.data, dense), repeat)
        row = f"{num_nodes:>8} {degree:>4} {cols:>5}"
        row += "".join(f" {times[n]:>12.6f}" for n in names)
        if "compiled" in times and "python" in times:
            row += f" {times['python'] / times['compiled']:>8.1f}x"
        print(row)


def bench_split(backends, repeat, sizes):
    print("\nsplit_scan: best of {} (seconds)".format(repeat))
    names = list(backends)
    print(f"{'rows':>8}" + "".join(f" {n:>12}" for n in names)
          + f" {'speedup':>9}")
    for rows in sizes:
        rng = np.random.default_rng(rows)
        values = np.sort(rng.standard_normal(rows))
        grad = rng.standard_normal(rows)
        hess = np.ones(rows)
        times = {}
        for name, impl in backends.items():
            times[name] = time_call(
                lambda impl=impl: impl.split_scan(values, grad, hess, 1, 1e-3),
                repeat)
        row = f"{rows:>8}"
        row += "".join(f" {times[n]:>12.6f}" for n in names)
        if "compiled" in times and "python" in times:
            row += f" {times['python'] / times['compiled']:>8.1f}x"
        print(row)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--quick", action="store_true",
                        help="smallest size only (smoke testing)")
    args = parser.parse_args(argv)
    backends = available_backends()
    print("available backends:", ", ".join(backends))
    matmat_sizes = MATMAT_SIZES[:1] if args.quick else MATMAT_SIZES
    split_sizes = SPLIT_SIZES[:1] if args.quick else SPLIT_SIZES
    bench_matmat(backends, args.repeat, matmat_sizes)
    bench_split(backends, args.repeat, split_sizes)


if __name__ == "__main__":
    main()
