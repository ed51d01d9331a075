"""Compare the numba-compiled kernels against the pure-numpy fallback.

Run twice to see both sides from a cold start, or rely on the in-process
comparison below, which imports the undecorated originals directly:

    python benchmarks/accel_bench.py
    PRECISIONFIT_NO_NUMBA=1 python benchmarks/accel_bench.py
"""

import argparse
import time

import numpy as np

from precisionfit import accel, kernels
from precisionfit.triangulation import WALK_TOL, delaunay_triangulate


def time_call(fn, *args, repeats=5):
    fn(*args)  # warm-up (includes JIT compilation on the compiled path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_walk(n_vertices, n_queries, dim, seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (n_vertices, dim))
    tri = delaunay_triangulate(pts, rng.normal(size=n_vertices))
    qs = rng.uniform(0.1, 0.9, (n_queries, dim))
    args = (qs, tri.simplices, tri.neighbors, tri.tinv, tri.vlast,
            tri.values, np.int64(0), WALK_TOL)
    rows = [("walk_predict (pure numpy)",
             time_call(kernels.walk_predict_py, *args, repeats=3))]
    if accel.USE_NUMBA:
        rows.append(("walk_predict (numba)",
                     time_call(kernels.walk_predict, *args, repeats=3)))
    return rows


def bench_jacobi(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    h = np.ascontiguousarray((a + a.T) / 2)
    rows = [
        ("jacobi_eigh (pure numpy)",
         time_call(kernels.jacobi_eigh_py, h.copy(), 1e-14, 50, repeats=3)),
    ]
    if accel.USE_NUMBA:
        rows.append(
            ("jacobi_eigh (numba)",
             time_call(kernels.jacobi_eigh, h.copy(), 1e-14, 50, repeats=3))
        )
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--vertices", type=int, default=2000)
    parser.add_argument("--queries", type=int, default=4000)
    parser.add_argument("--dim", type=int, default=2, choices=(2, 3))
    parser.add_argument("--jacobi-n", type=int, default=120)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    print(f"numba enabled: {accel.USE_NUMBA}")
    rows = bench_walk(args.vertices, args.queries, args.dim, args.seed)
    rows += bench_jacobi(args.jacobi_n, args.seed)
    width = max(len(name) for name, _ in rows)
    for name, seconds in rows:
        print(f"{name:<{width}}  {seconds * 1000:10.2f} ms")
    by_name = dict(rows)
    for task in ("walk_predict", "jacobi_eigh"):
        pure = by_name.get(f"{task} (pure numpy)")
        fast = by_name.get(f"{task} (numba)")
        if pure and fast:
            print(f"{task} speedup: {pure / fast:.1f}x")


if __name__ == "__main__":
    main()
