"""Compare the numba and numpy aggregation backends on a CSR workload.

The hot path of every forward pass is aggregate_rows (gather weighted
neighbor rows) and its adjoint scatter_rows. Both backends are importable
in one process, so this times them head to head on the same arrays.

Usage:
    python3 benchmarks/bench_kernels.py --rows 20000 --nnz 400000 --dim 64
"""

import argparse
import statistics
import time

import numpy as np

from hypersample import kernels


def build_workload(rows, nnz, dim, seed=0):
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(nnz, np.full(rows, 1.0 / rows))
    indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    indices = rng.integers(0, rows, size=nnz, dtype=np.int64)
    weights = rng.random(nnz)
    H = rng.standard_normal((rows, dim))
    G = rng.standard_normal((rows, dim))
    return indptr, indices, weights, H, G


def time_fn(fn, repeats):
    fn()  # warm-up: triggers the jit compile on the numba path
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=20000)
    ap.add_argument("--nnz", type=int, default=400000)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    indptr, indices, weights, H, G = build_workload(args.rows, args.nnz, args.dim)

    lanes = {
        "numpy": (kernels._aggregate_rows_numpy, kernels._scatter_rows_numpy),
    }
    if kernels._HAVE_NUMBA:
        lanes["numba"] = (kernels._aggregate_rows_numba, kernels._scatter_rows_numba)
    else:
        print("numba unavailable; timing the numpy backend only")

    ref = kernels._aggregate_rows_numpy(H, indptr, indices, weights)
    results = {}
    for name, (agg, scat) in lanes.items():
        out = agg(H, indptr, indices, weights)
        assert np.allclose(out, ref, atol=1e-12), f"{name} disagrees with numpy"
        t_agg = time_fn(lambda: agg(H, indptr, indices, weights), args.repeats)
        t_scat = time_fn(
            lambda: scat(G, indptr, indices, weights, args.rows), args.repeats
        )
        results[name] = (t_agg, t_scat)

    print(f"rows={args.rows} nnz={args.nnz} dim={args.dim} repeats={args.repeats}")
    print(f"{'backend':<8} {'aggregate_ms':>13} {'scatter_ms':>11}")
    for name, (t_agg, t_scat) in results.items():
        print(f"{name:<8} {t_agg * 1e3:>13.2f} {t_scat * 1e3:>11.2f}")
    if "numba" in results:
        s_agg = results["numpy"][0] / results["numba"][0]
        s_scat = results["numpy"][1] / results["numba"][1]
        print(f"numba speedup: aggregate {s_agg:.1f}x, scatter {s_scat:.1f}x")


if __name__ == "__main__":
    main()
