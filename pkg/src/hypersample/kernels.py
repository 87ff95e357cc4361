"""Hot CSR row-aggregation kernels.

Two implementations of each kernel: a numba @njit version and a pure-numpy
fallback. Selection happens once at import time via the HYPERSAMPLE_KERNELS
environment variable ("numba" or "numpy"; default is numba when importable).
Both paths use a fixed per-row summation order, so results are deterministic
for a given backend. HYPERSAMPLE_THREADS caps numba's internal thread pool.
"""

import os

import numpy as np

try:
    import numba
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


def _aggregate_rows_numpy(h, indptr, indices, weights):
    n = indptr.shape[0] - 1
    out = np.zeros((n, h.shape[1]))
    if indices.size:
        rows = np.repeat(np.arange(n), np.diff(indptr))
        np.add.at(out, rows, h[indices] * weights[:, None])
    return out


def _scatter_rows_numpy(grad_out, indptr, indices, weights, num_source_rows):
    grad_h = np.zeros((num_source_rows, grad_out.shape[1]))
    if indices.size:
        rows = np.repeat(np.arange(indptr.shape[0] - 1), np.diff(indptr))
        np.add.at(grad_h, indices, grad_out[rows] * weights[:, None])
    return grad_h


if _HAVE_NUMBA:

    @njit(cache=True)
    def _aggregate_rows_numba(h, indptr, indices, weights):
        n = indptr.shape[0] - 1
        d = h.shape[1]
        out = np.zeros((n, d))
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                w = weights[k]
                for c in range(d):
                    out[i, c] += w * h[j, c]
        return out

    @njit(cache=True)
    def _scatter_rows_numba(grad_out, indptr, indices, weights, num_source_rows):
        n = indptr.shape[0] - 1
        d = grad_out.shape[1]
        grad_h = np.zeros((num_source_rows, d))
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                w = weights[k]
                for c in range(d):
                    grad_h[j, c] += w * grad_out[i, c]
        return grad_h


def _pick_backend():
    requested = os.environ.get("HYPERSAMPLE_KERNELS", "").strip().lower()
    if requested not in ("", "numba", "numpy"):
        raise ValueError(
            f"HYPERSAMPLE_KERNELS must be 'numba' or 'numpy', got {requested!r}"
        )
    if requested == "numpy":
        return "numpy"
    if not _HAVE_NUMBA:
        if requested == "numba":
            raise RuntimeError("HYPERSAMPLE_KERNELS=numba but numba is not installed")
        return "numpy"
    return "numba"


BACKEND = _pick_backend()

if BACKEND == "numba":
    threads = os.environ.get("HYPERSAMPLE_THREADS")
    if threads:
        numba.set_num_threads(max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS)))
    aggregate_rows = _aggregate_rows_numba
    scatter_rows = _scatter_rows_numba
else:
    aggregate_rows = _aggregate_rows_numpy
    scatter_rows = _scatter_rows_numpy


def as_csr(indptr, indices, weights):
    """Normalize CSR arrays to the dtypes the kernels expect."""
    return (
        np.ascontiguousarray(indptr, dtype=np.int64),
        np.ascontiguousarray(indices, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
    )
