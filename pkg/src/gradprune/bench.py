"""Dense-vs-sparse matrix-vector benchmark harness.

For each (layer size, sparsity) pair a random matrix is pruned to the
target sparsity by magnitude and the dense product is timed against the
CSR kernel: monotonic clock, warmup runs discarded, medians compared.
GRU rows use the fused gate matrix of shape (3 * size, size), which is
the single matrix-vector product a gated layer performs per step when
its three input (or recurrent) gate matrices are stacked.  Rows at
sparsity 0 are the dense baseline and carry speedup 1 by definition.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .sparse import spmv, to_csr, warm_up_kernels
from .tensor import make_rng


@dataclass(frozen=True)
class BenchRecord:
    layer_size: int
    sparsity: float
    layer_type: str      # "RNN" or "GRU"
    dense_us: float      # median wall time, microseconds
    sparse_us: float
    speedup: float       # dense_us / sparse_us
    dense_iqr_us: float
    sparse_iqr_us: float


def _median_iqr(fn, reps, warmup):
    for _ in range(warmup):
        fn()
    times = np.empty(reps)
    for i in range(reps):
        t0 = time.perf_counter()
        fn()
        times[i] = time.perf_counter() - t0
    q1, med, q3 = np.percentile(times, [25, 50, 75])
    return med * 1e6, (q3 - q1) * 1e6


def prune_to_sparsity(m, sparsity):
    """Zero exactly round(sparsity * size) smallest-magnitude entries."""
    if not 0.0 <= sparsity < 1.0:
        raise ParameterError(f"sparsity must be in [0, 1), got {sparsity}")
    out = m.copy()
    k = int(round(sparsity * m.size))
    if k:
        order = np.argsort(np.abs(m).ravel(), kind="stable")
        out.ravel()[order[:k]] = 0.0
    return out


def bench_matvec(sizes, sparsities, layer_type="RNN", reps=30, warmup=5, seed=0,
                 parallel=False):
    """Benchmark every (size, sparsity) combination; returns BenchRecords."""
    if reps < 1 or warmup < 0:
        raise ParameterError("reps must be >= 1 and warmup >= 0")
    if layer_type not in ("RNN", "GRU"):
        raise ParameterError(f"layer_type must be RNN or GRU, got {layer_type!r}")
    warm_up_kernels()
    rng = make_rng(seed)
    records = []
    for size in sizes:
        if size < 1:
            raise ParameterError(f"layer size must be >= 1, got {size}")
        rows = 3 * size if layer_type == "GRU" else size
        m = rng.uniform(-1.0, 1.0, size=(rows, size)).astype(np.float32)
        x = rng.uniform(-1.0, 1.0, size=size).astype(np.float32)
        for sparsity in sparsities:
            dense_us, dense_iqr = _median_iqr(lambda: m @ x, reps, warmup)
            if sparsity == 0.0:
                records.append(
                    BenchRecord(size, 0.0, layer_type, dense_us, dense_us, 1.0,
                                dense_iqr, dense_iqr)
                )
                continue
            pruned = prune_to_sparsity(m, sparsity)
            c = to_csr(pruned)
            sparse_us, sparse_iqr = _median_iqr(
                lambda: spmv(c, x, parallel=parallel), reps, warmup
            )
            records.append(
                BenchRecord(size, sparsity, layer_type, dense_us, sparse_us,
                            dense_us / sparse_us, dense_iqr, sparse_iqr)
            )
    return records


BENCH_COLUMNS = ("layer_size", "sparsity", "layer_type", "dense_us", "sparse_us", "speedup")


def write_bench_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_COLUMNS)
        for r in records:
            writer.writerow(
                [r.layer_size, f"{r.sparsity:g}", r.layer_type,
                 f"{r.dense_us:.3f}", f"{r.sparse_us:.3f}", f"{r.speedup:.3f}"]
            )


def format_bench_table(records):
    lines = ["layer_size  sparsity  type  dense_us  sparse_us  speedup  iqr(d/s) us"]
    for r in records:
        lines.append(
            f"{r.layer_size:>10d}  {r.sparsity:>7.0%}  {r.layer_type:>4s}  "
            f"{r.dense_us:>8.1f}  {r.sparse_us:>9.1f}  {r.speedup:>6.2f}x  "
            f"{r.dense_iqr_us:.1f}/{r.sparse_iqr_us:.1f}"
        )
    return "\n".join(lines)
