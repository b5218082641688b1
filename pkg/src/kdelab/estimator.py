"""The KDE estimator: scaled-kernel evaluation and sample averages.

Per-query sums run over the samples in index order through a fixed
pairwise reduction tree, so results are bit-identical across runs, worker
counts and sample permutations (after the canonical re-ordering the tree
sees the same operands in the same order).
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bandwidth import BandwidthMatrix
from .errors import DimensionMismatch, EmptySamples, InputError


@dataclass(frozen=True)
class SampleSet:
    dim: int
    points: np.ndarray  # (n, d)
    source_seed: int | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionMismatch(f"points shape {pts.shape} against dim {self.dim}")
        if pts.shape[0] < 1:
            raise EmptySamples("a sample set needs at least one point")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @staticmethod
    def from_array(points, source_seed: int | None = None) -> "SampleSet":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        pts = pts.copy()
        pts.setflags(write=False)
        return SampleSet(dim=pts.shape[1], points=pts, source_seed=source_seed)

    @staticmethod
    def from_csv_text(text: str) -> "SampleSet":
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise EmptySamples("empty sample CSV") from None
        d = len(header)
        if header != [f"x{i + 1}" for i in range(d)]:
            raise InputError(f"expected header x1..x{d}, got {header!r}")
        rows = [[float(v) for v in row] for row in reader if row]
        if not rows:
            raise EmptySamples("sample CSV has a header but no rows")
        return SampleSet.from_array(np.asarray(rows, dtype=float))

    def to_csv_text(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(self.dim)])
        for row in self.points:
            writer.writerow([format(v, ".17g") for v in row])
        return out.getvalue()


def pairwise_sum(values: np.ndarray) -> float:
    """Sum a 1-d array through a fixed binary folding tree.

    The tree depends only on the length, never on chunk sizes or thread
    counts, which keeps estimates reproducible; rounding error grows like
    O(log n) instead of O(n).
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return 0.0
    while arr.size > 1:
        half = arr.size // 2
        folded = arr[:half] + arr[half : 2 * half]
        if arr.size % 2:
            folded = np.concatenate([folded, arr[-1:]])
        arr = folded
    return float(arr[0])


def scaled_kernel_eval(kernel, h: BandwidthMatrix, u) -> float:
    """|h|^-1 K(h^-1 u)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.shape != (kernel.dim,):
        raise DimensionMismatch(f"point shape {u.shape} against dim {kernel.dim}")
    z = h.apply_inverse(u)
    return kernel.eval(z) / h.det


def kde_estimate(
    samples: SampleSet,
    kernel,
    h: BandwidthMatrix,
    queries,
    threads: int = 1,
) -> np.ndarray:
    """Average of scaled kernels over the sample set at each query point.

    Queries are independent and evaluated in parallel; the per-query
    reduction is the canonical pairwise tree over samples in index order.
    """
    queries = np.asarray(queries, dtype=float)
    if queries.ndim == 1:
        queries = queries[:, None]
    d = kernel.dim
    if samples.dim != d or h.dim != d or queries.shape[1] != d:
        raise DimensionMismatch("samples, kernel, bandwidth and queries disagree")
    if samples.n < 1:
        raise EmptySamples("no samples")

    # canonical sample order (lexicographic) so the reduction tree sees the
    # same operands no matter how the caller permuted the rows
    pts = samples.points
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    inv_t = h.inverse.T
    det = h.det
    n = samples.n

    def one_query(x: np.ndarray) -> float:
        z = (x[None, :] - pts) @ inv_t
        vals = kernel.eval_batch(z) / det
        return pairwise_sum(vals) / n

    if threads <= 1 or queries.shape[0] <= 1:
        return np.array([one_query(q) for q in queries])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        out = list(pool.map(one_query, queries))
    return np.array(out)
