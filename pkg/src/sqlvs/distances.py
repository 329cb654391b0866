"""Distance kernels and tie-rule top-k selection.

All result-affecting scores go through the canonical kernels here: float64
elementwise arithmetic reduced along the last axis, chunked over queries to
bound temporary memory. The expansion trick (|x|^2 - 2xy + |y|^2) is faster
but rounds differently, so it is reserved for internals whose output is a
structure rather than a query result (k-means, graph construction).

Tie rule: candidates are ordered by (distance ascending, data row ascending);
inner-product search orders by (score descending, data row ascending). With
this rule every search is deterministic and a full-probe IVF scan reproduces
the exhaustive scan bit for bit.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, ShapeError

SQUARED_L2 = "squared_l2"
INNER_PRODUCT = "inner_product"
METRICS = (SQUARED_L2, INNER_PRODUCT)

# target elements per (queries x data) temporary block
_CHUNK_ELEMS = 4_000_000


def check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ParameterError(f"unknown metric {metric!r}")
    return metric


def pairwise(queries: np.ndarray, data: np.ndarray, metric: str = SQUARED_L2) -> np.ndarray:
    """Canonical (Q, N) score matrix in float64.

    Squared L2 is sum((q - x)^2); inner product is sum(q * x). Both reduce
    along the contiguous last axis so results are bit-stable for a given
    pair regardless of batch shape.
    """
    check_metric(metric)
    q = np.asarray(queries, dtype=np.float64)
    x = np.asarray(data, dtype=np.float64)
    if q.ndim != 2 or x.ndim != 2:
        raise ShapeError("pairwise expects 2-D query and data arrays")
    if q.shape[1] != x.shape[1]:
        raise ShapeError(f"dim mismatch: {q.shape[1]} vs {x.shape[1]}")
    nq, nx = q.shape[0], x.shape[0]
    out = np.empty((nq, nx), dtype=np.float64)
    step = max(1, _CHUNK_ELEMS // max(1, nx * q.shape[1]))
    for i in range(0, nq, step):
        block = q[i : i + step, None, :]
        if metric == SQUARED_L2:
            diff = block - x[None, :, :]
            out[i : i + step] = np.sum(diff * diff, axis=-1)
        else:
            out[i : i + step] = np.sum(block * x[None, :, :], axis=-1)
    return out


def pairwise_sq_l2_fast(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """BLAS-backed squared L2, for build-time internals only."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aa = np.sum(a * a, axis=1)[:, None]
    bb = np.sum(b * b, axis=1)[None, :]
    d = aa + bb - 2.0 * (a @ b.T)
    np.maximum(d, 0.0, out=d)
    return d


def rank_candidates(scores: np.ndarray, row_ids: np.ndarray, metric: str) -> np.ndarray:
    """Order candidate positions by the tie rule; returns positions into scores."""
    key = -scores if metric == INNER_PRODUCT else scores
    return np.lexsort((row_ids, key))


def select_top(scores: np.ndarray, row_ids: np.ndarray, k: int, metric: str):
    """Top-k candidate positions under the tie rule.

    Uses argpartition to shrink the exact lexsort to the boundary-tie set,
    which keeps full scans over large data cheap without changing the result.
    """
    n = scores.shape[0]
    if k >= n:
        order = rank_candidates(scores, row_ids, metric)
        return order
    key = -scores if metric == INNER_PRODUCT else scores
    part = np.argpartition(key, k - 1)
    bound = key[part[k - 1]]
    cand = np.flatnonzero(key <= bound)
    order = cand[np.lexsort((row_ids[cand], key[cand]))]
    return order[:k]
