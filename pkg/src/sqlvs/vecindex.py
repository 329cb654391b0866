"""Vector search indexes: flat (exhaustive), IVF, and a flat kNN graph.

IVF and graph indexes come in two layouts. A data-owning index stores its
own copy of every embedding (per-partition copies for IVF, one contiguous
copy for the graph); moving it moves all embeddings. A non-owning index
stores only the search structure (centroids / neighbor matrix) plus row ids
into the base embedding column, which it reads at search time. Both layouts
of one build return identical results; the layout only changes what a
transfer costs.

Search determinism: every candidate ordering uses the tie rule from
`distances` (distance ascending then row ascending; score descending then
row ascending for inner product), so a full-probe IVF search is bit-identical
to the exhaustive scan.
"""

from __future__ import annotations

import heapq
import io
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distances import (
    INNER_PRODUCT,
    SQUARED_L2,
    check_metric,
    pairwise,
    pairwise_sq_l2_fast,
    select_top,
)
from .errors import EmptyInputError, ParameterError, ShapeError
from .table import EmbeddingColumn

OWNING = "owning"
NON_OWNING = "non_owning"

KMEANS_MAX_ITERS = 20
KMEANS_SHIFT_TOL = 1e-4
GRAPH_ENTRY_POINTS = 8


@dataclass
class SearchParams:
    """Search-time knobs. k_prime defaults to k; ef defaults to k_prime."""

    k: int
    k_prime: Optional[int] = None
    nprobe: int = 1
    ef: Optional[int] = None

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"k must be >= 1, got {self.k}")
        if self.k_prime is None:
            self.k_prime = self.k
        if self.k_prime < self.k:
            raise ParameterError(f"k' ({self.k_prime}) must be >= k ({self.k})")
        if self.nprobe < 1:
            raise ParameterError("nprobe must be >= 1")
        if self.ef is None:
            self.ef = self.k_prime
        if self.ef < self.k_prime:
            raise ParameterError(f"ef ({self.ef}) must be >= k' ({self.k_prime})")


@dataclass
class NeighborTable:
    """Per-query top neighbors: flat arrays sorted by (query_row, rank)."""

    query_row: np.ndarray
    data_row: np.ndarray
    distance: np.ndarray
    rank: np.ndarray
    n_queries: int
    metric: str
    visited_rows: int = 0  # embedding rows read by the scan, for stream accounting

    def __len__(self) -> int:
        return len(self.query_row)

    def per_query_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_queries, dtype=np.int64)
        np.add.at(counts, self.query_row, 1)
        return counts


def _key_matrix(scores: np.ndarray, metric: str) -> np.ndarray:
    return -scores if metric == INNER_PRODUCT else scores


def _assemble(per_query: list, n_queries: int, metric: str, visited: int) -> NeighborTable:
    if per_query:
        qr = np.concatenate([q for q, _, _ in per_query])
        dr = np.concatenate([d for _, d, _ in per_query])
        ds = np.concatenate([s for _, _, s in per_query])
    else:
        qr = np.empty(0, np.int64)
        dr = np.empty(0, np.int64)
        ds = np.empty(0, np.float64)
    ranks = np.concatenate([np.arange(len(q), dtype=np.int64) for q, _, _ in per_query]) \
        if per_query else np.empty(0, np.int64)
    return NeighborTable(qr, dr, ds, ranks, n_queries, metric, visited)


def enn_search(
    queries: EmbeddingColumn,
    data: EmbeddingColumn,
    params: SearchParams,
    metric: str = SQUARED_L2,
) -> NeighborTable:
    """Exhaustive top-k' per query; exact by construction."""
    check_metric(metric)
    if queries.dim != data.dim:
        raise ShapeError(f"query dim {queries.dim} != data dim {data.dim}")
    if data.count == 0:
        raise EmptyInputError("exhaustive search over empty data side")
    k = min(params.k_prime, data.count)
    scores = pairwise(queries.values, data.values, metric)
    rows = np.arange(data.count, dtype=np.int64)
    per_query = []
    for qi in range(queries.count):
        top = select_top(scores[qi], rows, k, metric)
        per_query.append((
            np.full(len(top), qi, dtype=np.int64),
            rows[top],
            scores[qi][top],
        ))
    return _assemble(per_query, queries.count, metric, queries.count * data.count)


# --- flat -------------------------------------------------------------------


@dataclass
class FlatIndex:
    """A non-owning handle over a base embedding column; search is exact."""

    base: Optional[EmbeddingColumn]
    dim: int
    count: int
    metric: str = SQUARED_L2

    @classmethod
    def build(cls, data: EmbeddingColumn, metric: str = SQUARED_L2) -> "FlatIndex":
        check_metric(metric)
        return cls(data, data.dim, data.count, metric)

    def search(self, queries: EmbeddingColumn, params: SearchParams) -> NeighborTable:
        if self.base is None:
            raise ParameterError("flat index has no attached base column")
        return enn_search(queries, self.base, params, self.metric)

    @property
    def layout(self) -> str:
        return NON_OWNING

    def structure_nbytes(self) -> int:
        return 0


# --- IVF ---------------------------------------------------------------------


@dataclass
class IvfIndex:
    """Inverted-file index: k-means partitions probed nearest-first.

    Partition assignment and probe ordering always use squared L2 against the
    centroids (the coarse quantizer); the index metric only ranks candidates.
    """

    nlist: int
    dim: int
    count: int
    metric: str
    layout: str
    centroids: np.ndarray          # (nlist, dim) float32
    partitions: list               # nlist arrays of int64 row ids, ascending
    payload: Optional[list] = None  # owning layout: per-partition float32 copies
    base: Optional[EmbeddingColumn] = None

    @classmethod
    def build(
        cls,
        data: EmbeddingColumn,
        nlist: int,
        metric: str = SQUARED_L2,
        seed: int = 0,
        layout: str = OWNING,
    ) -> "IvfIndex":
        check_metric(metric)
        if layout not in (OWNING, NON_OWNING):
            raise ParameterError(f"unknown layout {layout!r}")
        if nlist < 1 or nlist > data.count:
            raise ParameterError(f"nlist must be in [1, {data.count}], got {nlist}")
        centroids, assign = _kmeans(data.values, nlist, seed)
        partitions = [np.flatnonzero(assign == c).astype(np.int64) for c in range(nlist)]
        payload = None
        if layout == OWNING:
            payload = [np.ascontiguousarray(data.values[p]) for p in partitions]
        return cls(nlist, data.dim, data.count, metric, layout,
                   centroids.astype(np.float32), partitions, payload,
                   base=None if layout == OWNING else data)

    def as_layout(self, layout: str, base: Optional[EmbeddingColumn] = None) -> "IvfIndex":
        """A view of the same build in the other layout; results are identical."""
        if layout == self.layout:
            return self
        if layout == OWNING:
            if base is None and self.base is None:
                raise ParameterError("owning view needs the base column")
            src = base if base is not None else self.base
            payload = [np.ascontiguousarray(src.values[p]) for p in self.partitions]
            return IvfIndex(self.nlist, self.dim, self.count, self.metric, OWNING,
                            self.centroids, self.partitions, payload)
        if base is None and self.payload is None:
            raise ParameterError("non-owning view needs the base column")
        if base is None:
            flat = np.empty((self.count, self.dim), np.float32)
            for p, block in zip(self.partitions, self.payload):
                flat[p] = block
            base = EmbeddingColumn(flat)
        return IvfIndex(self.nlist, self.dim, self.count, self.metric, NON_OWNING,
                        self.centroids, self.partitions, None, base=base)

    def search(self, queries: EmbeddingColumn, params: SearchParams) -> NeighborTable:
        if queries.dim != self.dim:
            raise ShapeError(f"query dim {queries.dim} != index dim {self.dim}")
        if params.nprobe > self.nlist:
            raise ParameterError(f"nprobe {params.nprobe} > nlist {self.nlist}")
        if self.layout == NON_OWNING and self.base is None:
            raise ParameterError("non-owning IVF index has no attached base column")
        k = params.k_prime
        cdist = pairwise(queries.values, self.centroids, SQUARED_L2)
        clist = np.arange(self.nlist, dtype=np.int64)
        per_query = []
        visited = 0
        for qi in range(queries.count):
            probes = select_top(cdist[qi], clist, params.nprobe, SQUARED_L2)
            rows = np.concatenate([self.partitions[c] for c in probes]) \
                if len(probes) else np.empty(0, np.int64)
            if rows.size == 0:
                per_query.append((np.empty(0, np.int64), np.empty(0, np.int64),
                                  np.empty(0, np.float64)))
                continue
            if self.layout == OWNING:
                vecs = np.concatenate([self.payload[c] for c in probes], axis=0)
            else:
                vecs = self.base.values[rows]
            visited += rows.size
            scores = pairwise(queries.values[qi : qi + 1], vecs, self.metric)[0]
            top = select_top(scores, rows, min(k, rows.size), self.metric)
            per_query.append((np.full(len(top), qi, dtype=np.int64), rows[top], scores[top]))
        return _assemble(per_query, queries.count, self.metric, visited)

    def structure_nbytes(self) -> int:
        return self.centroids.nbytes

    def payload_nbytes(self) -> int:
        return self.count * self.dim * 4

    def nbytes(self) -> int:
        ids = self.count * 8
        if self.layout == OWNING:
            return self.structure_nbytes() + ids + self.payload_nbytes()
        return self.structure_nbytes() + ids


def _kmeans(data: np.ndarray, nlist: int, seed: int):
    """Lloyd's with seeded uniform init; empty partitions reseeded to the
    farthest point of the largest partition."""
    rng = np.random.default_rng(seed)
    x = np.asarray(data, dtype=np.float64)
    n = x.shape[0]
    init = np.sort(rng.choice(n, size=nlist, replace=False))
    centroids = x[init].copy()
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(KMEANS_MAX_ITERS):
        d = pairwise_sq_l2_fast(x, centroids)
        assign = np.argmin(d, axis=1)
        counts = np.bincount(assign, minlength=nlist)
        while (counts == 0).any():
            empty = int(np.flatnonzero(counts == 0)[0])
            biggest = int(np.argmax(counts))
            members = np.flatnonzero(assign == biggest)
            far = members[np.argmax(d[members, biggest])]
            centroids[empty] = x[far]
            assign[far] = empty
            d[far] = pairwise_sq_l2_fast(x[far : far + 1], centroids)[0]
            counts = np.bincount(assign, minlength=nlist)
        new_centroids = np.zeros_like(centroids)
        np.add.at(new_centroids, assign, x)
        new_centroids /= counts[:, None]
        shift = float(np.max(np.sqrt(np.sum((new_centroids - centroids) ** 2, axis=1))))
        centroids = new_centroids
        if shift < KMEANS_SHIFT_TOL:
            break
    # final assignment against the converged centroids
    d = pairwise_sq_l2_fast(x, centroids)
    assign = np.argmin(d, axis=1)
    counts = np.bincount(assign, minlength=nlist)
    while (counts == 0).any():
        empty = int(np.flatnonzero(counts == 0)[0])
        biggest = int(np.argmax(counts))
        members = np.flatnonzero(assign == biggest)
        far = members[np.argmax(d[members, biggest])]
        centroids[empty] = x[far]
        assign[far] = empty
        d[far] = pairwise_sq_l2_fast(x[far : far + 1], centroids)[0]
        counts = np.bincount(assign, minlength=nlist)
    final = np.zeros_like(centroids)
    np.add.at(final, assign, x)
    final /= np.bincount(assign, minlength=nlist)[:, None]
    return final, assign


# --- kNN graph ----------------------------------------------------------------


@dataclass
class KnnGraphIndex:
    """Flat exact-kNN graph searched by greedy best-first expansion.

    A structural stand-in for production graph indexes: it preserves the
    small-structure / large-payload split the transfer model needs without
    reproducing any particular construction algorithm.
    """

    degree: int
    dim: int
    count: int
    metric: str
    layout: str
    neighbors: np.ndarray               # (count, degree) int64
    entry_points: np.ndarray            # int64
    payload: Optional[np.ndarray] = None  # owning: (count, dim) float32 copy
    base: Optional[EmbeddingColumn] = None

    @classmethod
    def build(
        cls,
        data: EmbeddingColumn,
        degree: int,
        metric: str = SQUARED_L2,
        seed: int = 0,
        layout: str = OWNING,
    ) -> "KnnGraphIndex":
        check_metric(metric)
        if degree < 1 or degree >= data.count:
            raise ParameterError(f"degree must be in [1, {data.count - 1}], got {degree}")
        n = data.count
        neighbors = np.empty((n, degree), dtype=np.int64)
        x = data.values.astype(np.float64)
        if metric == SQUARED_L2:
            score_block = lambda block: pairwise_sq_l2_fast(block, x)
        else:
            score_block = lambda block: -(block @ x.T)
        step = max(1, 2_000_000 // max(1, n))
        for i in range(0, n, step):
            key = score_block(x[i : i + step])
            rows = np.arange(i, i + key.shape[0])
            key[np.arange(key.shape[0]), rows] = np.inf  # no self-loops
            for j in range(key.shape[0]):
                part = np.argpartition(key[j], degree - 1)[:degree]
                bound = key[j][part].max()
                cand = np.flatnonzero(key[j] <= bound)
                order = cand[np.lexsort((cand, key[j][cand]))]
                neighbors[i + j] = order[:degree]
        rng = np.random.default_rng(seed)
        entries = np.sort(rng.choice(n, size=min(GRAPH_ENTRY_POINTS, n), replace=False))
        payload = np.array(data.values, copy=True) if layout == OWNING else None
        return cls(degree, data.dim, n, metric, layout, neighbors,
                   entries.astype(np.int64), payload,
                   base=None if layout == OWNING else data)

    def as_layout(self, layout: str, base: Optional[EmbeddingColumn] = None) -> "KnnGraphIndex":
        if layout == self.layout:
            return self
        if layout == OWNING:
            src = base if base is not None else self.base
            if src is None:
                raise ParameterError("owning view needs the base column")
            return KnnGraphIndex(self.degree, self.dim, self.count, self.metric, OWNING,
                                 self.neighbors, self.entry_points,
                                 np.array(src.values, copy=True))
        if base is None:
            if self.payload is None:
                raise ParameterError("non-owning view needs the base column")
            base = EmbeddingColumn(self.payload)
        return KnnGraphIndex(self.degree, self.dim, self.count, self.metric, NON_OWNING,
                             self.neighbors, self.entry_points, None, base=base)

    def _vectors(self) -> np.ndarray:
        if self.layout == OWNING:
            return self.payload
        if self.base is None:
            raise ParameterError("non-owning graph index has no attached base column")
        return self.base.values

    def search(self, queries: EmbeddingColumn, params: SearchParams) -> NeighborTable:
        if queries.dim != self.dim:
            raise ShapeError(f"query dim {queries.dim} != index dim {self.dim}")
        vectors = self._vectors()
        ef = params.ef
        k = params.k_prime
        per_query = []
        visited_total = 0
        for qi in range(queries.count):
            q = queries.values[qi : qi + 1]
            keys, order, visited = self._search_one(q, vectors, ef)
            visited_total += visited
            top = order[: min(k, len(order))]
            dist = keys[: min(k, len(order))]
            if self.metric == INNER_PRODUCT:
                dist = -dist
            per_query.append((np.full(len(top), qi, dtype=np.int64),
                              np.asarray(top, dtype=np.int64),
                              np.asarray(dist, dtype=np.float64)))
        return _assemble(per_query, queries.count, self.metric, visited_total)

    def _search_one(self, q: np.ndarray, vectors: np.ndarray, ef: int):
        def score(rows: np.ndarray) -> np.ndarray:
            s = pairwise(q, vectors[rows], self.metric)[0]
            return -s if self.metric == INNER_PRODUCT else s

        entries = self.entry_points
        d0 = score(entries)
        visited = set(int(r) for r in entries)
        candidates = [(float(d), int(r)) for d, r in zip(d0, entries)]
        heapq.heapify(candidates)
        pool = [(-float(d), -int(r)) for d, r in zip(d0, entries)]
        heapq.heapify(pool)
        while len(pool) > ef:
            heapq.heappop(pool)
        evals = len(entries)
        while candidates:
            d, row = heapq.heappop(candidates)
            if len(pool) >= ef:
                worst_d, worst_r = -pool[0][0], -pool[0][1]
                if (d, row) > (worst_d, worst_r):
                    break
            nbrs = [int(v) for v in self.neighbors[row] if int(v) not in visited]
            if not nbrs:
                continue
            visited.update(nbrs)
            nb = np.asarray(nbrs, dtype=np.int64)
            nd = score(nb)
            evals += len(nb)
            for dd, rr in zip(nd, nb):
                dd, rr = float(dd), int(rr)
                if len(pool) < ef:
                    heapq.heappush(pool, (-dd, -rr))
                    heapq.heappush(candidates, (dd, rr))
                else:
                    worst_d, worst_r = -pool[0][0], -pool[0][1]
                    if (dd, rr) < (worst_d, worst_r):
                        heapq.heapreplace(pool, (-dd, -rr))
                        heapq.heappush(candidates, (dd, rr))
        items = sorted(((-nd, -nr) for nd, nr in pool))
        keys = np.array([d for d, _ in items], dtype=np.float64)
        order = np.array([r for _, r in items], dtype=np.int64)
        return keys, order, evals

    def reachable_from_entries(self) -> int:
        """Nodes reachable from the entry points (connectivity diagnostic)."""
        seen = np.zeros(self.count, dtype=bool)
        stack = list(self.entry_points)
        seen[self.entry_points] = True
        while stack:
            row = stack.pop()
            for nb in self.neighbors[row]:
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(int(nb))
        return int(seen.sum())

    def structure_nbytes(self) -> int:
        return self.neighbors.size * 4 + self.entry_points.size * 8

    def payload_nbytes(self) -> int:
        return self.count * self.dim * 4

    def nbytes(self) -> int:
        if self.layout == OWNING:
            return self.structure_nbytes() + self.payload_nbytes()
        return self.structure_nbytes()


# --- serialization -------------------------------------------------------------

_MAGIC = b"SVIX"
_VERSION = 1
_KIND_CODE = {"flat": 0, "ivf": 1, "graph": 2}
_METRIC_CODE = {SQUARED_L2: 0, INNER_PRODUCT: 1}
_LAYOUT_CODE = {NON_OWNING: 0, OWNING: 1}


def _write_array(buf, arr: np.ndarray, dtype: str):
    data = np.ascontiguousarray(arr, dtype=np.dtype(dtype))
    buf.write(struct.pack("<Q", data.size))
    buf.write(data.tobytes())


def _read_array(buf, dtype: str) -> np.ndarray:
    (size,) = struct.unpack("<Q", buf.read(8))
    raw = buf.read(size * np.dtype(dtype).itemsize)
    return np.frombuffer(raw, dtype=np.dtype(dtype)).copy()


def save_index(index, path) -> None:
    """Little-endian binary dump; round-trips bit-exactly."""
    kind = ("flat" if isinstance(index, FlatIndex)
            else "ivf" if isinstance(index, IvfIndex) else "graph")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<HBBB", _VERSION, _KIND_CODE[kind],
                            _METRIC_CODE[index.metric], _LAYOUT_CODE[index.layout]))
        if kind == "flat":
            f.write(struct.pack("<IIQ", 0, index.dim, index.count))
        elif kind == "ivf":
            f.write(struct.pack("<IIQ", index.nlist, index.dim, index.count))
            _write_array(f, index.centroids, "<f4")
            _write_array(f, np.array([len(p) for p in index.partitions], np.int64), "<i8")
            _write_array(f, np.concatenate(index.partitions) if index.partitions else np.empty(0, np.int64), "<i8")
            if index.layout == OWNING:
                _write_array(f, np.concatenate(index.payload, axis=0).reshape(-1), "<f4")
        else:
            f.write(struct.pack("<IIQ", index.degree, index.dim, index.count))
            _write_array(f, index.entry_points, "<i8")
            _write_array(f, index.neighbors.reshape(-1), "<i8")
            if index.layout == OWNING:
                _write_array(f, index.payload.reshape(-1), "<f4")


def load_index(path, base: Optional[EmbeddingColumn] = None):
    """Load an index; non-owning layouts need the base column re-attached."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ParameterError(f"not an index file: bad magic {magic!r}")
        version, kind_code, metric_code, layout_code = struct.unpack("<HBBB", f.read(5))
        if version != _VERSION:
            raise ParameterError(f"unsupported index file version {version}")
        kind = {v: k for k, v in _KIND_CODE.items()}[kind_code]
        metric = {v: k for k, v in _METRIC_CODE.items()}[metric_code]
        layout = {v: k for k, v in _LAYOUT_CODE.items()}[layout_code]
        p1, dim, count = struct.unpack("<IIQ", f.read(16))
        if kind == "flat":
            return FlatIndex(base, dim, count, metric)
        if kind == "ivf":
            centroids = _read_array(f, "<f4").reshape(p1, dim)
            sizes = _read_array(f, "<i8")
            flat_ids = _read_array(f, "<i8")
            partitions = []
            off = 0
            for s in sizes:
                partitions.append(flat_ids[off : off + s])
                off += s
            payload = None
            if layout == OWNING:
                flat_payload = _read_array(f, "<f4").reshape(-1, dim)
                payload = []
                off = 0
                for s in sizes:
                    payload.append(np.ascontiguousarray(flat_payload[off : off + s]))
                    off += s
            return IvfIndex(p1, dim, count, metric, layout, centroids, partitions,
                            payload, base=base if layout == NON_OWNING else None)
        entries = _read_array(f, "<i8")
        neighbors = _read_array(f, "<i8").reshape(count, p1)
        payload = None
        if layout == OWNING:
            payload = _read_array(f, "<f4").reshape(count, dim)
        return KnnGraphIndex(p1, dim, count, metric, layout, neighbors, entries,
                             payload, base=base if layout == NON_OWNING else None)
