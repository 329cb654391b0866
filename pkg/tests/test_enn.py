"""Exhaustive search against an independently written brute-force oracle.

The oracle computes one (query, row) distance at a time in float64 with its
own ordering logic; the engine must reproduce its (row, distance) sequences
bit for bit under the tie rule (distance ascending, row ascending; score
descending for inner product).
"""

import numpy as np
import pytest

from sqlvs.errors import EmptyInputError, ShapeError
from sqlvs.table import EmbeddingColumn
from sqlvs.vecindex import SearchParams, enn_search


def oracle_topk(queries, data, k, metric="squared_l2"):
    """Per query: list of (row, distance) by full scan + explicit sort."""
    out = []
    for q in np.asarray(queries, dtype=np.float64):
        scored = []
        for j, x in enumerate(np.asarray(data, dtype=np.float64)):
            if metric == "squared_l2":
                d = np.sum((q - x) ** 2)
                scored.append((d, j))
            else:
                s = np.sum(q * x)
                scored.append((-s, j))
        scored.sort()
        if metric == "squared_l2":
            out.append([(j, d) for d, j in scored[:k]])
        else:
            out.append([(j, -negs) for negs, j in scored[:k]])
    return out


def _engine_pairs(nt, qi):
    rows = nt.query_row == qi
    return list(zip(nt.data_row[rows].tolist(), nt.distance[rows].tolist()))


def test_self_match_distance_zero():
    rng = np.random.default_rng(0)
    data = EmbeddingColumn(rng.standard_normal((50, 8)).astype(np.float32))
    q = EmbeddingColumn(data.values[7:8])
    nt = enn_search(q, data, SearchParams(k=1))
    assert nt.data_row[0] == 7
    assert nt.distance[0] == 0.0


def test_k_equals_count_returns_everything():
    rng = np.random.default_rng(1)
    data = EmbeddingColumn(rng.standard_normal((12, 4)).astype(np.float32))
    q = EmbeddingColumn(rng.standard_normal((1, 4)).astype(np.float32))
    nt = enn_search(q, data, SearchParams(k=12))
    assert len(nt) == 12
    assert list(nt.rank) == list(range(12))
    assert all(np.diff(nt.distance) >= 0)


@pytest.mark.parametrize("metric", ["squared_l2", "inner_product"])
def test_matches_oracle_small(metric):
    rng = np.random.default_rng(2)
    data = EmbeddingColumn(rng.standard_normal((256, 16)).astype(np.float32))
    queries = EmbeddingColumn(rng.standard_normal((32, 16)).astype(np.float32))
    nt = enn_search(queries, data, SearchParams(k=5), metric=metric)
    expected = oracle_topk(queries.values, data.values, 5, metric)
    for qi in range(32):
        assert _engine_pairs(nt, qi) == expected[qi]


def test_tie_rule_duplicate_vectors():
    base = np.zeros((6, 4), dtype=np.float32)
    base[3] = 1.0
    base[5] = 1.0
    data = EmbeddingColumn(base)
    q = EmbeddingColumn(np.zeros((1, 4), dtype=np.float32))
    nt = enn_search(q, data, SearchParams(k=6))
    # ties broken by ascending row id
    assert nt.data_row.tolist() == [0, 1, 2, 4, 3, 5]


def test_errors():
    data = EmbeddingColumn(np.zeros((3, 4), dtype=np.float32))
    q = EmbeddingColumn(np.zeros((1, 5), dtype=np.float32))
    with pytest.raises(ShapeError):
        enn_search(q, data, SearchParams(k=1))
    with pytest.raises(EmptyInputError):
        enn_search(EmbeddingColumn(np.zeros((1, 4), np.float32)),
                   EmbeddingColumn.empty(4), SearchParams(k=1))


def test_visited_rows_counted():
    rng = np.random.default_rng(3)
    data = EmbeddingColumn(rng.standard_normal((40, 4)).astype(np.float32))
    q = EmbeddingColumn(rng.standard_normal((3, 4)).astype(np.float32))
    nt = enn_search(q, data, SearchParams(k=2))
    assert nt.visited_rows == 120
