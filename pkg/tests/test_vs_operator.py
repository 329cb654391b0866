import numpy as np
import pytest

from sqlvs.errors import CapExceededError, SchemaError
from sqlvs.table import EmbeddingColumn, Schema, Table, embedding
from sqlvs.vecindex import IvfIndex, SearchParams
from sqlvs.vecsearch import oversample_postfilter, vector_search_operator


@pytest.fixture
def sides():
    rng = np.random.default_rng(0)
    data = EmbeddingColumn(rng.standard_normal((120, 8)).astype(np.float32))
    dt = Table(Schema([("did", "int64"), ("part", "int64"), ("e", embedding(8))]),
               {"did": np.arange(120), "part": np.arange(120) % 30, "e": data})
    qt = Table(Schema([("qid", "int64"), ("e", embedding(8))]),
               {"qid": np.arange(3), "e": EmbeddingColumn(data.values[[5, 50, 100]])})
    return qt, dt


def test_output_shape_and_columns(sides):
    qt, dt = sides
    out, stats = vector_search_operator(qt, "e", dt, "e", SearchParams(k=4))
    assert out.row_count == 12
    assert out.schema.names == ["qid", "e", "did", "part", "e_d",
                                "vs_distance", "vs_rank", "vs_query_row", "vs_data_row"]
    assert stats.n_queries == 3 and stats.n_results == 12
    # rank-0 hit of each query is its own source row (self match)
    first = out.column("did")[np.asarray(out.column("vs_rank")) == 0]
    assert list(first) == [5, 50, 100]


def test_single_query_distances_ascending(sides):
    qt, dt = sides
    one = Table(qt.schema, {"qid": [0], "e": EmbeddingColumn(qt.column("e").values[:1])})
    out, _ = vector_search_operator(one, "e", dt, "e", SearchParams(k=100))
    assert out.row_count == 100
    assert np.all(np.diff(np.asarray(out.column("vs_distance"))) >= 0)


def test_empty_query_side(sides):
    _, dt = sides
    empty = Table(Schema([("qid", "int64"), ("e", embedding(8))]),
                  {"qid": [], "e": EmbeddingColumn.empty(8)})
    out, stats = vector_search_operator(empty, "e", dt, "e", SearchParams(k=3))
    assert out.row_count == 0
    assert stats.n_results == 0


def test_projection(sides):
    qt, dt = sides
    out, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=2),
                                    output_projection=["qid", "part", "vs_distance"])
    assert out.schema.names == ["qid", "part", "vs_distance"]


def test_missing_embedding_field(sides):
    qt, dt = sides
    with pytest.raises(SchemaError):
        vector_search_operator(qt, "qid", dt, "e", SearchParams(k=1))
    with pytest.raises(SchemaError):
        vector_search_operator(qt, "nope", dt, "e", SearchParams(k=1))


def test_topk_cap_on_device(sides):
    qt, dt = sides
    with pytest.raises(CapExceededError):
        vector_search_operator(qt, "e", dt, "e", SearchParams(k=10, k_prime=5000),
                               device="device", gpu_topk_cap=2048)
    # host path has no cap
    out, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=10, k_prime=5000),
                                    device="host", gpu_topk_cap=2048)
    assert out.row_count == 3 * 120


def test_chunking_invariance(sides):
    qt, dt = sides
    full, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=7))
    chunked, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=7),
                                        chunk_queries=1)
    assert np.array_equal(np.asarray(full.column("vs_data_row")),
                          np.asarray(chunked.column("vs_data_row")))
    assert np.array_equal(np.asarray(full.column("vs_distance")),
                          np.asarray(chunked.column("vs_distance")))


def test_with_index(sides):
    qt, dt = sides
    idx = IvfIndex.build(dt.column("e"), nlist=6, seed=0)
    out, stats = vector_search_operator(qt, "e", dt, "e",
                                        SearchParams(k=3, nprobe=6), index=idx)
    exact, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=3))
    assert np.array_equal(np.asarray(out.column("vs_data_row")),
                          np.asarray(exact.column("vs_data_row")))
    assert stats.index_kind == "ivf"


def test_postfilter_true_keeps_first_k(sides):
    qt, dt = sides
    out, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=2, k_prime=8))
    kept, shortfalls = oversample_postfilter(out, None, 2)
    assert kept.row_count == 6
    assert shortfalls == {}
    assert np.asarray(kept.column("vs_rank")).max() <= 1


def test_postfilter_shortfall_reported(sides):
    qt, dt = sides
    out, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=3, k_prime=4))
    # keep only rank-3 rows: every query falls short by 2
    kept, shortfalls = oversample_postfilter(out, "vs_rank >= 3", 3)
    assert kept.row_count == 3
    assert shortfalls == {0: 2, 1: 2, 2: 2}


def test_postfilter_self_exclusion(sides):
    qt, dt = sides
    out, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=1, k_prime=4))
    kept, _ = oversample_postfilter(out, "vs_data_row != 5", 1)
    q0 = kept.column("vs_data_row")[np.asarray(kept.column("vs_query_row")) == 0]
    assert 5 not in q0.tolist()


def test_postfilter_semi_join(sides):
    qt, dt = sides
    out, _ = vector_search_operator(qt, "e", dt, "e", SearchParams(k=2, k_prime=50))
    keep_set = Table.from_pairs([("p", "int64", [0, 1, 2, 3, 4])])
    kept, _ = oversample_postfilter(out, None, 2, keep_set=keep_set,
                                    semi_keys=("part", "p"))
    assert set(np.asarray(kept.column("part")).tolist()) <= {0, 1, 2, 3, 4}


def test_query_oversample_ratio_large(sides):
    # the Q15-style configuration: k' far above k, trimmed back after filtering
    qt, dt = sides
    params = SearchParams(k=2, k_prime=100)
    out, _ = vector_search_operator(qt, "e", dt, "e", params)
    kept, shortfalls = oversample_postfilter(out, "part >= 15", 2)
    assert shortfalls == {}
    per_query = np.bincount(np.asarray(kept.column("vs_query_row")), minlength=3)
    assert per_query.tolist() == [2, 2, 2]
