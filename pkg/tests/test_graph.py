import numpy as np
import pytest

from sqlvs.errors import ParameterError
from sqlvs.table import EmbeddingColumn
from sqlvs.vecindex import NON_OWNING, OWNING, KnnGraphIndex, SearchParams, enn_search


def brute_force_knn(data, degree):
    """Independent oracle: each node's `degree` nearest others, tie rule applied."""
    x = np.asarray(data, dtype=np.float64)
    n = len(x)
    out = np.empty((n, degree), dtype=np.int64)
    for i in range(n):
        scored = sorted((np.sum((x[i] - x[j]) ** 2), j) for j in range(n) if j != i)
        out[i] = [j for _, j in scored[:degree]]
    return out


def test_collinear_middle_point():
    pts = np.array([[0.0], [1.0], [3.0]], dtype=np.float32)
    idx = KnnGraphIndex.build(EmbeddingColumn(pts), degree=1)
    assert idx.neighbors[1, 0] == 0  # nearer endpoint


def test_complete_graph():
    rng = np.random.default_rng(0)
    data = EmbeddingColumn(rng.standard_normal((9, 3)).astype(np.float32))
    idx = KnnGraphIndex.build(data, degree=8)
    for i in range(9):
        assert sorted(idx.neighbors[i].tolist()) == [j for j in range(9) if j != i]


def test_neighbors_match_brute_force_oracle():
    rng = np.random.default_rng(1)
    data = EmbeddingColumn(rng.standard_normal((512, 16)).astype(np.float32))
    idx = KnnGraphIndex.build(data, degree=10)
    expected = brute_force_knn(data.values, 10)
    assert np.array_equal(idx.neighbors, expected)


def test_no_self_loops_and_valid_ids():
    rng = np.random.default_rng(2)
    data = EmbeddingColumn(rng.standard_normal((100, 8)).astype(np.float32))
    idx = KnnGraphIndex.build(data, degree=6)
    for i in range(100):
        assert i not in idx.neighbors[i]
    assert idx.neighbors.min() >= 0 and idx.neighbors.max() < 100
    assert len(idx.entry_points) == 8
    assert len(set(idx.entry_points.tolist())) == 8


def test_degree_bounds():
    data = EmbeddingColumn(np.zeros((5, 2), np.float32))
    with pytest.raises(ParameterError):
        KnnGraphIndex.build(data, degree=5)


def test_entry_point_query_found():
    rng = np.random.default_rng(3)
    data = EmbeddingColumn(rng.standard_normal((200, 8)).astype(np.float32))
    idx = KnnGraphIndex.build(data, degree=8, seed=1)
    entry = int(idx.entry_points[0])
    q = EmbeddingColumn(data.values[entry : entry + 1])
    nt = idx.search(q, SearchParams(k=1, ef=16))
    assert nt.data_row[0] == entry
    assert nt.distance[0] == 0.0


def test_full_ef_full_recall_when_connected():
    # unit-normalized mixture data, instance verified fully reachable
    rng = np.random.default_rng(3)
    centers = rng.standard_normal((8, 12))
    lab = rng.integers(0, 8, 300)
    pts = centers[lab] + 0.6 * rng.standard_normal((300, 12))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    data = EmbeddingColumn(pts.astype(np.float32))
    idx = KnnGraphIndex.build(data, degree=12, seed=0)
    assert idx.reachable_from_entries() == 300, "test needs a connected instance"
    queries = EmbeddingColumn(rng.standard_normal((8, 12)).astype(np.float32))
    params = SearchParams(k=10, ef=300)
    got = idx.search(queries, params)
    want = enn_search(queries, data, params)
    for qi in range(queries.count):
        g = set(got.data_row[got.query_row == qi][:10].tolist())
        w = set(want.data_row[want.query_row == qi][:10].tolist())
        assert g == w


def test_search_deterministic():
    rng = np.random.default_rng(5)
    data = EmbeddingColumn(rng.standard_normal((400, 8)).astype(np.float32))
    idx = KnnGraphIndex.build(data, degree=8, seed=0)
    queries = EmbeddingColumn(rng.standard_normal((5, 8)).astype(np.float32))
    a = idx.search(queries, SearchParams(k=5, ef=40))
    b = idx.search(queries, SearchParams(k=5, ef=40))
    assert np.array_equal(a.data_row, b.data_row)
    assert np.array_equal(a.distance, b.distance)


def test_recall_non_decreasing_in_ef(ds001, catalog):
    from sqlvs.datagen import make_query_vectors

    idx = catalog.get("graph:reviews", "owning")
    data = ds001.table("reviews").column("rv_embedding")
    queries = make_query_vectors(ds001, "review", 6, seed=9)
    truth = enn_search(queries, data, SearchParams(k=20))
    true_sets = [set(truth.data_row[truth.query_row == qi].tolist())
                 for qi in range(queries.count)]
    last = -1.0
    for ef in (20, 40, 80, 160, 320, 640):
        nt = idx.search(queries, SearchParams(k=20, ef=ef))
        hits = sum(len(set(nt.data_row[nt.query_row == qi].tolist()) & true_sets[qi])
                   for qi in range(queries.count))
        rec = hits / (20 * queries.count)
        assert rec >= last - 1e-12
        last = rec


def test_owning_and_non_owning_identical():
    rng = np.random.default_rng(6)
    data = EmbeddingColumn(rng.standard_normal((250, 8)).astype(np.float32))
    owning = KnnGraphIndex.build(data, degree=8, seed=0, layout=OWNING)
    non_owning = owning.as_layout(NON_OWNING, base=data)
    queries = EmbeddingColumn(rng.standard_normal((7, 8)).astype(np.float32))
    a = owning.search(queries, SearchParams(k=5, ef=64))
    b = non_owning.search(queries, SearchParams(k=5, ef=64))
    assert np.array_equal(a.data_row, b.data_row)
    assert np.array_equal(a.distance, b.distance)
    assert non_owning.nbytes() < owning.nbytes()


def test_inner_product_graph_build_and_search():
    rng = np.random.default_rng(7)
    pts = rng.standard_normal((150, 8)).astype(np.float32)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    data = EmbeddingColumn(pts)
    idx = KnnGraphIndex.build(data, degree=12, metric="inner_product", seed=0)
    # neighbor lists are the exact max-score rows (excluding self)
    x = pts.astype(np.float64)
    for i in (0, 50, 149):
        scores = x @ x[i]
        scores[i] = -np.inf
        expected = sorted(range(150), key=lambda j: (-scores[j], j))[:12]
        assert idx.neighbors[i].tolist() == expected
    q = EmbeddingColumn(pts[3:4])
    nt = idx.search(q, SearchParams(k=5, ef=150))
    assert nt.data_row[0] == 3  # self has the maximal score
    assert np.all(np.diff(nt.distance) <= 0)  # scores descend with rank
