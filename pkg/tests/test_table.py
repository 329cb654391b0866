import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sqlvs.errors import BoundsError, SchemaError, ShapeError
from sqlvs.table import (
    EmbeddingColumn,
    Schema,
    Table,
    concat,
    embedding,
    empty_table,
    gather,
    project,
    rename,
)

from conftest import random_table


def test_schema_rejects_duplicates():
    with pytest.raises(SchemaError):
        Schema([("a", "int64"), ("a", "float64")])


def test_embedding_column_invariants():
    with pytest.raises(ShapeError):
        EmbeddingColumn(np.array([np.nan, 1.0], dtype=np.float32), dim=2)
    with pytest.raises(ShapeError):
        EmbeddingColumn(np.arange(5, dtype=np.float32), dim=2)
    col = EmbeddingColumn(np.arange(6, dtype=np.float32), dim=3)
    assert col.count == 2 and col.dim == 3
    assert col.values.flags["C_CONTIGUOUS"]


def test_gather_permutation(small_table):
    g = gather(small_table, [2, 0])
    assert list(g.column("a")) == [2, 3]
    assert list(g.column("s")) == ["x", "x"]


def test_gather_empty(small_table):
    g = gather(small_table, [])
    assert g.row_count == 0
    assert g.schema == small_table.schema


def test_gather_duplicates_match_per_row_copy(small_table):
    rows = [1, 1, 1]
    g = gather(small_table, rows)
    # naive one-row-at-a-time oracle
    for i, r in enumerate(rows):
        assert g.row_tuple(i) == small_table.row_tuple(r)


def test_gather_bounds(small_table):
    with pytest.raises(BoundsError):
        gather(small_table, [4])
    with pytest.raises(BoundsError):
        gather(small_table, [-1])


def test_project_reorders(small_table):
    p = project(small_table, ["s", "a"])
    assert p.schema.names == ["s", "a"]
    assert p.row_count == small_table.row_count


def test_project_identity(small_table):
    p = project(small_table, small_table.schema.names)
    assert p.schema == small_table.schema
    assert list(p.column("b")) == list(small_table.column("b"))


def test_project_idempotent(small_table):
    once = project(small_table, ["b"])
    twice = project(once, ["b"])
    assert once.schema == twice.schema
    assert np.array_equal(np.asarray(once.column("b")), np.asarray(twice.column("b")))


def test_project_unknown_field(small_table):
    with pytest.raises(SchemaError):
        project(small_table, ["nope"])


def test_concat_rows(small_table):
    two = gather(small_table, [0, 1])
    three = gather(small_table, [1, 2, 3])
    c = concat([two, three])
    assert c.row_count == 5
    assert list(c.column("a")) == [3, 1, 1, 2, 1]


def test_concat_identity_and_empty(small_table):
    assert concat([small_table]).row_count == small_table.row_count
    e = concat([], schema=small_table.schema)
    assert e.row_count == 0
    with pytest.raises(SchemaError):
        concat([])


def test_concat_schema_mismatch(small_table):
    other = Table.from_pairs([("a", "int64", [1])])
    with pytest.raises(SchemaError):
        concat([small_table, other])


def test_rename(small_table):
    r = rename(small_table, {"a": "aa"})
    assert r.schema.names == ["aa", "b", "s"]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(0, 24))
def test_gather_project_commute(seed, n):
    rng = np.random.default_rng(seed)
    t = random_table(rng, n, with_embedding=True)
    rows = rng.integers(0, max(n, 1), size=rng.integers(0, 12)) if n else []
    keep = ["v", "k"]
    a = project(gather(t, rows), keep)
    b = gather(project(t, keep), rows)
    assert a.schema == b.schema
    for name in keep:
        assert np.array_equal(np.asarray(a.column(name)), np.asarray(b.column(name)))


def test_embedding_round_trip_through_file(tmp_path):
    from sqlvs.datagen import read_embeddings, write_embeddings

    rng = np.random.default_rng(5)
    col = EmbeddingColumn(rng.standard_normal((37, 9)).astype(np.float32))
    path = tmp_path / "col.emb"
    write_embeddings(path, col)
    back = read_embeddings(path)
    assert back == col


def test_empty_table_has_all_types():
    schema = Schema([("i", "int64"), ("f", "float64"), ("d", "date"),
                     ("s", "string"), ("e", embedding(3))])
    t = empty_table(schema)
    assert t.row_count == 0
