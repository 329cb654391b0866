import numpy as np
import pytest

from sqlvs.datagen import DatasetSpec, generate
from sqlvs.executor import IndexCatalog
from sqlvs.table import EmbeddingColumn, Table
from sqlvs.vecindex import IvfIndex, KnnGraphIndex


@pytest.fixture(scope="session")
def ds001():
    """The seeded SF=0.01 benchmark dataset used across the suite."""
    return generate(DatasetSpec(sf=0.01))


@pytest.fixture(scope="session")
def catalog(ds001):
    """IVF and graph indexes over both embedding tables, built once."""
    cat = IndexCatalog()
    rv = ds001.table("reviews").column("rv_embedding")
    im = ds001.table("images").column("im_embedding")
    cat.register("ivf:reviews", IvfIndex.build(rv, nlist=256, seed=0), rv)
    cat.register("ivf:images", IvfIndex.build(im, nlist=128, seed=0), im)
    cat.register("graph:reviews", KnnGraphIndex.build(rv, degree=16, seed=0), rv)
    cat.register("graph:images", KnnGraphIndex.build(im, degree=16, seed=0), im)
    return cat


@pytest.fixture
def small_table():
    return Table.from_pairs([
        ("a", "int64", [3, 1, 2, 1]),
        ("b", "float64", [0.5, 1.5, 2.5, 3.5]),
        ("s", "string", ["x", "y", "x", "z"]),
    ])


def random_table(rng, n_rows, with_embedding=False, dim=4):
    cols = [
        ("k", "int64", rng.integers(0, 5, n_rows)),
        ("v", "float64", rng.normal(size=n_rows)),
        ("s", "string", np.array([f"s{i}" for i in rng.integers(0, 4, n_rows)], dtype=object)),
    ]
    if with_embedding:
        from sqlvs.table import embedding

        emb = EmbeddingColumn(rng.standard_normal((n_rows, dim)).astype(np.float32))
        cols.append(("e", embedding(dim), emb))
    return Table.from_pairs(cols)
