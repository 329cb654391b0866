"""Deterministic benchmark dataset generator.

Produces the TPC-H-shaped relational tables plus REVIEWS and IMAGES, each
carrying a synthetic embedding column. Embeddings are drawn from a seeded
Gaussian mixture and unit-normalized; review counts per part follow a
discretized log-normal (long-tailed, mean ~12) and image counts a clamped
rounded Gaussian (mean ~4). Everything is a pure function of the DatasetSpec,
so the same seed reproduces byte-identical files.

On disk a dataset is one `<table>.tbl` per relational table (header row,
`|` delimiter), one `<table>_<field>.emb` binary file per embedding column,
the mixture centers (`centers_<kind>.emb`), and a small `dataset.meta`
key=value manifest.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, SqlVsError
from .expr import date_to_days, days_to_date
from .table import EmbeddingColumn, FieldType, Schema, Table, embedding

PARTS_PER_SF = 200_000
SUPPLIERS_PER_SF = 10_000
CUSTOMERS_PER_SF = 150_000
ORDERS_PER_SF = 1_500_000

_REGIONS = ["AFRICA", "AMERICA", "ASIA", "EUROPE", "MIDDLE EAST"]
_NATIONS = [
    ("ALGERIA", 0), ("ARGENTINA", 1), ("BRAZIL", 1), ("CANADA", 1),
    ("EGYPT", 4), ("ETHIOPIA", 0), ("FRANCE", 3), ("GERMANY", 3),
    ("INDIA", 2), ("INDONESIA", 2), ("IRAN", 4), ("IRAQ", 4),
    ("JAPAN", 2), ("JORDAN", 4), ("KENYA", 0), ("MOROCCO", 0),
    ("MOZAMBIQUE", 0), ("PERU", 1), ("CHINA", 2), ("ROMANIA", 3),
    ("SAUDI ARABIA", 4), ("VIETNAM", 2), ("RUSSIA", 3),
    ("UNITED KINGDOM", 3), ("UNITED STATES", 1),
]
_TYPES_1 = ["STANDARD", "SMALL", "MEDIUM", "LARGE", "ECONOMY", "PROMO"]
_TYPES_2 = ["ANODIZED", "BURNISHED", "PLATED", "POLISHED", "BRUSHED"]
_TYPES_3 = ["TIN", "NICKEL", "BRASS", "STEEL", "COPPER"]
_CONTAINERS_1 = ["SM", "LG", "MED", "JUMBO", "WRAP"]
_CONTAINERS_2 = ["CASE", "BOX", "BAG", "JAR", "PKG", "PACK", "CAN", "DRUM"]

DATE_LO = date_to_days("1992-01-01")
DATE_HI = date_to_days("1998-08-02")


@dataclass(frozen=True)
class DatasetSpec:
    """Scale and distribution knobs; `b` (bytes per dimension) is fixed at 4."""

    sf: float = 0.01
    d_r: int = 64
    d_i: int = 64
    r_bar: float = 12.0
    i_bar: float = 4.0
    n_clusters: int = 64
    noise: float = 0.55
    seed: int = 42
    b: int = 4

    def __post_init__(self):
        if self.sf < 1.0 / PARTS_PER_SF:
            raise ParameterError(f"sf must be >= {1.0 / PARTS_PER_SF}")
        if self.b != 4:
            raise ParameterError("embeddings are 32-bit floats; b is fixed at 4")

    @property
    def n_parts(self) -> int:
        return max(1, round(self.sf * PARTS_PER_SF))

    def expected_embedding_bytes(self) -> float:
        """Scaling law for the total embedding payload."""
        return self.sf * PARTS_PER_SF * (self.r_bar * self.d_r + self.i_bar * self.d_i) * self.b


SCHEMAS = {
    "region": Schema([("r_regionkey", "int64"), ("r_name", "string")]),
    "nation": Schema([("n_nationkey", "int64"), ("n_name", "string"),
                      ("n_regionkey", "int64")]),
    "part": Schema([("p_partkey", "int64"), ("p_name", "string"),
                    ("p_mfgr", "string"), ("p_brand", "string"),
                    ("p_type", "string"), ("p_size", "int64"),
                    ("p_container", "string"), ("p_retailprice", "float64")]),
    "supplier": Schema([("s_suppkey", "int64"), ("s_name", "string"),
                        ("s_nationkey", "int64"), ("s_acctbal", "float64")]),
    "partsupp": Schema([("ps_partkey", "int64"), ("ps_suppkey", "int64"),
                        ("ps_availqty", "int64"), ("ps_supplycost", "float64")]),
    "customer": Schema([("c_custkey", "int64"), ("c_name", "string"),
                        ("c_nationkey", "int64"), ("c_acctbal", "float64")]),
    "orders": Schema([("o_orderkey", "int64"), ("o_custkey", "int64"),
                      ("o_orderdate", "date"), ("o_totalprice", "float64")]),
    "lineitem": Schema([("l_orderkey", "int64"), ("l_linenumber", "int64"),
                        ("l_partkey", "int64"), ("l_suppkey", "int64"),
                        ("l_quantity", "int64"), ("l_extendedprice", "float64"),
                        ("l_discount", "float64"), ("l_returnflag", "string"),
                        ("l_shipdate", "date")]),
}

FOREIGN_KEYS = [
    ("nation", "n_regionkey", "region", "r_regionkey"),
    ("supplier", "s_nationkey", "nation", "n_nationkey"),
    ("customer", "c_nationkey", "nation", "n_nationkey"),
    ("partsupp", "ps_partkey", "part", "p_partkey"),
    ("partsupp", "ps_suppkey", "supplier", "s_suppkey"),
    ("orders", "o_custkey", "customer", "c_custkey"),
    ("lineitem", "l_orderkey", "orders", "o_orderkey"),
    ("lineitem", "l_partkey", "part", "p_partkey"),
    ("lineitem", "l_suppkey", "supplier", "s_suppkey"),
    ("reviews", "rv_partkey", "part", "p_partkey"),
    ("reviews", "rv_custkey", "customer", "c_custkey"),
    ("images", "im_partkey", "part", "p_partkey"),
]


@dataclass
class Dataset:
    spec: DatasetSpec
    tables: dict
    centers: dict  # "review"/"image" -> (n_clusters, d) float32 mixture centers

    def table(self, name: str) -> Table:
        if name not in self.tables:
            raise SqlVsError(f"dataset has no table {name!r}")
        return self.tables[name]


def _review_schema(d_r: int) -> Schema:
    return Schema([("rv_reviewkey", "int64"), ("rv_partkey", "int64"),
                   ("rv_custkey", "int64"), ("rv_embedding", embedding(d_r))])


def _image_schema(d_i: int) -> Schema:
    return Schema([("im_imagekey", "int64"), ("im_partkey", "int64"),
                   ("im_embedding", embedding(d_i))])


_STREAMS = {name: i for i, name in enumerate(
    ["part", "supplier", "partsupp", "customer", "orders", "lineitem",
     "reviews", "images", "review_emb", "image_emb", "centers_r", "centers_i"])}


def _stream_rng(spec: DatasetSpec, stream: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.seed, _STREAMS[stream]]))


def _mixture(rng, centers: np.ndarray, assignment: np.ndarray, noise: float) -> np.ndarray:
    d = centers.shape[1]
    vecs = centers[assignment] + noise * rng.standard_normal((len(assignment), d))
    norms = np.linalg.norm(vecs, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return (vecs / norms).astype(np.float32)


def generate(spec: DatasetSpec) -> Dataset:
    """Build the whole dataset in memory; fully deterministic per seed."""
    n_parts = spec.n_parts
    n_supp = max(1, round(spec.sf * SUPPLIERS_PER_SF))
    n_cust = max(1, round(spec.sf * CUSTOMERS_PER_SF))
    n_orders = max(1, round(spec.sf * ORDERS_PER_SF))

    tables = {}
    tables["region"] = Table(SCHEMAS["region"], {
        "r_regionkey": np.arange(len(_REGIONS), dtype=np.int64),
        "r_name": np.array(_REGIONS, dtype=object),
    })
    tables["nation"] = Table(SCHEMAS["nation"], {
        "n_nationkey": np.arange(len(_NATIONS), dtype=np.int64),
        "n_name": np.array([n for n, _ in _NATIONS], dtype=object),
        "n_regionkey": np.array([r for _, r in _NATIONS], dtype=np.int64),
    })

    rng = _stream_rng(spec, "part")
    partkeys = np.arange(1, n_parts + 1, dtype=np.int64)
    brands = np.array([f"Brand#{m}{n}" for m, n in zip(
        rng.integers(1, 6, n_parts), rng.integers(1, 6, n_parts))], dtype=object)
    types = np.array([f"{_TYPES_1[a]} {_TYPES_2[b]} {_TYPES_3[c]}" for a, b, c in zip(
        rng.integers(0, len(_TYPES_1), n_parts),
        rng.integers(0, len(_TYPES_2), n_parts),
        rng.integers(0, len(_TYPES_3), n_parts))], dtype=object)
    containers = np.array([f"{_CONTAINERS_1[a]} {_CONTAINERS_2[b]}" for a, b in zip(
        rng.integers(0, len(_CONTAINERS_1), n_parts),
        rng.integers(0, len(_CONTAINERS_2), n_parts))], dtype=object)
    retail = np.round(rng.uniform(900.0, 2000.0, n_parts), 2)
    tables["part"] = Table(SCHEMAS["part"], {
        "p_partkey": partkeys,
        "p_name": np.array([f"part {k}" for k in partkeys], dtype=object),
        "p_mfgr": np.array([f"Manufacturer#{(k % 5) + 1}" for k in partkeys], dtype=object),
        "p_brand": brands,
        "p_type": types,
        "p_size": rng.integers(1, 51, n_parts).astype(np.int64),
        "p_container": containers,
        "p_retailprice": retail,
    })

    rng = _stream_rng(spec, "supplier")
    suppkeys = np.arange(1, n_supp + 1, dtype=np.int64)
    tables["supplier"] = Table(SCHEMAS["supplier"], {
        "s_suppkey": suppkeys,
        "s_name": np.array([f"Supplier#{k:09d}" for k in suppkeys], dtype=object),
        "s_nationkey": rng.integers(0, len(_NATIONS), n_supp).astype(np.int64),
        "s_acctbal": np.round(rng.uniform(-999.99, 9999.99, n_supp), 2),
    })

    rng = _stream_rng(spec, "partsupp")
    ps_part = np.repeat(partkeys, 4)
    ps_supp = _partsupp_suppliers(partkeys, n_supp)
    tables["partsupp"] = Table(SCHEMAS["partsupp"], {
        "ps_partkey": ps_part,
        "ps_suppkey": ps_supp,
        "ps_availqty": rng.integers(1, 10_000, len(ps_part)).astype(np.int64),
        "ps_supplycost": np.round(rng.uniform(1.0, 1000.0, len(ps_part)), 2),
    })

    rng = _stream_rng(spec, "customer")
    custkeys = np.arange(1, n_cust + 1, dtype=np.int64)
    tables["customer"] = Table(SCHEMAS["customer"], {
        "c_custkey": custkeys,
        "c_name": np.array([f"Customer#{k:09d}" for k in custkeys], dtype=object),
        "c_nationkey": rng.integers(0, len(_NATIONS), n_cust).astype(np.int64),
        "c_acctbal": np.round(rng.uniform(-999.99, 9999.99, n_cust), 2),
    })

    rng = _stream_rng(spec, "orders")
    # every third customer stays orderless so distribution queries see zeros
    eligible = custkeys[custkeys % 3 != 0]
    orderkeys = np.arange(1, n_orders + 1, dtype=np.int64)
    tables["orders"] = Table(SCHEMAS["orders"], {
        "o_orderkey": orderkeys,
        "o_custkey": rng.choice(eligible, n_orders).astype(np.int64),
        "o_orderdate": rng.integers(DATE_LO, DATE_HI + 1, n_orders).astype(np.int32),
        "o_totalprice": np.round(rng.uniform(1000.0, 500_000.0, n_orders), 2),
    })

    rng = _stream_rng(spec, "lineitem")
    lines_per_order = rng.integers(1, 8, n_orders)
    l_order = np.repeat(orderkeys, lines_per_order)
    n_lines = len(l_order)
    starts = np.cumsum(lines_per_order) - lines_per_order
    l_linenumber = (np.arange(n_lines) - np.repeat(starts, lines_per_order) + 1).astype(np.int64)
    l_part = rng.integers(1, n_parts + 1, n_lines).astype(np.int64)
    supp_slot = rng.integers(0, 4, n_lines)
    l_supp = _supplier_for(l_part, supp_slot, n_supp)
    qty = rng.integers(1, 51, n_lines).astype(np.int64)
    orderdate = np.asarray(tables["orders"].column("o_orderdate"))
    ship = orderdate[l_order - 1].astype(np.int64) + rng.integers(1, 122, n_lines)
    flag_draw = rng.random(n_lines)
    flags = np.where(flag_draw < 0.25, "R", np.where(flag_draw < 0.5, "A", "N")).astype(object)
    tables["lineitem"] = Table(SCHEMAS["lineitem"], {
        "l_orderkey": l_order,
        "l_linenumber": l_linenumber,
        "l_partkey": l_part,
        "l_suppkey": l_supp,
        "l_quantity": qty,
        "l_extendedprice": np.round(qty * retail[l_part - 1], 2),
        "l_discount": np.round(rng.uniform(0.0, 0.10, n_lines), 2),
        "l_returnflag": flags,
        "l_shipdate": ship.astype(np.int32),
    })

    centers_r = _stream_rng(spec, "centers_r").standard_normal(
        (spec.n_clusters, spec.d_r)).astype(np.float64)
    centers_r /= np.linalg.norm(centers_r, axis=1, keepdims=True)
    centers_i = _stream_rng(spec, "centers_i").standard_normal(
        (spec.n_clusters, spec.d_i)).astype(np.float64)
    centers_i /= np.linalg.norm(centers_i, axis=1, keepdims=True)

    rng = _stream_rng(spec, "reviews")
    mu = np.log(spec.r_bar) - 0.5  # lognormal(mu, 1) has mean r_bar
    review_counts = np.maximum(0, np.round(rng.lognormal(mu, 1.0, n_parts))).astype(np.int64)
    rv_part = np.repeat(partkeys, review_counts)
    n_reviews = len(rv_part)
    rv_cust = rng.choice(custkeys, n_reviews).astype(np.int64) if n_reviews else np.empty(0, np.int64)
    emb_rng = _stream_rng(spec, "review_emb")
    rv_cluster = emb_rng.integers(0, spec.n_clusters, n_reviews)
    tables["reviews"] = Table(_review_schema(spec.d_r), {
        "rv_reviewkey": np.arange(1, n_reviews + 1, dtype=np.int64),
        "rv_partkey": rv_part,
        "rv_custkey": rv_cust,
        "rv_embedding": EmbeddingColumn(_mixture(emb_rng, centers_r, rv_cluster, spec.noise)),
    })

    rng = _stream_rng(spec, "images")
    image_counts = np.maximum(0, np.round(rng.normal(spec.i_bar, 1.5, n_parts))).astype(np.int64)
    im_part = np.repeat(partkeys, image_counts)
    n_images = len(im_part)
    emb_rng = _stream_rng(spec, "image_emb")
    im_cluster = emb_rng.integers(0, spec.n_clusters, n_images)
    tables["images"] = Table(_image_schema(spec.d_i), {
        "im_imagekey": np.arange(1, n_images + 1, dtype=np.int64),
        "im_partkey": im_part,
        "im_embedding": EmbeddingColumn(_mixture(emb_rng, centers_i, im_cluster, spec.noise)),
    })

    return Dataset(spec, tables, {"review": centers_r.astype(np.float32),
                                  "image": centers_i.astype(np.float32)})


def _partsupp_suppliers(partkeys: np.ndarray, n_supp: int) -> np.ndarray:
    slots = np.tile(np.arange(4), len(partkeys))
    parts4 = np.repeat(partkeys, 4)
    return _supplier_for(parts4, slots, n_supp)


def _supplier_for(partkey: np.ndarray, slot: np.ndarray, n_supp: int) -> np.ndarray:
    """TPC-H style spread of each part's four suppliers across the key space."""
    return ((partkey + slot * (n_supp // 4 + (partkey - 1) // n_supp)) % n_supp + 1).astype(np.int64)


def make_query_vectors(dataset: Dataset, kind: str, n: int, seed: int) -> EmbeddingColumn:
    """Query embeddings near the mixture centers, unit-normalized."""
    if kind not in dataset.centers:
        raise ParameterError(f"unknown embedding kind {kind!r}")
    table = dataset.table("reviews" if kind == "review" else "images")
    if table.row_count == 0:
        raise ParameterError(f"{kind} table is empty")
    centers = dataset.centers[kind].astype(np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([dataset.spec.seed, 1000, seed]))
    which = rng.integers(0, len(centers), n)
    vecs = _mixture(rng, centers, which, 0.3 * dataset.spec.noise)
    return EmbeddingColumn(vecs)


def check_integrity(dataset: Dataset) -> list:
    """Referential-integrity violations as (child, fk, parent) tuples; empty = pass."""
    bad = []
    for child, fk, parent, pk in FOREIGN_KEYS:
        child_col = np.asarray(dataset.table(child).column(fk))
        parent_col = np.asarray(dataset.table(parent).column(pk))
        if not np.isin(child_col, parent_col).all():
            bad.append((child, fk, parent))
    ps = dataset.table("partsupp")
    li = dataset.table("lineitem")
    pairs = set(zip(np.asarray(ps.column("ps_partkey")).tolist(),
                    np.asarray(ps.column("ps_suppkey")).tolist()))
    li_pairs = set(zip(np.asarray(li.column("l_partkey")).tolist(),
                       np.asarray(li.column("l_suppkey")).tolist()))
    if not li_pairs <= pairs:
        bad.append(("lineitem", "(l_partkey,l_suppkey)", "partsupp"))
    return bad


# --- file formats -----------------------------------------------------------

_EMB_MAGIC = b"SVEC"
_EMB_VERSION = 1


def write_embeddings(path, column: EmbeddingColumn) -> None:
    with open(path, "wb") as f:
        f.write(_EMB_MAGIC)
        f.write(struct.pack("<HBBQI", _EMB_VERSION, 0, 0, column.count, column.dim))
        f.write(np.ascontiguousarray(column.values, dtype="<f4").tobytes())


def read_embeddings(path) -> EmbeddingColumn:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _EMB_MAGIC:
            raise SqlVsError(f"not an embedding file: bad magic {magic!r}")
        version, elem, _pad, count, dim = struct.unpack("<HBBQI", f.read(16))
        if version != _EMB_VERSION or elem != 0:
            raise SqlVsError("unsupported embedding file header")
        raw = f.read(count * dim * 4)
        arr = np.frombuffer(raw, dtype="<f4").reshape(count, dim).copy()
    return EmbeddingColumn(arr)


def _format_cell(ftype: FieldType, value) -> str:
    if ftype.kind == "float64":
        return format(float(value), ".17g")
    if ftype.kind == "date":
        return days_to_date(int(value))
    return str(value)


def save_dataset(dataset: Dataset, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in dataset.tables.items():
        scalar_fields = [(n, t) for n, t in table.schema.fields if not t.is_embedding]
        with open(out / f"{name}.tbl", "w", encoding="utf-8") as f:
            f.write("|".join(n for n, _ in scalar_fields) + "\n")
            cols = [np.asarray(table.columns[n]) for n, _ in scalar_fields]
            types = [t for _, t in scalar_fields]
            for i in range(table.row_count):
                f.write("|".join(_format_cell(t, c[i]) for t, c in zip(types, cols)) + "\n")
        for n, t in table.schema.fields:
            if t.is_embedding:
                write_embeddings(out / f"{name}_{n}.emb", table.columns[n])
    for kind, centers in dataset.centers.items():
        write_embeddings(out / f"centers_{kind}.emb", EmbeddingColumn(centers))
    spec = dataset.spec
    with open(out / "dataset.meta", "w", encoding="utf-8") as f:
        for key in ("sf", "d_r", "d_i", "r_bar", "i_bar", "n_clusters", "noise", "seed"):
            f.write(f"{key} = {getattr(spec, key)}\n")


def load_dataset(indir) -> Dataset:
    src = Path(indir)
    meta = {}
    with open(src / "dataset.meta", "r", encoding="utf-8") as f:
        for line in f:
            key, _, val = line.partition("=")
            meta[key.strip()] = val.strip()
    spec = DatasetSpec(
        sf=float(meta["sf"]), d_r=int(meta["d_r"]), d_i=int(meta["d_i"]),
        r_bar=float(meta["r_bar"]), i_bar=float(meta["i_bar"]),
        n_clusters=int(meta["n_clusters"]), noise=float(meta["noise"]),
        seed=int(meta["seed"]),
    )
    tables = {}
    for name, schema in list(SCHEMAS.items()):
        tables[name] = _load_table(src, name, schema)
    tables["reviews"] = _load_table(src, "reviews", _review_schema(spec.d_r))
    tables["images"] = _load_table(src, "images", _image_schema(spec.d_i))
    centers = {
        "review": read_embeddings(src / "centers_review.emb").values,
        "image": read_embeddings(src / "centers_image.emb").values,
    }
    return Dataset(spec, tables, centers)


def _load_table(src: Path, name: str, schema: Schema) -> Table:
    scalar_fields = [(n, t) for n, t in schema.fields if not t.is_embedding]
    with open(src / f"{name}.tbl", "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n").split("|")
        if header != [n for n, _ in scalar_fields]:
            raise SqlVsError(f"unexpected header in {name}.tbl")
        raw = [line.rstrip("\n").split("|") for line in f]
    cols = {}
    for j, (n, t) in enumerate(scalar_fields):
        vals = [row[j] for row in raw]
        if t.kind == "int64":
            cols[n] = np.array(vals, dtype=np.int64) if vals else np.empty(0, np.int64)
        elif t.kind == "float64":
            cols[n] = np.array(vals, dtype=np.float64) if vals else np.empty(0, np.float64)
        elif t.kind == "date":
            cols[n] = np.array([date_to_days(v) for v in vals], dtype=np.int32)
        else:
            cols[n] = np.array(vals, dtype=object)
    for n, t in schema.fields:
        if t.is_embedding:
            cols[n] = read_embeddings(src / f"{name}_{n}.emb")
    return Table(schema, cols)
