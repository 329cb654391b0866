"""The binary vector-search operator and the oversample/post-filter step.

The operator takes a query side and a data side (both materialized tables,
the blocking-port contract) and emits one output row per (query, neighbor)
pair: all query-side columns, all data-side columns (renamed with an `_d`
suffix on collision), plus vs_distance, vs_rank, vs_query_row and
vs_data_row. A query side of one row is plain vector search; more rows make
it a similarity join. Results are chunking-invariant: splitting the query
batch internally never changes the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .distances import SQUARED_L2
from .errors import CapExceededError, SchemaError
from .expr import Expr, eval_predicate, parse_expr
from .table import Schema, Table, filter_rows, gather, project
from .vecindex import NeighborTable, SearchParams, enn_search

VS_DISTANCE = "vs_distance"
VS_RANK = "vs_rank"
VS_QUERY_ROW = "vs_query_row"
VS_DATA_ROW = "vs_data_row"
_RESERVED = (VS_DISTANCE, VS_RANK, VS_QUERY_ROW, VS_DATA_ROW)


@dataclass
class VsStats:
    """Search accounting the placement simulator consumes."""

    n_queries: int
    n_data: int
    n_results: int
    visited_rows: int
    k: int
    k_prime: int
    index_kind: str  # "enn" | "ivf" | "graph"


def _embedding_column(table: Table, field: str):
    if field not in table.schema:
        raise SchemaError(f"embedding field {field!r} not in schema")
    ftype = table.schema.type_of(field)
    if not ftype.is_embedding:
        raise SchemaError(f"field {field!r} is not an embedding column")
    return table.column(field)


def _concat_neighbor_tables(parts, n_queries, offsets, metric):
    qr = np.concatenate([p.query_row + off for p, off in zip(parts, offsets)]) \
        if parts else np.empty(0, np.int64)
    dr = np.concatenate([p.data_row for p in parts]) if parts else np.empty(0, np.int64)
    ds = np.concatenate([p.distance for p in parts]) if parts else np.empty(0, np.float64)
    rk = np.concatenate([p.rank for p in parts]) if parts else np.empty(0, np.int64)
    visited = sum(p.visited_rows for p in parts)
    return NeighborTable(qr, dr, ds, rk, n_queries, metric, visited)


def vector_search_operator(
    query_table: Table,
    query_field: str,
    data_table: Table,
    data_field: str,
    params: SearchParams,
    metric: str = SQUARED_L2,
    index=None,
    output_projection: Optional[list] = None,
    device: str = "host",
    gpu_topk_cap: Optional[int] = None,
    chunk_queries: Optional[int] = None,
):
    """Run the search and build the joined output table.

    Returns (table, stats). With `index` set, the search goes through the
    index (its metric wins); otherwise it is exhaustive over the data side.
    On a device placement, k' above `gpu_topk_cap` raises CapExceededError
    so the caller can fall back to host execution.
    """
    queries = _embedding_column(query_table, query_field)
    data = _embedding_column(data_table, data_field)
    if device == "device" and gpu_topk_cap is not None and params.k_prime > gpu_topk_cap:
        raise CapExceededError(params.k_prime, gpu_topk_cap)

    if queries.count == 0:
        nt = NeighborTable(np.empty(0, np.int64), np.empty(0, np.int64),
                           np.empty(0, np.float64), np.empty(0, np.int64),
                           0, metric, 0)
    else:
        step = chunk_queries or queries.count
        parts, offsets = [], []
        for i in range(0, queries.count, step):
            sub = type(queries)(queries.values[i : i + step])
            if index is None:
                parts.append(enn_search(sub, data, params, metric))
            else:
                parts.append(index.search(sub, params))
            offsets.append(i)
        use_metric = index.metric if index is not None else metric
        nt = _concat_neighbor_tables(parts, queries.count, offsets, use_metric)

    out = build_vs_output(nt, query_table, data_table)
    if output_projection is not None:
        out = project(out, output_projection)
    stats = VsStats(
        n_queries=queries.count,
        n_data=data.count,
        n_results=len(nt),
        visited_rows=nt.visited_rows,
        k=params.k,
        k_prime=params.k_prime,
        index_kind="enn" if index is None else
        ("ivf" if hasattr(index, "nlist") else
         "graph" if hasattr(index, "degree") else "enn"),
    )
    return out, stats


def build_vs_output(nt: NeighborTable, query_table: Table, data_table: Table) -> Table:
    """Gather both sides by the neighbor pairs and add the vs_* columns."""
    qpart = gather(query_table, nt.query_row)
    dpart = gather(data_table, nt.data_row)
    qnames = set(query_table.schema.names)
    fields = list(qpart.schema.fields)
    cols = dict(qpart.columns)
    masks = dict(qpart.valid)
    for name, ftype in dpart.schema.fields:
        out_name = name + "_d" if (name in qnames or name in _RESERVED) else name
        if out_name in cols:
            raise SchemaError(f"data-side field {name!r} collides even after rename")
        fields.append((out_name, ftype))
        cols[out_name] = dpart.columns[name]
        if name in dpart.valid:
            masks[out_name] = dpart.valid[name]
    for name, ftype, values in (
        (VS_DISTANCE, "float64", nt.distance),
        (VS_RANK, "int64", nt.rank),
        (VS_QUERY_ROW, "int64", nt.query_row),
        (VS_DATA_ROW, "int64", nt.data_row),
    ):
        if name in cols:
            raise SchemaError(f"input field {name!r} shadows a vs output column")
        fields.append((name, ftype))
        cols[name] = values
    from .table import FieldType

    schema = Schema([(n, t if not isinstance(t, str) else FieldType(t)) for n, t in fields])
    return Table(schema, cols, masks)


def oversample_postfilter(
    vs_output: Table,
    keep: Expr | str | np.ndarray | None,
    k: int,
    keep_set: Optional[Table] = None,
    semi_keys: Optional[tuple] = None,
):
    """Per query, the first k rows (rank order) surviving the keep predicate.

    `keep` is a predicate over the joined output (or a precomputed mask, or
    None for all-pass). `keep_set`/`semi_keys` add a semi-join condition:
    the row survives only when its semi_keys[0] value appears in keep_set's
    semi_keys[1] column. Returns (table, shortfalls) where shortfalls maps a
    query row id to how many of the k rows it is missing; shortfall is a
    reported condition, not an error.
    """
    if VS_QUERY_ROW not in vs_output.schema or VS_RANK not in vs_output.schema:
        raise SchemaError("post-filter input must come from the vector search operator")
    n = vs_output.row_count
    if keep is None:
        mask = np.ones(n, dtype=bool)
    elif isinstance(keep, np.ndarray):
        mask = np.asarray(keep, dtype=bool)
    else:
        if isinstance(keep, str):
            keep = parse_expr(keep)
        mask = eval_predicate(vs_output, keep)
    if keep_set is not None:
        left_key, right_key = semi_keys
        member = np.isin(np.asarray(vs_output.column(left_key)),
                         np.asarray(keep_set.column(right_key)))
        mask = mask & member

    qrows = np.asarray(vs_output.column(VS_QUERY_ROW))
    survivors = filter_rows(vs_output, mask)
    sq = np.asarray(survivors.column(VS_QUERY_ROW))
    # rows arrive sorted by (query, rank); take the first k per query
    new_group = np.r_[True, sq[1:] != sq[:-1]] if len(sq) else np.empty(0, bool)
    seq = np.arange(len(sq)) - np.maximum.accumulate(np.where(new_group, np.arange(len(sq)), 0)) \
        if len(sq) else np.empty(0, np.int64)
    out = filter_rows(survivors, seq < k)

    shortfalls = {}
    for q in np.unique(qrows):
        got = int(np.count_nonzero(np.asarray(out.column(VS_QUERY_ROW)) == q))
        if got < k:
            shortfalls[int(q)] = k - got
    return out, shortfalls
