"""Plan interpreter.

Execution is always host-side: a run produces the query result plus a
per-node base profile (measured seconds, output sizes, search statistics).
Device placement never touches this path; the strategy layer prices a base
run under any (strategy, profile) combination afterwards, which is what
makes result equivalence across strategies structural rather than tested
luck.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .datagen import Dataset, make_query_vectors
from .errors import ParameterError, PlanError
from .expr import T_BOOL, T_DATE, T_FLOAT, T_INT, T_STR, parse_expr
from .relops import AggSpec, JoinSpec, filter as rel_filter, group_aggregate, hash_join, sort_limit
from .table import EmbeddingColumn, FieldType, Schema, Table, embedding, project, rename
from .vecindex import SearchParams
from .vecsearch import VsStats, oversample_postfilter, vector_search_operator
from .plans import PlanSpec

_DERIVE_TYPES = {T_INT: "int64", T_FLOAT: "float64", T_STR: "string",
                 T_DATE: "date", T_BOOL: "int64"}


@dataclass
class NodeProfile:
    node_id: str
    op: str
    seconds: float
    out_rows: int
    out_bytes: int
    out_scalar_bytes: int
    out_embedding_bytes: int
    out_ncols: int
    base_table: Optional[str] = None     # set for scan nodes
    vs_stats: Optional[VsStats] = None
    vs_index: Optional[str] = None       # catalog name, None for enn
    shortfall: int = 0


@dataclass
class BaseRun:
    plan: PlanSpec
    result: Table
    profiles: dict            # node_id -> NodeProfile
    wall_seconds: float
    shortfalls: dict          # node_id -> {query_row: missing}

    def profile(self, node_id: str) -> NodeProfile:
        return self.profiles[node_id]

    @property
    def total_shortfall(self) -> int:
        return sum(sum(d.values()) for d in self.shortfalls.values())


class IndexCatalog:
    """Built indexes by name ("ivf:reviews", "graph:images", ...), with both
    layout views sharing one build."""

    def __init__(self):
        self._owning = {}
        self._non_owning = {}

    def register(self, name: str, index, base: EmbeddingColumn) -> None:
        from .vecindex import NON_OWNING, OWNING

        if index.layout == OWNING:
            self._owning[name] = index
            self._non_owning[name] = index.as_layout(NON_OWNING, base=base)
        else:
            self._non_owning[name] = index
            self._owning[name] = index.as_layout(OWNING, base=base)

    def get(self, name: str, layout: str = "owning"):
        pool = self._owning if layout == "owning" else self._non_owning
        if name not in pool:
            raise ParameterError(f"no index {name!r} in catalog")
        return pool[name]

    def names(self) -> list:
        return sorted(self._owning)

    def __contains__(self, name: str) -> bool:
        return name in self._owning


def _column_bytes(table: Table) -> tuple:
    scalar = 0
    emb = 0
    for name, ftype in table.schema.fields:
        col = table.columns[name]
        if ftype.is_embedding:
            emb += col.nbytes
        elif np.asarray(col).dtype == object:
            scalar += int(sum(len(s) for s in col)) if table.row_count else 0
        else:
            scalar += np.asarray(col).nbytes
    return scalar, emb


def execute_base(
    plan: PlanSpec,
    dataset: Dataset,
    catalog: Optional[IndexCatalog] = None,
    layout: str = "owning",
) -> BaseRun:
    """Interpret the plan on the host and measure every node."""
    results: dict = {}
    profiles: dict = {}
    shortfalls: dict = {}
    wall0 = time.perf_counter()
    for node in plan.nodes:
        if node.op == "transfer":
            continue
        inputs = [results[i] for i in node.inputs]
        t0 = time.perf_counter()
        base_table = None
        vs_stats = None
        vs_index = None
        short = 0
        if node.op == "scan":
            out = dataset.table(node.params["table"])
            base_table = node.params["table"]
        elif node.op == "query_vectors":
            kind = node.params["source"]
            vecs = make_query_vectors(dataset, kind, int(node.params["n"]),
                                      int(node.params["seed"]))
            out = Table(
                Schema([("qv_id", "int64"), (f"qv_{kind}", embedding(vecs.dim))]),
                {"qv_id": np.arange(vecs.count, dtype=np.int64), f"qv_{kind}": vecs})
        elif node.op == "filter":
            out = rel_filter(inputs[0], node.params["pred"])
        elif node.op == "project":
            out = project(inputs[0], node.params["fields"])
        elif node.op == "rename":
            out = rename(inputs[0], {old: new for old, new in node.params["map"]})
        elif node.op == "derive":
            out = _derive(inputs[0], node.params["cols"])
        elif node.op == "join":
            spec = JoinSpec(node.params["join"], node.params["left_keys"],
                            node.params["right_keys"])
            out = hash_join(inputs[0], inputs[1], spec)
        elif node.op == "aggregate":
            aggs = [(f, None if i == "*" else i, o) for f, i, o in node.params["aggs"]]
            out = group_aggregate(inputs[0], AggSpec(node.params["group"], aggs))
        elif node.op == "sort":
            out = sort_limit(inputs[0], [tuple(k) for k in node.params["keys"]],
                             node.params.get("limit"))
        elif node.op == "vector_search":
            out, vs_stats, vs_index = _run_vs(node, inputs, catalog, layout)
        elif node.op == "vs_postfilter":
            keep_set = inputs[1] if len(inputs) > 1 else None
            semi = (node.params["semi_left"], node.params["semi_right"]) \
                if "semi_left" in node.params else None
            out, by_query = oversample_postfilter(
                inputs[0], node.params.get("pred"), int(node.params["k"]),
                keep_set=keep_set, semi_keys=semi)
            if by_query:
                shortfalls[node.node_id] = by_query
                short = sum(by_query.values())
        else:
            raise PlanError(f"cannot execute operator {node.op!r}")
        seconds = time.perf_counter() - t0
        scalar_b, emb_b = _column_bytes(out)
        results[node.node_id] = out
        profiles[node.node_id] = NodeProfile(
            node.node_id, node.op, seconds, out.row_count,
            scalar_b + emb_b, scalar_b, emb_b,
            len([1 for _, t in out.schema.fields if not t.is_embedding]),
            base_table=base_table, vs_stats=vs_stats, vs_index=vs_index,
            shortfall=short)
    wall = time.perf_counter() - wall0
    return BaseRun(plan, results[plan.sink.node_id], profiles, wall, shortfalls)


def _derive(table: Table, cols) -> Table:
    fields = list(table.schema.fields)
    out_cols = dict(table.columns)
    masks = dict(table.valid)
    for name, text in cols:
        expr = parse_expr(text)
        etype = expr.check(table.schema)
        values, valid = expr.evaluate(table)
        ftype = FieldType(_DERIVE_TYPES[etype])
        if ftype.kind == "int64":
            values = np.asarray(values).astype(np.int64)
        elif ftype.kind == "float64":
            values = np.asarray(values, dtype=np.float64)
        elif ftype.kind == "date":
            values = np.asarray(values).astype(np.int32)
        fields.append((name, ftype))
        out_cols[name] = values
        if valid is not None and not valid.all():
            masks[name] = valid
    return Table(Schema(fields), out_cols, masks)


def _run_vs(node, inputs, catalog: Optional[IndexCatalog], layout: str):
    p = node.params
    mode = p["mode"]
    nprobe = int(p.get("nprobe", 1)) if p.get("nprobe") else 1
    index = None
    index_name = None
    if mode in ("ivf", "graph"):
        if catalog is None:
            raise ParameterError(f"plan needs index {p.get('index')!r} but no catalog given")
        index_name = p["index"]
        index = catalog.get(index_name, layout)
        if mode == "ivf":
            # the plan-level knob is one number; indexes may differ in nlist
            nprobe = min(nprobe, index.nlist)
    sp = SearchParams(k=int(p["k"]), k_prime=int(p["k_prime"]), nprobe=nprobe,
                      ef=int(p["ef"]) if p.get("ef") else None)
    out, stats = vector_search_operator(
        inputs[0], p["query_field"], inputs[1], p["data_field"],
        sp, metric=p.get("metric", "squared_l2"), index=index)
    return out, stats, index_name


# --- result snapshots --------------------------------------------------------


def table_to_text(table: Table, float_digits: int = 9) -> str:
    """Deterministic text snapshot (embedding columns summarized by shape)."""
    lines = ["|".join(f"{n}:{t}" for n, t in table.schema.fields)]
    for i in range(table.row_count):
        cells = []
        for name, ftype in table.schema.fields:
            if name in table.valid and not table.valid[name][i]:
                cells.append("NULL")
            elif ftype.is_embedding:
                cells.append(f"<vec{ftype.dim}>")
            elif ftype.kind == "float64":
                cells.append(format(float(table.columns[name][i]), f".{float_digits}g"))
            else:
                cells.append(str(table.columns[name][i]))
        lines.append("|".join(cells))
    return "\n".join(lines) + "\n"


def tables_equal(a: Table, b: Table) -> bool:
    """Bit-exact equality: schema, values, and validity masks."""
    if a.schema != b.schema or a.row_count != b.row_count:
        return False
    for name, ftype in a.schema.fields:
        ca, cb = a.columns[name], b.columns[name]
        if ftype.is_embedding:
            if not np.array_equal(ca.values, cb.values):
                return False
        elif not np.array_equal(np.asarray(ca), np.asarray(cb)):
            return False
        if not np.array_equal(a.mask(name), b.mask(name)):
            return False
    return True
