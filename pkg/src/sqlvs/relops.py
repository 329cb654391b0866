"""Relational operators: filter, hash joins, group-by aggregation, sort/limit.

Joins are hash-based with the right side built; there is no join reordering,
plans fix the operator order. Output order is deterministic everywhere:
joins emit left-row order with matches in right-row order, aggregation emits
groups sorted by key tuple, and sorts are stable with original row order as
the final tiebreak.

Floating-point sums use math.fsum, which is exactly rounded and therefore
invariant under input row permutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import SchemaError
from .expr import Expr, eval_predicate, parse_expr
from .table import EmbeddingColumn, Schema, Table, filter_rows, gather

JOIN_KINDS = ("inner", "left", "semi", "anti")
AGG_FUNCS = ("sum", "count", "min", "max", "avg")


@dataclass(frozen=True)
class JoinSpec:
    kind: str
    left_keys: tuple
    right_keys: tuple

    def __init__(self, kind: str, left_keys: Sequence[str], right_keys: Sequence[str]):
        if kind not in JOIN_KINDS:
            raise SchemaError(f"unknown join kind {kind!r}")
        if len(left_keys) != len(right_keys) or not left_keys:
            raise SchemaError("join key lists must be non-empty and equal length")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "left_keys", tuple(left_keys))
        object.__setattr__(self, "right_keys", tuple(right_keys))


@dataclass(frozen=True)
class AggSpec:
    group_keys: tuple
    aggregates: tuple  # of (func, input field or None, output name)

    def __init__(self, group_keys: Sequence[str], aggregates: Sequence[tuple]):
        names = [out for _, _, out in aggregates]
        if len(set(names)) != len(names):
            raise SchemaError("aggregate output names must be unique")
        for func, _, _ in aggregates:
            if func not in AGG_FUNCS:
                raise SchemaError(f"unknown aggregate {func!r}")
        object.__setattr__(self, "group_keys", tuple(group_keys))
        object.__setattr__(self, "aggregates", tuple(
            (f, None if i in (None, "*") else i, o) for f, i, o in aggregates))


def filter(table: Table, predicate: Expr | str) -> Table:  # noqa: A001 - mirrors the operator name
    if isinstance(predicate, str):
        predicate = parse_expr(predicate)
    mask = eval_predicate(table, predicate)
    return filter_rows(table, mask)


def _encode(table: Table, keys: Sequence[str], dicts: list) -> np.ndarray:
    """Combined int64 key code per row against shared dictionaries; -1 = null key."""
    n = table.row_count
    combined = np.zeros(n, dtype=np.int64)
    null = np.zeros(n, dtype=bool)
    limit = 2**62
    for key, uniques in zip(keys, dicts):
        base = len(uniques) + 1
        if limit // base == 0 or combined.size and combined.max(initial=0) >= limit // base:
            raise SchemaError("join key space too large for radix encoding")
        col = np.asarray(table.column(key))
        if key in table.valid:
            null |= ~table.valid[key]
        codes = np.searchsorted(uniques, col)
        combined = combined * base + codes
    combined[null] = -1
    return combined


def hash_join(left: Table, right: Table, spec: JoinSpec) -> Table:
    """Join with deterministic output order.

    inner/left concatenate schemas (left join null-flags unmatched right
    fields); semi/anti keep the left schema. Null keys never match.
    """
    dicts = []
    for lk, rk in zip(spec.left_keys, spec.right_keys):
        lcol, rcol = np.asarray(left.column(lk)), np.asarray(right.column(rk))
        if isinstance(left.column(lk), EmbeddingColumn) or isinstance(right.column(rk), EmbeddingColumn):
            raise SchemaError("cannot join on embedding columns")
        if (lcol.dtype == object) != (rcol.dtype == object):
            raise SchemaError(f"join key type mismatch on {lk}/{rk}")
        dicts.append(np.unique(np.concatenate([lcol, rcol])))
    lcodes = _encode(left, spec.left_keys, dicts)
    rcodes = _encode(right, spec.right_keys, dicts)

    rvalid = np.flatnonzero(rcodes >= 0)
    rorder = rvalid[np.argsort(rcodes[rvalid], kind="stable")]
    rsorted = rcodes[rorder]
    starts = np.searchsorted(rsorted, lcodes, side="left")
    ends = np.searchsorted(rsorted, lcodes, side="right")
    counts = np.where(lcodes >= 0, ends - starts, 0)

    if spec.kind == "semi":
        return gather(left, np.flatnonzero(counts > 0))
    if spec.kind == "anti":
        return gather(left, np.flatnonzero(counts == 0))

    if spec.kind == "inner":
        out_counts = counts
        matched_slots = None
    else:  # left join: one null-extended slot for unmatched rows
        out_counts = np.maximum(counts, 1)
        matched_slots = np.repeat(counts > 0, out_counts)

    total = int(out_counts.sum())
    left_idx = np.repeat(np.arange(left.row_count), out_counts)
    run_offsets = np.cumsum(out_counts) - out_counts
    within = np.arange(total) - np.repeat(run_offsets, out_counts)
    right_pos = np.repeat(starts, out_counts) + within
    if spec.kind == "left":
        right_pos = np.where(matched_slots, right_pos, 0)
    right_idx = rorder[right_pos] if len(rorder) else np.zeros(total, dtype=np.int64)

    overlap = set(left.schema.names) & set(right.schema.names)
    if overlap:
        raise SchemaError(f"join output field collision: {sorted(overlap)}")
    out_schema = Schema(list(left.schema.fields) + list(right.schema.fields))
    lpart = gather(left, left_idx)
    rpart = gather(right, right_idx) if right.row_count else _null_like(right, total)
    cols = dict(lpart.columns)
    cols.update(rpart.columns)
    masks = dict(lpart.valid)
    for name, _ in right.schema.fields:
        m = rpart.mask(name)
        if spec.kind == "left":
            m = m & matched_slots
        if not m.all():
            masks[name] = m
    return Table(out_schema, cols, masks)


def _null_like(table: Table, n: int) -> Table:
    cols = {}
    for name, ftype in table.schema.fields:
        if ftype.is_embedding:
            cols[name] = EmbeddingColumn(np.zeros((n, ftype.dim), np.float32))
        elif ftype.kind == "string":
            cols[name] = np.full(n, "", dtype=object)
        else:
            cols[name] = np.zeros(n, dtype=np.asarray(table.column(name)).dtype)
    masks = {name: np.zeros(n, dtype=bool) for name, _ in table.schema.fields}
    return Table(table.schema, cols, masks)


def group_aggregate(table: Table, spec: AggSpec) -> Table:
    """One row per distinct key tuple, sorted by key tuple (nulls first)."""
    n = table.row_count
    for func, inp, _ in spec.aggregates:
        if func == "count" and inp is None:
            continue
        table.column(inp)

    if spec.group_keys:
        codes = _group_codes(table, spec.group_keys)
        order = np.argsort(codes, kind="stable")
        sorted_codes = codes[order]
        group_starts = np.flatnonzero(np.r_[True, sorted_codes[1:] != sorted_codes[:-1]]) if n else np.array([], dtype=np.int64)
    else:
        # an ungrouped aggregate yields exactly one row, even over empty input
        order = np.arange(n)
        group_starts = np.array([0], dtype=np.int64)

    n_groups = len(group_starts)
    bounds = np.r_[group_starts, n]

    cols = {}
    fields = []
    masks = {}
    for key in spec.group_keys:
        src = table.column(key)
        first_rows = order[group_starts] if n else np.array([], dtype=np.int64)
        if isinstance(src, EmbeddingColumn):
            raise SchemaError(f"cannot group on embedding column {key!r}")
        cols[key] = src[first_rows]
        fields.append((key, table.schema.type_of(key)))
        if key in table.valid:
            km = table.valid[key][first_rows]
            if not km.all():
                masks[key] = km

    for func, inp, out in spec.aggregates:
        values, valid, ftype = _aggregate(table, order, bounds, n_groups, func, inp)
        cols[out] = values
        fields.append((out, ftype))
        if valid is not None and not valid.all():
            masks[out] = valid

    return Table(Schema(fields), cols, masks)


def _group_codes(table: Table, keys: Sequence[str]) -> np.ndarray:
    """Lexicographic group code per row; compacted between keys so any number
    of key columns fits in int64."""
    combined = np.zeros(table.row_count, dtype=np.int64)
    for i, key in enumerate(keys):
        col = np.asarray(table.column(key))
        uniques, inv = np.unique(col, return_inverse=True)
        inv = np.asarray(inv, dtype=np.int64) + 1
        if key in table.valid:
            inv[~table.valid[key]] = 0  # nulls form one group, sorted first
        combined = combined * (len(uniques) + 1) + inv
        if i + 1 < len(keys) and len(combined):
            # re-compact: unique's inverse preserves sorted (lexicographic) order
            _, combined = np.unique(combined, return_inverse=True)
            combined = np.asarray(combined, dtype=np.int64)
    return combined


def _aggregate(table: Table, order, bounds, n_groups, func, inp):
    from .table import FieldType

    if func == "count":
        if inp is None:
            counts = np.diff(bounds)
            return counts.astype(np.int64), None, FieldType("int64")
        valid_mask = table.mask(inp)[order].astype(np.int64)
        counts = np.add.reduceat(valid_mask, bounds[:-1]) if len(valid_mask) else np.zeros(n_groups, np.int64)
        counts[np.diff(bounds) == 0] = 0
        return counts.astype(np.int64), None, FieldType("int64")

    col = table.column(inp)
    if isinstance(col, EmbeddingColumn):
        raise SchemaError(f"cannot aggregate embedding column {inp!r}")
    src_type = table.schema.type_of(inp)
    vals = np.asarray(col)[order]
    vmask = table.mask(inp)[order]
    group_valid_counts = np.add.reduceat(vmask.astype(np.int64), bounds[:-1]) if len(vmask) else np.zeros(n_groups, np.int64)
    group_valid_counts[np.diff(bounds) == 0] = 0
    has_value = group_valid_counts > 0

    if func in ("sum", "avg"):
        if src_type.kind == "int64" and func == "sum":
            ints = np.where(vmask, vals, 0)
            sums = np.add.reduceat(ints, bounds[:-1]) if len(ints) else np.zeros(n_groups, np.int64)
            sums[np.diff(bounds) == 0] = 0
            return sums.astype(np.int64), has_value if not has_value.all() else None, FieldType("int64")
        out = np.zeros(n_groups, dtype=np.float64)
        for g in range(n_groups):
            lo, hi = bounds[g], bounds[g + 1]
            seg_mask = vmask[lo:hi]
            seg = vals[lo:hi][seg_mask]
            if len(seg):
                s = math.fsum(seg.astype(np.float64))
                out[g] = s / len(seg) if func == "avg" else s
        return out, (has_value if not has_value.all() else None), FieldType("float64")

    # min / max
    if vals.dtype == object:
        out = np.empty(n_groups, dtype=object)
        for g in range(n_groups):
            lo, hi = bounds[g], bounds[g + 1]
            seg = [v for v, m in zip(vals[lo:hi], vmask[lo:hi]) if m]
            out[g] = (min(seg) if func == "min" else max(seg)) if seg else ""
        return out, (has_value if not has_value.all() else None), src_type
    work = vals.astype(np.float64)
    fill = np.inf if func == "min" else -np.inf
    work = np.where(vmask, work, fill)
    ufunc = np.minimum if func == "min" else np.maximum
    out = ufunc.reduceat(work, bounds[:-1]) if len(work) else np.full(n_groups, fill)
    out[np.diff(bounds) == 0] = fill
    out = np.where(has_value, out, 0.0)
    if src_type.kind in ("int64", "date"):
        out_arr = out.astype(np.asarray(col).dtype)
        return out_arr, (has_value if not has_value.all() else None), src_type
    return out, (has_value if not has_value.all() else None), src_type


def sort_limit(table: Table, keys: Sequence[tuple], limit: Optional[int] = None) -> Table:
    """Stable lexicographic sort by (field, 'asc'|'desc') keys, then limit.

    Ties keep original row order; null values sort after valid ones under
    either direction.
    """
    n = table.row_count
    sort_keys = []
    for name, direction in keys:
        if direction not in ("asc", "desc"):
            raise SchemaError(f"sort direction must be asc or desc, got {direction!r}")
        col = table.column(name)
        if isinstance(col, EmbeddingColumn):
            raise SchemaError(f"cannot sort on embedding column {name!r}")
        arr = np.asarray(col)
        if arr.dtype == object:
            _, codes = np.unique(arr, return_inverse=True)
            vals = np.asarray(codes, dtype=np.float64)
        else:
            vals = arr.astype(np.float64)
        if direction == "desc":
            vals = -vals
        if name in table.valid:
            vals = np.where(table.valid[name], vals, np.inf)
        sort_keys.append(vals)
    if sort_keys:
        order = np.lexsort(tuple(reversed(sort_keys)))
    else:
        order = np.arange(n)
    if limit is not None:
        if limit < 0:
            raise SchemaError("limit must be >= 0")
        order = order[:limit]
    return gather(table, order)
