"""Immutable columnar tables with scalar and embedding columns.

A Table owns one value array per field plus an optional validity mask per
field (used for the null-flagged right side of left joins). Scalar columns
are numpy arrays: int64, float64, int32 day counts for dates, and object
arrays for strings. Embedding columns are EmbeddingColumn instances backed
by a C-contiguous (count, dim) float32 array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import BoundsError, SchemaError, ShapeError

INT64 = "int64"
FLOAT64 = "float64"
STRING = "string"
DATE = "date"

_SCALAR_DTYPES = {
    INT64: np.dtype(np.int64),
    FLOAT64: np.dtype(np.float64),
    DATE: np.dtype(np.int32),
}


@dataclass(frozen=True)
class FieldType:
    """Column type: one of the scalar kinds or embedding(dim)."""

    kind: str
    dim: int = 0

    def __post_init__(self):
        if self.kind == "embedding":
            if self.dim < 1:
                raise SchemaError(f"embedding dimension must be >= 1, got {self.dim}")
        elif self.kind not in _SCALAR_DTYPES and self.kind != STRING:
            raise SchemaError(f"unknown field type {self.kind!r}")

    @property
    def is_embedding(self) -> bool:
        return self.kind == "embedding"

    def __str__(self) -> str:
        return f"embedding({self.dim})" if self.is_embedding else self.kind


def embedding(dim: int) -> FieldType:
    return FieldType("embedding", dim)


@dataclass(frozen=True)
class Schema:
    """Ordered list of (name, type) with unique names."""

    fields: tuple[tuple[str, FieldType], ...]

    def __init__(self, fields: Iterable[tuple[str, FieldType | str]]):
        norm = []
        for name, ftype in fields:
            if isinstance(ftype, str):
                ftype = FieldType(ftype)
            norm.append((name, ftype))
        names = [n for n, _ in norm]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate field names in {names}")
        object.__setattr__(self, "fields", tuple(norm))

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.fields]

    def type_of(self, name: str) -> FieldType:
        for n, t in self.fields:
            if n == name:
                return t
        raise SchemaError(f"unknown field {name!r}")

    def __contains__(self, name: str) -> bool:
        return any(n == name for n, _ in self.fields)

    def select(self, keep: Sequence[str]) -> "Schema":
        return Schema([(n, self.type_of(n)) for n in keep])


class EmbeddingColumn:
    """Fixed-dimension vector list stored as one contiguous float32 region."""

    __slots__ = ("values", "dim", "count")

    def __init__(self, values: np.ndarray, dim: int | None = None):
        arr = np.asarray(values, dtype=np.float32)
        if arr.ndim == 1:
            if dim is None:
                raise ShapeError("flat embedding values need an explicit dim")
            if dim < 1 or arr.size % dim != 0:
                raise ShapeError(f"{arr.size} values do not tile into dim {dim}")
            arr = arr.reshape(-1, dim)
        elif arr.ndim != 2:
            raise ShapeError(f"embedding values must be 1-D or 2-D, got {arr.ndim}-D")
        if dim is not None and arr.shape[1] != dim:
            raise ShapeError(f"expected dim {dim}, got {arr.shape[1]}")
        if arr.shape[1] < 1:
            raise ShapeError("embedding dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("embedding values contain NaN or Inf")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self.values = arr
        self.dim = arr.shape[1]
        self.count = arr.shape[0]

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingColumn":
        return cls(np.empty((0, dim), dtype=np.float32))

    @property
    def nbytes(self) -> int:
        return self.values.nbytes

    def take(self, rows: np.ndarray) -> "EmbeddingColumn":
        return EmbeddingColumn(self.values[rows])

    def __len__(self) -> int:
        return self.count

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EmbeddingColumn)
            and self.dim == other.dim
            and self.count == other.count
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self) -> str:
        return f"EmbeddingColumn(count={self.count}, dim={self.dim})"


def _coerce_column(ftype: FieldType, values) -> np.ndarray | EmbeddingColumn:
    if ftype.is_embedding:
        if isinstance(values, EmbeddingColumn):
            if values.dim != ftype.dim:
                raise ShapeError(f"embedding dim {values.dim} != declared {ftype.dim}")
            return values
        return EmbeddingColumn(values, dim=ftype.dim)
    if ftype.kind == STRING:
        arr = np.asarray(values, dtype=object)
        if arr.ndim != 1:
            arr = np.array(list(values), dtype=object)
    else:
        arr = np.asarray(values, dtype=_SCALAR_DTYPES[ftype.kind])
    arr.setflags(write=False)
    return arr


class Table:
    """Immutable columnar table.

    `valid` maps a field name to a boolean mask (True = value present). Fields
    not in `valid` are fully valid; masks appear on the right side of left
    joins and propagate through gathers and projections.
    """

    __slots__ = ("schema", "columns", "valid", "row_count")

    def __init__(self, schema: Schema, columns: dict, valid: dict | None = None):
        self.schema = schema
        cols = {}
        n = None
        for name, ftype in schema.fields:
            if name not in columns:
                raise SchemaError(f"missing column {name!r}")
            col = _coerce_column(ftype, columns[name])
            length = len(col)
            if n is None:
                n = length
            elif length != n:
                raise SchemaError(f"column {name!r} has {length} rows, expected {n}")
            cols[name] = col
        extra = set(columns) - set(schema.names)
        if extra:
            raise SchemaError(f"columns not in schema: {sorted(extra)}")
        self.columns = cols
        self.row_count = 0 if n is None else n
        masks = {}
        for name, mask in (valid or {}).items():
            if name not in self.columns:
                raise SchemaError(f"validity mask for unknown field {name!r}")
            m = np.asarray(mask, dtype=bool)
            if m.shape != (self.row_count,):
                raise SchemaError(f"validity mask for {name!r} has wrong length")
            m.setflags(write=False)
            masks[name] = m
        self.valid = masks

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, FieldType | str, object]]) -> "Table":
        schema = Schema([(n, t) for n, t, _ in pairs])
        return cls(schema, {n: v for n, _, v in pairs})

    def column(self, name: str):
        if name not in self.columns:
            raise SchemaError(f"unknown field {name!r}")
        return self.columns[name]

    def mask(self, name: str) -> np.ndarray:
        """Validity mask for a field (all-True when the field has no nulls)."""
        if name in self.valid:
            return self.valid[name]
        if name not in self.columns:
            raise SchemaError(f"unknown field {name!r}")
        return np.ones(self.row_count, dtype=bool)

    @property
    def nbytes(self) -> int:
        total = 0
        for name, _ in self.schema.fields:
            col = self.columns[name]
            if isinstance(col, EmbeddingColumn):
                total += col.nbytes
            elif col.dtype == object:
                total += int(sum(len(s) for s in col)) if len(col) else 0
            else:
                total += col.nbytes
        return total

    def row_tuple(self, i: int) -> tuple:
        out = []
        for name, ftype in self.schema.fields:
            if name in self.valid and not self.valid[name][i]:
                out.append(None)
            elif ftype.is_embedding:
                out.append(tuple(self.columns[name].values[i].tolist()))
            else:
                out.append(self.columns[name][i].item() if hasattr(self.columns[name][i], "item") else self.columns[name][i])
        return tuple(out)

    def __repr__(self) -> str:
        return f"Table({self.row_count} rows, fields={self.schema.names})"


def gather(table: Table, rows) -> Table:
    """Row-gather: output row i equals input row rows[i]; duplicates allowed."""
    idx = np.asarray(rows, dtype=np.int64)
    if idx.ndim != 1:
        idx = idx.reshape(-1)
    if idx.size:
        lo, hi = idx.min(), idx.max()
        if lo < 0 or hi >= table.row_count:
            raise BoundsError(f"row id out of range [0, {table.row_count})")
    cols = {}
    for name, ftype in table.schema.fields:
        col = table.columns[name]
        cols[name] = col.take(idx) if isinstance(col, EmbeddingColumn) else col[idx]
    masks = {name: m[idx] for name, m in table.valid.items()}
    return Table(table.schema, cols, masks)


def project(table: Table, keep: Sequence[str]) -> Table:
    """Restrict and reorder columns to `keep`; row count is unchanged."""
    for name in keep:
        if name not in table.schema:
            raise SchemaError(f"unknown field {name!r}")
    schema = table.schema.select(keep)
    cols = {name: table.columns[name] for name in keep}
    masks = {name: table.valid[name] for name in keep if name in table.valid}
    return Table(schema, cols, masks)


def rename(table: Table, mapping: dict) -> Table:
    """Rename fields; mapping may cover a subset of the schema."""
    new_fields = []
    for name, ftype in table.schema.fields:
        new_fields.append((mapping.get(name, name), ftype))
    schema = Schema(new_fields)
    cols = {mapping.get(n, n): c for n, c in table.columns.items()}
    masks = {mapping.get(n, n): m for n, m in table.valid.items()}
    return Table(schema, cols, masks)


def concat(parts: Sequence[Table], schema: Schema | None = None) -> Table:
    """Concatenate tables with identical schemas, in order."""
    parts = list(parts)
    if not parts:
        if schema is None:
            raise SchemaError("concat of zero tables needs an explicit schema")
        return empty_table(schema)
    schema0 = parts[0].schema
    for p in parts[1:]:
        if p.schema != schema0:
            raise SchemaError("concat requires identical schemas")
    cols = {}
    for name, ftype in schema0.fields:
        if ftype.is_embedding:
            vals = np.concatenate([p.columns[name].values for p in parts], axis=0) \
                if parts else np.empty((0, ftype.dim), np.float32)
            cols[name] = EmbeddingColumn(vals)
        else:
            cols[name] = np.concatenate([p.columns[name] for p in parts])
    masks = {}
    nullable = set()
    for p in parts:
        nullable |= set(p.valid)
    for name in nullable:
        masks[name] = np.concatenate([p.mask(name) for p in parts])
    return Table(schema0, cols, masks)


def empty_table(schema: Schema) -> Table:
    cols = {}
    for name, ftype in schema.fields:
        if ftype.is_embedding:
            cols[name] = EmbeddingColumn.empty(ftype.dim)
        elif ftype.kind == STRING:
            cols[name] = np.empty(0, dtype=object)
        else:
            cols[name] = np.empty(0, dtype=_SCALAR_DTYPES[ftype.kind])
    return Table(schema, cols)


def filter_rows(table: Table, mask: np.ndarray) -> Table:
    """Keep rows where mask is True, preserving order."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (table.row_count,):
        raise SchemaError("filter mask length mismatch")
    return gather(table, np.flatnonzero(mask))
