"""Scalar expressions over table columns.

Supports field references, literals (int, float, string, date), comparisons,
boolean AND/OR/NOT, arithmetic (+, -, *), CASE WHEN, IN over literal lists,
and IS [NOT] NULL. Expressions type-check against a schema before evaluation,
which is then total: no runtime type errors on validated expressions.

Null handling is three-valued where it matters: comparisons and arithmetic
propagate nulls, boolean operators use Kleene logic, CASE treats a null
condition as not matched, and `filter` keeps only rows that are valid and
true. The textual form round-trips through `parse_expr`/`to_text`.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ExpressionError
from .table import Table

_EPOCH = datetime.date(1970, 1, 1)

T_INT = "int"
T_FLOAT = "float"
T_STR = "str"
T_DATE = "date"
T_BOOL = "bool"

_FIELD_TO_EXPR_TYPE = {
    "int64": T_INT,
    "float64": T_FLOAT,
    "string": T_STR,
    "date": T_DATE,
}

_NUMERIC = (T_INT, T_FLOAT)


def date_to_days(text: str) -> int:
    y, m, d = (int(p) for p in text.split("-"))
    return (datetime.date(y, m, d) - _EPOCH).days


def days_to_date(days: int) -> str:
    return (_EPOCH + datetime.timedelta(days=int(days))).isoformat()


class Expr:
    def check(self, schema) -> str:
        raise NotImplementedError

    def evaluate(self, table: Table):
        """Return (values, valid) where valid is None when every row is valid."""
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"<expr {self.to_text()}>"


@dataclass
class Col(Expr):
    name: str

    def check(self, schema):
        if self.name not in schema:
            raise ExpressionError(f"unknown field {self.name!r}")
        ftype = schema.type_of(self.name)
        if ftype.is_embedding:
            raise ExpressionError(f"field {self.name!r} is an embedding column")
        return _FIELD_TO_EXPR_TYPE[ftype.kind]

    def evaluate(self, table):
        col = table.column(self.name)
        valid = table.valid.get(self.name)
        return col, valid

    def to_text(self):
        return self.name


@dataclass
class Lit(Expr):
    value: object
    type: str

    def check(self, schema):
        return self.type

    def evaluate(self, table):
        n = table.row_count
        if self.type == T_STR:
            arr = np.full(n, self.value, dtype=object)
        elif self.type == T_FLOAT:
            arr = np.full(n, float(self.value), dtype=np.float64)
        elif self.type == T_BOOL:
            arr = np.full(n, bool(self.value), dtype=bool)
        else:
            arr = np.full(n, int(self.value), dtype=np.int64)
        return arr, None

    def to_text(self):
        if self.type == T_STR:
            return "'" + str(self.value).replace("'", "''") + "'"
        if self.type == T_DATE:
            return f"date '{days_to_date(self.value)}'"
        if self.type == T_FLOAT:
            return repr(float(self.value))
        if self.type == T_BOOL:
            return "true" if self.value else "false"
        return str(self.value)


def _merge_valid(*masks):
    out = None
    for m in masks:
        if m is None:
            continue
        out = m.copy() if out is None else (out & m)
    return out


_CMP_OPS = {"=", "!=", "<", "<=", ">", ">="}


@dataclass
class Cmp(Expr):
    op: str
    left: Expr
    right: Expr

    def check(self, schema):
        lt, rt = self.left.check(schema), self.right.check(schema)
        if lt in _NUMERIC and rt in _NUMERIC:
            return T_BOOL
        if lt == rt and lt in (T_STR, T_DATE, T_BOOL):
            if lt in (T_STR, T_BOOL) and self.op not in ("=", "!="):
                if lt == T_BOOL:
                    raise ExpressionError("booleans only support = and !=")
            return T_BOOL
        # dates mix with ints so quarter bounds can be written as day counts
        if {lt, rt} == {T_DATE, T_INT}:
            return T_BOOL
        raise ExpressionError(f"cannot compare {lt} {self.op} {rt}")

    def evaluate(self, table):
        lv, lm = self.left.evaluate(table)
        rv, rm = self.right.evaluate(table)
        if self.op == "=":
            vals = lv == rv
        elif self.op == "!=":
            vals = lv != rv
        elif self.op == "<":
            vals = lv < rv
        elif self.op == "<=":
            vals = lv <= rv
        elif self.op == ">":
            vals = lv > rv
        else:
            vals = lv >= rv
        return np.asarray(vals, dtype=bool), _merge_valid(lm, rm)

    def to_text(self):
        return f"{self.left.to_text()} {self.op} {self.right.to_text()}"


@dataclass
class BoolOp(Expr):
    op: str  # "and" | "or"
    items: list

    def check(self, schema):
        for item in self.items:
            if item.check(schema) != T_BOOL:
                raise ExpressionError(f"{self.op} expects boolean operands")
        return T_BOOL

    def evaluate(self, table):
        vals, valid = self.items[0].evaluate(table)
        vals = vals.copy()
        for item in self.items[1:]:
            v2, m2 = item.evaluate(table)
            if self.op == "and":
                known_false = (~vals & _as_mask(valid, table)) | (~v2 & _as_mask(m2, table))
                both_true = vals & _as_mask(valid, table) & v2 & _as_mask(m2, table)
                new_valid = known_false | both_true
                vals = both_true
            else:
                known_true = (vals & _as_mask(valid, table)) | (v2 & _as_mask(m2, table))
                both_false = ~vals & _as_mask(valid, table) & ~v2 & _as_mask(m2, table)
                new_valid = known_true | both_false
                vals = known_true
            valid = None if new_valid.all() else new_valid
        return vals, valid

    def to_text(self):
        sep = f" {self.op} "
        return "(" + sep.join(i.to_text() for i in self.items) + ")"


def _as_mask(valid, table):
    return np.ones(table.row_count, dtype=bool) if valid is None else valid


@dataclass
class Not(Expr):
    item: Expr

    def check(self, schema):
        if self.item.check(schema) != T_BOOL:
            raise ExpressionError("not expects a boolean operand")
        return T_BOOL

    def evaluate(self, table):
        vals, valid = self.item.evaluate(table)
        return ~vals, valid

    def to_text(self):
        return f"not ({self.item.to_text()})"


@dataclass
class Arith(Expr):
    op: str  # "+", "-", "*"
    left: Expr
    right: Expr

    def check(self, schema):
        lt, rt = self.left.check(schema), self.right.check(schema)
        if lt in _NUMERIC and rt in _NUMERIC:
            return T_FLOAT if T_FLOAT in (lt, rt) else T_INT
        if {lt, rt} == {T_DATE, T_INT} and self.op in ("+", "-"):
            return T_DATE
        raise ExpressionError(f"cannot apply {self.op} to {lt} and {rt}")

    def evaluate(self, table):
        lv, lm = self.left.evaluate(table)
        rv, rm = self.right.evaluate(table)
        if self.op == "+":
            vals = lv + rv
        elif self.op == "-":
            vals = lv - rv
        else:
            vals = lv * rv
        return vals, _merge_valid(lm, rm)

    def to_text(self):
        return f"({self.left.to_text()} {self.op} {self.right.to_text()})"


@dataclass
class Neg(Expr):
    item: Expr

    def check(self, schema):
        t = self.item.check(schema)
        if t not in _NUMERIC:
            raise ExpressionError("unary minus expects a numeric operand")
        return t

    def evaluate(self, table):
        vals, valid = self.item.evaluate(table)
        return -vals, valid

    def to_text(self):
        return f"(-{self.item.to_text()})"


@dataclass
class InList(Expr):
    item: Expr
    values: list  # of Lit

    def check(self, schema):
        t = self.item.check(schema)
        for v in self.values:
            vt = v.type
            if t in _NUMERIC and vt in _NUMERIC:
                continue
            if t == vt:
                continue
            if {t, vt} == {T_DATE, T_INT}:
                continue
            raise ExpressionError(f"IN list literal {vt} incompatible with {t}")
        return T_BOOL

    def evaluate(self, table):
        vals, valid = self.item.evaluate(table)
        out = np.zeros(table.row_count, dtype=bool)
        for v in self.values:
            out |= vals == v.value
        return out, valid

    def to_text(self):
        return f"{self.item.to_text()} in ({', '.join(v.to_text() for v in self.values)})"


@dataclass
class IsNull(Expr):
    item: Expr
    negated: bool = False

    def check(self, schema):
        self.item.check(schema)
        return T_BOOL

    def evaluate(self, table):
        _, valid = self.item.evaluate(table)
        isnull = ~_as_mask(valid, table)
        return (~isnull if self.negated else isnull), None

    def to_text(self):
        return f"{self.item.to_text()} is {'not ' if self.negated else ''}null"


@dataclass
class Case(Expr):
    whens: list  # of (predicate Expr, result Expr)
    else_: Optional[Expr]

    def check(self, schema):
        result_t = None
        for pred, res in self.whens:
            if pred.check(schema) != T_BOOL:
                raise ExpressionError("CASE WHEN condition must be boolean")
            t = res.check(schema)
            result_t = t if result_t is None else _unify(result_t, t)
        if self.else_ is not None:
            result_t = _unify(result_t, self.else_.check(schema))
        return result_t

    def evaluate(self, table):
        n = table.row_count
        if self.else_ is not None:
            out, valid = self.else_.evaluate(table)
            out = np.array(out)
            valid = _as_mask(valid, table).copy()
        else:
            first_vals, _ = self.whens[0][1].evaluate(table)
            out = np.zeros_like(np.asarray(first_vals))
            valid = np.zeros(n, dtype=bool)
        taken = np.zeros(n, dtype=bool)
        for pred, res in self.whens:
            pv, pm = pred.evaluate(table)
            hit = pv & _as_mask(pm, table) & ~taken
            rv, rm = res.evaluate(table)
            out[hit] = np.asarray(rv)[hit]
            valid[hit] = _as_mask(rm, table)[hit]
            taken |= hit
        return out, (None if valid.all() else valid)

    def to_text(self):
        parts = ["case"]
        for pred, res in self.whens:
            parts.append(f"when {pred.to_text()} then {res.to_text()}")
        if self.else_ is not None:
            parts.append(f"else {self.else_.to_text()}")
        parts.append("end")
        return " ".join(parts)


def _unify(a, b):
    if a == b:
        return a
    if {a, b} <= set(_NUMERIC):
        return T_FLOAT
    raise ExpressionError(f"CASE branches have incompatible types {a} and {b}")


# --- parser ---------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)"
    r"|(?P<str>'(?:[^']|'')*')"
    r"|(?P<op><=|>=|!=|<>|=|<|>|\+|-|\*|\(|\)|,)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r")"
)

_KEYWORDS = {"and", "or", "not", "in", "is", "null", "case", "when", "then",
             "else", "end", "date", "true", "false"}


def _tokenize(text: str):
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:].strip()
            if not rest:
                break
            raise ExpressionError(f"cannot tokenize expression at: {rest[:30]!r}")
        pos = m.end()
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num")))
        elif m.lastgroup == "str":
            tokens.append(("str", m.group("str")[1:-1].replace("''", "'")))
        elif m.lastgroup == "op":
            op = m.group("op")
            tokens.append(("op", "!=" if op == "<>" else op))
        else:
            name = m.group("name")
            kind = "kw" if name.lower() in _KEYWORDS else "name"
            tokens.append((kind, name.lower() if kind == "kw" else name))
    return tokens


class _Parser:
    def __init__(self, tokens):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None)

    def next(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expect(self, kind, value=None):
        k, v = self.next()
        if k != kind or (value is not None and v != value):
            raise ExpressionError(f"expected {value or kind}, got {v!r}")
        return v

    def parse(self):
        e = self.parse_or()
        if self.pos != len(self.tokens):
            raise ExpressionError(f"trailing tokens after expression: {self.tokens[self.pos:]}")
        return e

    def parse_or(self):
        items = [self.parse_and()]
        while self.peek() == ("kw", "or"):
            self.next()
            items.append(self.parse_and())
        return items[0] if len(items) == 1 else BoolOp("or", items)

    def parse_and(self):
        items = [self.parse_not()]
        while self.peek() == ("kw", "and"):
            self.next()
            items.append(self.parse_not())
        return items[0] if len(items) == 1 else BoolOp("and", items)

    def parse_not(self):
        if self.peek() == ("kw", "not"):
            self.next()
            return Not(self.parse_not())
        return self.parse_predicate()

    def parse_predicate(self):
        left = self.parse_additive()
        k, v = self.peek()
        if k == "op" and v in _CMP_OPS:
            self.next()
            right = self.parse_additive()
            return Cmp(v, left, right)
        if (k, v) == ("kw", "in"):
            self.next()
            self.expect("op", "(")
            values = [self.parse_literal()]
            while self.peek() == ("op", ","):
                self.next()
                values.append(self.parse_literal())
            self.expect("op", ")")
            return InList(left, values)
        if (k, v) == ("kw", "is"):
            self.next()
            negated = False
            if self.peek() == ("kw", "not"):
                self.next()
                negated = True
            self.expect("kw", "null")
            return IsNull(left, negated)
        return left

    def parse_additive(self):
        left = self.parse_multiplicative()
        while True:
            k, v = self.peek()
            if k == "op" and v in ("+", "-"):
                self.next()
                left = Arith(v, left, self.parse_multiplicative())
            else:
                return left

    def parse_multiplicative(self):
        left = self.parse_unary()
        while self.peek() == ("op", "*"):
            self.next()
            left = Arith("*", left, self.parse_unary())
        return left

    def parse_unary(self):
        if self.peek() == ("op", "-"):
            self.next()
            return Neg(self.parse_unary())
        return self.parse_primary()

    def parse_primary(self):
        k, v = self.peek()
        if (k, v) == ("op", "("):
            self.next()
            e = self.parse_or()
            self.expect("op", ")")
            return e
        if (k, v) == ("kw", "case"):
            return self.parse_case()
        if k in ("num", "str") or (k, v) in (("kw", "date"), ("kw", "true"), ("kw", "false")):
            return self.parse_literal()
        if k == "name":
            self.next()
            return Col(v)
        raise ExpressionError(f"unexpected token {v!r}")

    def parse_case(self):
        self.expect("kw", "case")
        whens = []
        while self.peek() == ("kw", "when"):
            self.next()
            pred = self.parse_or()
            self.expect("kw", "then")
            whens.append((pred, self.parse_or()))
        else_ = None
        if self.peek() == ("kw", "else"):
            self.next()
            else_ = self.parse_or()
        self.expect("kw", "end")
        if not whens:
            raise ExpressionError("CASE requires at least one WHEN branch")
        return Case(whens, else_)

    def parse_literal(self):
        k, v = self.next()
        if k == "num":
            if any(c in v for c in ".eE"):
                return Lit(float(v), T_FLOAT)
            return Lit(int(v), T_INT)
        if k == "str":
            return Lit(v, T_STR)
        if (k, v) == ("kw", "date"):
            sk, sv = self.next()
            if sk != "str":
                raise ExpressionError("date literal expects a quoted 'YYYY-MM-DD'")
            return Lit(date_to_days(sv), T_DATE)
        if (k, v) == ("kw", "true"):
            return Lit(True, T_BOOL)
        if (k, v) == ("kw", "false"):
            return Lit(False, T_BOOL)
        raise ExpressionError(f"expected literal, got {v!r}")


def parse_expr(text: str) -> Expr:
    return _Parser(_tokenize(text)).parse()


def eval_predicate(table: Table, expr: Expr) -> np.ndarray:
    """Boolean row mask: rows where the predicate is valid and true."""
    if expr.check(table.schema) != T_BOOL:
        raise ExpressionError("predicate must evaluate to a boolean")
    vals, valid = expr.evaluate(table)
    mask = np.asarray(vals, dtype=bool)
    if valid is not None:
        mask = mask & valid
    return mask
