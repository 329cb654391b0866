"""Query plans: a line-oriented DAG description plus the eight builtin plans.

Plan text has one node per line:

    id = op(kind=<op>, inputs=[a, b], device=auto, key=value, ...)

Values are numbers, bare identifiers, quoted strings, or (nested) lists.
`parse_plan` validates the DAG (unique ids, known inputs, acyclic by
construction since nodes may only reference earlier ids, single sink) and
round-trips through `plan_to_text`.

Builtin plans realize the benchmark queries. Per-query notes:

  Q2   top-k' image search, deduped to each part's best rank, trimmed to
       the k best parts, inner-joined into the min-cost-supplier-per-part
       backbone scoped to one region; distance is a secondary sort key.
  Q16  top-k review search marks parts; their suppliers are excluded by an
       anti join before the (brand, type, size) supplier counts. The TPC-H
       LIKE predicates are replaced by brand/size filters.
  Q19  revenue sum where a lineitem qualifies by the classic brand and
       container branch OR by review-similar parts OR image-similar parts;
       the OR is evaluated as one boolean filter over marker left joins so
       no row is double counted.
  Q10  returned-item revenue per customer in a quarter; a left join against
       the top-k reviewers adds an is_in_top_k flag to each output row.
  Q13  customer order-count distribution with a per-bucket count of top-k
       review matches, propagated through both aggregation levels.
  Q18  large-quantity orders re-ranked by how much of their quantity comes
       from parts whose image is in the top-k (CASE sum), oversampled and
       deduped like Q2.
  Q11  high-value stock parts (value above a fraction of the total) use
       their own image as a per-row query against the full images table, a
       batched similarity join; self matches are removed by a post-filter
       and k=1 keeps the nearest visual duplicate.
  Q15  the top-revenue supplier's parts scope the review search. The
       exhaustive mode searches the scoped subset directly; the indexed
       modes search the full-table index with a large oversample and
       post-filter down to the supplier's parts, reporting shortfall.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .errors import ParameterError, PlanError
from .expr import date_to_days

AUTO = "auto"

OPS = ("scan", "query_vectors", "filter", "project", "rename", "derive",
       "join", "aggregate", "sort", "vector_search", "vs_postfilter",
       "transfer")

REL_OPS = ("filter", "project", "rename", "derive", "join", "aggregate",
           "sort", "vs_postfilter")

QUERIES = ("Q2", "Q10", "Q11", "Q13", "Q15", "Q16", "Q18", "Q19")
VS_MODES = ("enn", "ivf", "graph")


@dataclass
class PlanNode:
    node_id: str
    op: str
    inputs: list
    device: str = AUTO
    params: dict = field(default_factory=dict)

    def clone(self) -> "PlanNode":
        return PlanNode(self.node_id, self.op, list(self.inputs), self.device,
                        dict(self.params))


@dataclass
class PlanSpec:
    query: str
    nodes: list

    def __post_init__(self):
        seen = set()
        for node in self.nodes:
            if node.op not in OPS:
                raise PlanError(f"unknown operator {node.op!r} in node {node.node_id}")
            if node.node_id in seen:
                raise PlanError(f"duplicate node id {node.node_id!r}")
            for ref in node.inputs:
                if ref not in seen:
                    raise PlanError(
                        f"node {node.node_id!r} references {ref!r} before definition "
                        "(cycle or unknown id)")
            seen.add(node.node_id)
        consumed = {ref for node in self.nodes for ref in node.inputs}
        sinks = [n.node_id for n in self.nodes if n.node_id not in consumed]
        if len(sinks) != 1:
            raise PlanError(f"plan must have exactly one sink, found {sinks}")

    @property
    def sink(self) -> PlanNode:
        consumed = {ref for node in self.nodes for ref in node.inputs}
        return next(n for n in self.nodes if n.node_id not in consumed)

    def node(self, node_id: str) -> PlanNode:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise PlanError(f"no node {node_id!r}")

    def clone(self) -> "PlanSpec":
        return PlanSpec(self.query, [n.clone() for n in self.nodes])

    def vs_nodes(self) -> list:
        return [n for n in self.nodes if n.op == "vector_search"]


# --- text form --------------------------------------------------------------


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v) if isinstance(v, float) else str(v)
    if isinstance(v, str):
        if re.fullmatch(r"[A-Za-z_][A-Za-z_0-9.:]*", v):
            return v
        return "'" + v.replace("'", "''") + "'"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_format_value(x) for x in v) + "]"
    if v is None:
        return "none"
    raise PlanError(f"cannot format plan value {v!r}")


def plan_to_text(plan: PlanSpec) -> str:
    lines = [f"# plan {plan.query}"]
    for node in plan.nodes:
        parts = [f"kind={node.op}"]
        parts.append("inputs=[" + ", ".join(node.inputs) + "]")
        parts.append(f"device={node.device}")
        for key in sorted(node.params):
            parts.append(f"{key}={_format_value(node.params[key])}")
        lines.append(f"{node.node_id} = op({', '.join(parts)})")
    return "\n".join(lines) + "\n"


_PLAN_TOKEN = re.compile(
    r"\s*(?:(?P<num>-?\d+\.\d*(?:[eE][+-]?\d+)?|-?\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<str>'(?:[^']|'')*')"
    r"|(?P<punc>[=\[\],()])"
    r"|(?P<word>\*|[A-Za-z_][A-Za-z_0-9.:*]*))")


def _tokenize_line(line: str, lineno: int):
    tokens, pos = [], 0
    while pos < len(line):
        m = _PLAN_TOKEN.match(line, pos)
        if not m or m.end() == pos:
            if not line[pos:].strip():
                break
            raise PlanError(f"line {lineno}: cannot tokenize at {line[pos:pos+20]!r}")
        pos = m.end()
        if m.lastgroup == "num":
            text = m.group("num")
            tokens.append(("num", float(text) if any(c in text for c in ".eE") else int(text)))
        elif m.lastgroup == "str":
            tokens.append(("str", m.group("str")[1:-1].replace("''", "'")))
        elif m.lastgroup == "punc":
            tokens.append(("punc", m.group("punc")))
        else:
            tokens.append(("word", m.group("word")))
    return tokens


def _parse_value(tokens, pos, lineno):
    if pos >= len(tokens):
        raise PlanError(f"line {lineno}: unexpected end of line")
    kind, val = tokens[pos]
    if kind in ("num", "str"):
        return val, pos + 1
    if kind == "word":
        if val == "true":
            return True, pos + 1
        if val == "false":
            return False, pos + 1
        if val == "none":
            return None, pos + 1
        return val, pos + 1
    if (kind, val) == ("punc", "["):
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ("punc", "]"):
            item, pos = _parse_value(tokens, pos, lineno)
            items.append(item)
            if pos < len(tokens) and tokens[pos] == ("punc", ","):
                pos += 1
        if pos >= len(tokens):
            raise PlanError(f"line {lineno}: unterminated list")
        return items, pos + 1
    raise PlanError(f"line {lineno}: unexpected token {val!r}")


def parse_plan(text: str, query: str = "custom") -> PlanSpec:
    nodes = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("# plan "):
            query = line[len("# plan "):].strip()
            continue
        if not line or line.startswith("#"):
            continue
        tokens = _tokenize_line(line, lineno)
        if (len(tokens) < 4 or tokens[0][0] != "word" or tokens[1] != ("punc", "=")
                or tokens[2] != ("word", "op") or tokens[3] != ("punc", "(")):
            raise PlanError(f"line {lineno}: expected `id = op(...)`")
        node_id = tokens[0][1]
        pos = 4
        op = None
        inputs: list = []
        device = AUTO
        params: dict = {}
        while pos < len(tokens) and tokens[pos] != ("punc", ")"):
            if pos + 1 >= len(tokens) or tokens[pos][0] != "word" or tokens[pos + 1] != ("punc", "="):
                raise PlanError(f"line {lineno}: expected key=value in node {node_id}")
            key = tokens[pos][1]
            value, pos = _parse_value(tokens, pos + 2, lineno)
            if key == "kind":
                op = value
            elif key == "inputs":
                inputs = list(value)
            elif key == "device":
                device = value
            else:
                params[key] = value
            if pos < len(tokens) and tokens[pos] == ("punc", ","):
                pos += 1
        if pos >= len(tokens):
            raise PlanError(f"line {lineno}: unterminated node definition")
        if pos != len(tokens) - 1:
            raise PlanError(f"line {lineno}: trailing tokens after ')'")
        if op is None:
            raise PlanError(f"line {lineno}: node {node_id} missing kind=")
        nodes.append(PlanNode(node_id, op, inputs, device, params))
    return PlanSpec(query, nodes)


# --- builtin plans -----------------------------------------------------------


@dataclass(frozen=True)
class PlanParams:
    """Query-level knobs shared by the builtin plans."""

    k: int = 100
    oversample: int = 10          # k' = oversample*k on post-filter plans
    q15_oversample: int = 500
    nprobe: int = 32
    ef: int = 0                   # 0 = max(4*k', 64)
    metric: str = "squared_l2"
    query_seed: int = 7
    region: str = "EUROPE"
    nation: str = "GERMANY"
    q11_fraction: float = 0.01
    q18_qty_threshold: int = 200
    q10_quarter: str = "1993-10-01"
    q15_quarter: str = "1996-01-01"

    def ef_for(self, k_prime: int) -> int:
        if self.ef:
            return max(self.ef, k_prime)
        return max(4 * k_prime, 64)

    @classmethod
    def for_scale(cls, sf: float, **overrides) -> "PlanParams":
        """Defaults with the scale-dependent knobs resolved (the stock-value
        threshold fraction scales as 0.0001/sf)."""
        overrides.setdefault("q11_fraction", 0.0001 / sf)
        return cls(**overrides)


class _Builder:
    def __init__(self, query: str):
        self.query = query
        self.nodes = []
        self._n = 0

    def add(self, op: str, inputs=(), **params) -> str:
        self._n += 1
        node_id = f"n{self._n}"
        self.nodes.append(PlanNode(node_id, op, list(inputs), AUTO, params))
        return node_id

    def plan(self) -> PlanSpec:
        return PlanSpec(self.query, self.nodes)


def _vs_params(mode: str, kind: str, pp: PlanParams, k: int, k_prime: int) -> dict:
    if mode not in VS_MODES:
        raise ParameterError(f"unknown vs mode {mode!r}")
    params = {
        "mode": mode, "k": k, "k_prime": k_prime, "metric": pp.metric,
        "query_field": f"qv_{kind}", "data_field": "rv_embedding" if kind == "review" else "im_embedding",
    }
    if mode == "ivf":
        params["index"] = f"ivf:{'reviews' if kind == 'review' else 'images'}"
        params["nprobe"] = pp.nprobe
    elif mode == "graph":
        params["index"] = f"graph:{'reviews' if kind == 'review' else 'images'}"
        params["ef"] = pp.ef_for(k_prime)
    return params


def _topk_parts(b: _Builder, vs_node: str, part_col: str, k: int, out: str) -> str:
    """Dedupe a vs output to per-part best rank, keep the k best parts."""
    best = b.add("aggregate", [vs_node], group=[part_col],
                 aggs=[["min", "vs_rank", "best_rank"], ["min", "vs_distance", "distance"]])
    top = b.add("sort", [best], keys=[["best_rank", "asc"], [part_col, "asc"]], limit=k)
    return b.add("rename", [top], map=[[part_col, out]])


def _quarter_bounds(start: str) -> tuple:
    lo = date_to_days(start)
    y, m, _ = (int(x) for x in start.split("-"))
    m += 3
    if m > 12:
        m -= 12
        y += 1
    hi = date_to_days(f"{y:04d}-{m:02d}-01")
    return lo, hi


def builtin_plan(query: str, vs_mode: str, pp: PlanParams | None = None) -> PlanSpec:
    """One of the eight benchmark plans, parameterized by vs mode."""
    pp = pp or PlanParams()
    if query not in QUERIES:
        raise ParameterError(f"unknown query {query!r}; expected one of {QUERIES}")
    if vs_mode not in VS_MODES:
        raise ParameterError(f"unknown vs mode {vs_mode!r}")
    return _BUILDERS[query](vs_mode, pp)


def _plan_q2(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q2")
    k_prime = pp.oversample * pp.k
    qv = b.add("query_vectors", source="image", n=1, seed=pp.query_seed)
    imgs = b.add("scan", table="images")
    vs = b.add("vector_search", [qv, imgs], **_vs_params(mode, "image", pp, pp.k, k_prime))
    topk = _topk_parts(b, vs, "im_partkey", pp.k, "vk_partkey")
    region = b.add("filter", [b.add("scan", table="region")], pred=f"r_name = '{pp.region}'")
    nat = b.add("join", [b.add("scan", table="nation"), region],
                join="inner", left_keys=["n_regionkey"], right_keys=["r_regionkey"])
    sup = b.add("join", [b.add("scan", table="supplier"), nat],
                join="inner", left_keys=["s_nationkey"], right_keys=["n_nationkey"])
    ps = b.add("join", [b.add("scan", table="partsupp"), sup],
               join="inner", left_keys=["ps_suppkey"], right_keys=["s_suppkey"])
    scoped = b.add("join", [ps, topk],
                   join="inner", left_keys=["ps_partkey"], right_keys=["vk_partkey"])
    mins = b.add("aggregate", [scoped], group=["vk_partkey"],
                 aggs=[["min", "ps_supplycost", "min_cost"]])
    mins_r = b.add("rename", [mins], map=[["vk_partkey", "mc_partkey"]])
    withmin = b.add("join", [scoped, mins_r],
                    join="inner", left_keys=["ps_partkey"], right_keys=["mc_partkey"])
    cheapest = b.add("filter", [withmin], pred="ps_supplycost = min_cost")
    parts = b.add("join", [cheapest, b.add("scan", table="part")],
                  join="inner", left_keys=["ps_partkey"], right_keys=["p_partkey"])
    proj = b.add("project", [parts],
                 fields=["s_acctbal", "s_name", "n_name", "p_partkey", "p_mfgr",
                         "s_suppkey", "ps_supplycost", "distance"])
    b.add("sort", [proj], keys=[["s_acctbal", "desc"], ["distance", "asc"],
                                ["n_name", "asc"], ["s_name", "asc"], ["p_partkey", "asc"]],
          limit=100)
    return b.plan()


def _plan_q16(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q16")
    qv = b.add("query_vectors", source="review", n=1, seed=pp.query_seed)
    rvs = b.add("scan", table="reviews")
    vs = b.add("vector_search", [qv, rvs], **_vs_params(mode, "review", pp, pp.k, pp.k))
    flagged = b.add("aggregate", [vs], group=["rv_partkey"], aggs=[])
    bad_ps = b.add("join", [b.add("scan", table="partsupp"), flagged],
                   join="inner", left_keys=["ps_partkey"], right_keys=["rv_partkey"])
    bad_sup = b.add("rename",
                    [b.add("aggregate", [bad_ps], group=["ps_suppkey"], aggs=[])],
                    map=[["ps_suppkey", "bad_suppkey"]])
    parts = b.add("filter", [b.add("scan", table="part")],
                  pred="p_brand != 'Brand#45' and p_size in (49, 14, 23, 45, 19, 3, 36, 9)")
    ps = b.add("join", [b.add("scan", table="partsupp"), parts],
               join="inner", left_keys=["ps_partkey"], right_keys=["p_partkey"])
    good = b.add("join", [ps, bad_sup],
                 join="anti", left_keys=["ps_suppkey"], right_keys=["bad_suppkey"])
    distinct = b.add("aggregate", [good],
                     group=["p_brand", "p_type", "p_size", "ps_suppkey"], aggs=[])
    counts = b.add("aggregate", [distinct], group=["p_brand", "p_type", "p_size"],
                   aggs=[["count", "*", "supplier_cnt"]])
    b.add("sort", [counts], keys=[["supplier_cnt", "desc"], ["p_brand", "asc"],
                                  ["p_type", "asc"], ["p_size", "asc"]])
    return b.plan()


def _plan_q19(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q19")
    k_prime = pp.oversample * pp.k
    qr = b.add("query_vectors", source="review", n=1, seed=pp.query_seed)
    qi = b.add("query_vectors", source="image", n=1, seed=pp.query_seed + 1)
    vsr = b.add("vector_search", [qr, b.add("scan", table="reviews")],
                **_vs_params(mode, "review", pp, pp.k, k_prime))
    rparts = _topk_parts(b, vsr, "rv_partkey", pp.k, "vsr_partkey")
    rparts = b.add("project", [rparts], fields=["vsr_partkey"])
    vsi = b.add("vector_search", [qi, b.add("scan", table="images")],
                **_vs_params(mode, "image", pp, pp.k, k_prime))
    iparts = _topk_parts(b, vsi, "im_partkey", pp.k, "vsi_partkey")
    iparts = b.add("project", [iparts], fields=["vsi_partkey"])
    li = b.add("join", [b.add("scan", table="lineitem"), b.add("scan", table="part")],
               join="inner", left_keys=["l_partkey"], right_keys=["p_partkey"])
    m1 = b.add("join", [li, rparts], join="left",
               left_keys=["l_partkey"], right_keys=["vsr_partkey"])
    m2 = b.add("join", [m1, iparts], join="left",
               left_keys=["l_partkey"], right_keys=["vsi_partkey"])
    qual = b.add("filter", [m2], pred=(
        "(p_brand = 'Brand#12' and p_container in "
        "('SM CASE', 'SM BOX', 'SM PACK', 'SM PKG') "
        "and l_quantity >= 1 and l_quantity <= 11) "
        "or vsr_partkey is not null or vsi_partkey is not null"))
    rev = b.add("derive", [qual], cols=[["revenue", "l_extendedprice * (1.0 - l_discount)"]])
    b.add("aggregate", [rev], group=[], aggs=[["sum", "revenue", "revenue"]])
    return b.plan()


def _plan_q10(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q10")
    lo, hi = _quarter_bounds(pp.q10_quarter)
    orders = b.add("filter", [b.add("scan", table="orders")],
                   pred=f"o_orderdate >= {lo} and o_orderdate < {hi}")
    returned = b.add("filter", [b.add("scan", table="lineitem")],
                     pred="l_returnflag = 'R'")
    cn = b.add("join", [b.add("scan", table="customer"), b.add("scan", table="nation")],
               join="inner", left_keys=["c_nationkey"], right_keys=["n_nationkey"])
    co = b.add("join", [cn, orders], join="inner",
               left_keys=["c_custkey"], right_keys=["o_custkey"])
    col = b.add("join", [co, returned], join="inner",
                left_keys=["o_orderkey"], right_keys=["l_orderkey"])
    rev = b.add("derive", [col], cols=[["revenue", "l_extendedprice * (1.0 - l_discount)"]])
    agg = b.add("aggregate", [rev], group=["c_custkey", "c_name", "c_acctbal", "n_name"],
                aggs=[["sum", "revenue", "revenue"]])
    qv = b.add("query_vectors", source="review", n=1, seed=pp.query_seed)
    vs = b.add("vector_search", [qv, b.add("scan", table="reviews")],
               **_vs_params(mode, "review", pp, pp.k, pp.k))
    reviewers = b.add("aggregate", [vs], group=["rv_custkey"], aggs=[])
    ann = b.add("join", [agg, reviewers], join="left",
                left_keys=["c_custkey"], right_keys=["rv_custkey"])
    flag = b.add("derive", [ann], cols=[
        ["is_in_top_k", "case when rv_custkey is null then 0 else 1 end"]])
    proj = b.add("project", [flag],
                 fields=["c_custkey", "c_name", "revenue", "c_acctbal", "n_name", "is_in_top_k"])
    b.add("sort", [proj], keys=[["revenue", "desc"], ["c_custkey", "asc"]], limit=20)
    return b.plan()


def _plan_q13(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q13")
    cl = b.add("join", [b.add("scan", table="customer"), b.add("scan", table="orders")],
               join="left", left_keys=["c_custkey"], right_keys=["o_custkey"])
    lvl1 = b.add("aggregate", [cl], group=["c_custkey"],
                 aggs=[["count", "o_orderkey", "c_count"]])
    qv = b.add("query_vectors", source="review", n=1, seed=pp.query_seed)
    vs = b.add("vector_search", [qv, b.add("scan", table="reviews")],
               **_vs_params(mode, "review", pp, pp.k, pp.k))
    percust = b.add("aggregate", [vs], group=["rv_custkey"],
                    aggs=[["count", "*", "vs_matches_raw"]])
    ann = b.add("join", [lvl1, percust], join="left",
                left_keys=["c_custkey"], right_keys=["rv_custkey"])
    fill = b.add("derive", [ann], cols=[
        ["vs_matches", "case when vs_matches_raw is null then 0 else vs_matches_raw end"]])
    lvl2 = b.add("aggregate", [fill], group=["c_count"],
                 aggs=[["count", "*", "custdist"], ["sum", "vs_matches", "topk_reviews"]])
    b.add("sort", [lvl2], keys=[["custdist", "desc"], ["c_count", "desc"]])
    return b.plan()


def _plan_q18(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q18")
    k_prime = pp.oversample * pp.k
    qv = b.add("query_vectors", source="image", n=1, seed=pp.query_seed)
    vs = b.add("vector_search", [qv, b.add("scan", table="images")],
               **_vs_params(mode, "image", pp, pp.k, k_prime))
    vparts = _topk_parts(b, vs, "im_partkey", pp.k, "vk_partkey")
    vparts = b.add("project", [vparts], fields=["vk_partkey"])
    lagg = b.add("aggregate", [b.add("scan", table="lineitem")], group=["l_orderkey"],
                 aggs=[["sum", "l_quantity", "order_qty"]])
    big = b.add("rename",
                [b.add("filter", [lagg], pred=f"order_qty > {pp.q18_qty_threshold}")],
                map=[["l_orderkey", "big_orderkey"]])
    ob = b.add("join", [b.add("scan", table="orders"), big], join="inner",
               left_keys=["o_orderkey"], right_keys=["big_orderkey"])
    cob = b.add("join", [b.add("scan", table="customer"), ob], join="inner",
                left_keys=["c_custkey"], right_keys=["o_custkey"])
    li = b.add("join", [cob, b.add("scan", table="lineitem")], join="inner",
               left_keys=["o_orderkey"], right_keys=["l_orderkey"])
    mark = b.add("join", [li, vparts], join="left",
                 left_keys=["l_partkey"], right_keys=["vk_partkey"])
    cased = b.add("derive", [mark], cols=[
        ["similar_term", "case when vk_partkey is null then 0 else l_quantity end"]])
    agg = b.add("aggregate", [cased],
                group=["c_custkey", "c_name", "o_orderkey", "o_orderdate", "o_totalprice"],
                aggs=[["sum", "l_quantity", "total_qty"], ["sum", "similar_term", "similar_qty"]])
    b.add("sort", [agg], keys=[["similar_qty", "desc"], ["o_totalprice", "desc"],
                               ["o_orderkey", "asc"]], limit=100)
    return b.plan()


def _plan_q11(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q11")
    nat = b.add("filter", [b.add("scan", table="nation")], pred=f"n_name = '{pp.nation}'")
    sup = b.add("join", [b.add("scan", table="supplier"), nat], join="inner",
                left_keys=["s_nationkey"], right_keys=["n_nationkey"])
    ps = b.add("join", [b.add("scan", table="partsupp"), sup], join="inner",
               left_keys=["ps_suppkey"], right_keys=["s_suppkey"])
    val = b.add("derive", [ps], cols=[["stock_value", "ps_supplycost * ps_availqty"]])
    pval = b.add("aggregate", [val], group=["ps_partkey"],
                 aggs=[["sum", "stock_value", "part_value"]])
    tot = b.add("aggregate", [val], group=[], aggs=[["sum", "stock_value", "total_value"]])
    pv1 = b.add("derive", [pval], cols=[["join_one", "1"]])
    tt1 = b.add("derive", [tot], cols=[["join_two", "1"]])
    crossed = b.add("join", [pv1, tt1], join="inner",
                    left_keys=["join_one"], right_keys=["join_two"])
    qual = b.add("filter", [crossed], pred=f"part_value > total_value * {pp.q11_fraction!r}")
    withimg = b.add("join", [qual, b.add("scan", table="images")], join="inner",
                    left_keys=["ps_partkey"], right_keys=["im_partkey"])
    bestimg = b.add("aggregate", [withimg], group=["ps_partkey", "part_value"],
                    aggs=[["min", "im_imagekey", "q_imagekey"]])
    qside = b.add("join", [bestimg, b.add("scan", table="images")], join="inner",
                  left_keys=["q_imagekey"], right_keys=["im_imagekey"])
    vs_params = _vs_params(mode, "image", pp, 1, 4)
    vs_params["query_field"] = "im_embedding"
    vs = b.add("vector_search", [qside, b.add("scan", table="images")], **vs_params)
    pf = b.add("vs_postfilter", [vs], k=1, pred="im_imagekey_d != im_imagekey")
    proj = b.add("project", [pf],
                 fields=["ps_partkey", "part_value", "im_partkey_d", "vs_distance"])
    b.add("sort", [proj], keys=[["part_value", "desc"], ["ps_partkey", "asc"]])
    return b.plan()


def _plan_q15(mode: str, pp: PlanParams) -> PlanSpec:
    b = _Builder("Q15")
    lo, hi = _quarter_bounds(pp.q15_quarter)
    lq = b.add("filter", [b.add("scan", table="lineitem")],
               pred=f"l_shipdate >= {lo} and l_shipdate < {hi}")
    rev = b.add("derive", [lq], cols=[["revenue", "l_extendedprice * (1.0 - l_discount)"]])
    sagg = b.add("aggregate", [rev], group=["l_suppkey"],
                 aggs=[["sum", "revenue", "total_revenue"]])
    mx = b.add("aggregate", [sagg], group=[], aggs=[["max", "total_revenue", "max_revenue"]])
    s1 = b.add("derive", [sagg], cols=[["join_one", "1"]])
    m1 = b.add("derive", [mx], cols=[["join_two", "1"]])
    crossed = b.add("join", [s1, m1], join="inner",
                    left_keys=["join_one"], right_keys=["join_two"])
    top = b.add("filter", [crossed], pred="total_revenue = max_revenue")
    tsup = b.add("join", [b.add("scan", table="supplier"), top], join="inner",
                 left_keys=["s_suppkey"], right_keys=["l_suppkey"])
    psup = b.add("join", [b.add("scan", table="partsupp"), tsup], join="inner",
                 left_keys=["ps_suppkey"], right_keys=["s_suppkey"])
    parts = b.add("aggregate", [psup], group=["ps_partkey"], aggs=[])
    qv = b.add("query_vectors", source="review", n=1, seed=pp.query_seed)
    if mode == "enn":
        scoped = b.add("join", [b.add("scan", table="reviews"), parts], join="semi",
                       left_keys=["rv_partkey"], right_keys=["ps_partkey"])
        vs = b.add("vector_search", [qv, scoped],
                   **_vs_params(mode, "review", pp, pp.k, pp.k))
        trimmed = vs
    else:
        k_prime = pp.q15_oversample * pp.k
        vs = b.add("vector_search", [qv, b.add("scan", table="reviews")],
                   **_vs_params(mode, "review", pp, pp.k, k_prime))
        trimmed = b.add("vs_postfilter", [vs, parts], k=pp.k,
                        semi_left="rv_partkey", semi_right="ps_partkey")
    # no vs_rank in the output: the exhaustive path ranks within the scoped
    # subset while the indexed path ranks globally before the post-filter
    proj = b.add("project", [trimmed],
                 fields=["rv_reviewkey", "rv_partkey", "rv_custkey", "vs_distance"])
    b.add("sort", [proj], keys=[["vs_distance", "asc"], ["rv_reviewkey", "asc"]], limit=pp.k)
    return b.plan()


_BUILDERS = {
    "Q2": _plan_q2, "Q10": _plan_q10, "Q11": _plan_q11, "Q13": _plan_q13,
    "Q15": _plan_q15, "Q16": _plan_q16, "Q18": _plan_q18, "Q19": _plan_q19,
}
