"""Result-quality metrics and the recall/error tuning sweep.

Recall is measured at the query-output level: the run of the same plan with
exhaustive search is ground truth, and recall is the multiset fraction of
its output rows (identified by a per-query natural key) that the indexed
run reproduces. The revenue query (Q19) collapses to a scalar, so it is
scored by relative revenue error instead.

Keys exclude floating-point columns. Q10's key includes the is_in_top_k
flag because that flag is the only column the search result can change.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError
from .table import Table

# natural output keys per query; Q19 is scored by rel_err instead
QUERY_RECALL_KEYS = {
    "Q2": ["p_partkey", "s_suppkey"],
    "Q10": ["c_custkey", "is_in_top_k"],
    "Q11": ["ps_partkey", "im_partkey_d"],
    "Q13": ["c_count", "custdist", "topk_reviews"],
    "Q15": ["rv_reviewkey"],
    "Q16": ["p_brand", "p_type", "p_size", "supplier_cnt"],
    "Q18": ["o_orderkey", "similar_qty"],
}

RECALL_TARGET = 0.95
REL_ERR_TARGET = 0.01


@dataclass
class QualityReport:
    query: str
    recall: Optional[float] = None
    rel_err: Optional[float] = None
    shortfall: int = 0
    applicable: bool = True

    def meets_targets(self) -> bool:
        if not self.applicable:
            return False
        if self.rel_err is not None:
            return self.rel_err <= REL_ERR_TARGET
        return self.recall is not None and self.recall >= RECALL_TARGET


def _key_counter(table: Table, keys) -> Counter:
    cols = [np.asarray(table.column(k)) for k in keys]
    return Counter(zip(*(c.tolist() for c in cols))) if table.row_count else Counter()


def recall(ann_output: Table, enn_output: Table, key_fields) -> Optional[float]:
    """Multiset |ann intersect enn| / |enn| over key tuples; None if enn is empty."""
    truth = _key_counter(enn_output, key_fields)
    if not truth:
        return None
    got = _key_counter(ann_output, key_fields)
    hit = sum(min(n, got.get(key, 0)) for key, n in truth.items())
    return hit / sum(truth.values())


def rel_err(rev_ann: float, rev_enn: float) -> Optional[float]:
    """|rev_ann - rev_enn| / rev_enn; None (undefined) when rev_enn is 0."""
    if rev_enn == 0:
        return None
    return abs(rev_ann - rev_enn) / rev_enn


def share_rel(rel_cpu: float, rel_gpu: float,
              total_cpu: float, total_gpu: float) -> Optional[float]:
    """Fraction of total host-to-device savings owed to relational operators.

    Above 0.5 the relational side contributes the majority of the win.
    None (undefined) when the totals are equal.
    """
    denom = total_cpu - total_gpu
    if denom == 0:
        return None
    return (rel_cpu - rel_gpu) / denom


def quality_for_query(query: str, ann_result: Table, enn_result: Table,
                      shortfall: int = 0) -> QualityReport:
    if query == "Q19":
        rev_ann = float(np.asarray(ann_result.column("revenue"))[0]) if ann_result.row_count else 0.0
        rev_enn = float(np.asarray(enn_result.column("revenue"))[0]) if enn_result.row_count else 0.0
        err = rel_err(rev_ann, rev_enn)
        return QualityReport(query, rel_err=err, shortfall=shortfall,
                             applicable=err is not None)
    keys = QUERY_RECALL_KEYS.get(query)
    if keys is None:
        raise ParameterError(f"no recall key defined for query {query!r}")
    rec = recall(ann_result, enn_result, keys)
    return QualityReport(query, recall=rec, shortfall=shortfall,
                         applicable=rec is not None)


# --- tuning sweep --------------------------------------------------------------


@dataclass
class TuneStep:
    query: str
    vs_mode: str
    setting_name: str
    setting: int
    recall: Optional[float]
    rel_err: Optional[float]
    meets: bool


@dataclass
class TuneResult:
    query: str
    vs_mode: str
    setting_name: str                # "nprobe" | "ef"
    minimal_setting: Optional[int]   # None when no grid point met the target
    steps: list = field(default_factory=list)


def _setting_grid(vs_mode, catalog, plan_params, index_names) -> tuple:
    if vs_mode == "ivf":
        nlist = min(catalog.get(n, "owning").nlist for n in index_names)
        grid, v = [], 1
        while v < nlist:
            grid.append(v)
            v *= 2
        grid.append(nlist)
        return "nprobe", grid
    count = min(catalog.get(n, "owning").count for n in index_names)
    base = max(64, plan_params.k)
    grid, v = [], base
    while v < count:
        grid.append(v)
        v *= 2
    grid.append(count)
    return "ef", grid


def find_min_setting(query: str, vs_mode: str, dataset, catalog,
                     plan_params=None, enn_result: Optional[Table] = None) -> TuneResult:
    """Smallest grid setting (doubling grid up to nlist / N) meeting the
    quality target for this query; records every step tried."""
    from dataclasses import replace

    from .executor import execute_base
    from .plans import PlanParams, builtin_plan

    if vs_mode not in ("ivf", "graph"):
        raise ParameterError("tuning applies to indexed modes (ivf, graph)")
    pp = plan_params or PlanParams()
    if enn_result is None:
        enn_result = execute_base(builtin_plan(query, "enn", pp), dataset, catalog).result
    index_names = {node.params["index"]
                   for node in builtin_plan(query, vs_mode, pp).vs_nodes()}
    name, grid = _setting_grid(vs_mode, catalog, pp, sorted(index_names))
    result = TuneResult(query, vs_mode, name, None)
    for setting in grid:
        pp_step = replace(pp, **({"nprobe": setting} if name == "nprobe" else {"ef": setting}))
        run = execute_base(builtin_plan(query, vs_mode, pp_step), dataset, catalog)
        quality = quality_for_query(query, run.result, enn_result,
                                    shortfall=run.total_shortfall)
        meets = quality.meets_targets()
        result.steps.append(TuneStep(query, vs_mode, name, setting,
                                     quality.recall, quality.rel_err, meets))
        if meets:
            result.minimal_setting = setting
            break
    return result


def tune_records_to_text(results: list) -> str:
    lines = ["query|vs_mode|setting|value|recall|rel_err|meets"]
    for res in results:
        for s in res.steps:
            lines.append("|".join([
                s.query, s.vs_mode, s.setting_name, str(s.setting),
                "" if s.recall is None else format(s.recall, ".6f"),
                "" if s.rel_err is None else format(s.rel_err, ".8f"),
                "1" if s.meets else "0",
            ]))
    return "\n".join(lines) + "\n"
