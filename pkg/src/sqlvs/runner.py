"""High-level helpers gluing dataset, indexes, plans, and costing together."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .datagen import Dataset, DatasetSpec, generate, load_dataset, save_dataset
from .executor import BaseRun, IndexCatalog, execute_base
from .metrics import quality_for_query
from .placement import HardwareProfile
from .plans import PlanParams, builtin_plan
from .profiles import get_profile
from .report import RunReport
from .strategy import cost_run, realize
from .vecindex import IvfIndex, KnnGraphIndex


@dataclass
class Workbench:
    dataset: Dataset
    catalog: IndexCatalog


def default_nlist(count: int) -> int:
    nlist = 1
    while nlist * 2 <= max(1, count // 16) and nlist < 1024:
        nlist *= 2
    return nlist


def build_workbench(
    spec: DatasetSpec | None = None,
    data_dir: Optional[str] = None,
    with_ivf: bool = True,
    with_graph: bool = True,
    nlist: int = 0,
    degree: int = 16,
    index_seed: int = 0,
) -> Workbench:
    """Generate (or load) a dataset and build the requested indexes."""
    if data_dir is not None and Path(data_dir, "dataset.meta").exists():
        dataset = load_dataset(data_dir)
    else:
        dataset = generate(spec or DatasetSpec())
        if data_dir is not None:
            save_dataset(dataset, data_dir)
    catalog = IndexCatalog()
    for table, field, name in (("reviews", "rv_embedding", "reviews"),
                               ("images", "im_embedding", "images")):
        column = dataset.table(table).column(field)
        if with_ivf:
            n = nlist or default_nlist(column.count)
            idx = IvfIndex.build(column, nlist=min(n, column.count), seed=index_seed)
            catalog.register(f"ivf:{name}", idx, column)
        if with_graph:
            g = KnnGraphIndex.build(column, degree=min(degree, column.count - 1),
                                    seed=index_seed)
            catalog.register(f"graph:{name}", g, column)
    return Workbench(dataset, catalog)


def run_query(
    bench: Workbench,
    query: str,
    vs_mode: str,
    strategy: str,
    profile: HardwareProfile | str,
    plan_params: PlanParams | None = None,
    with_quality: bool = True,
    base: BaseRun | None = None,
    enn_base: BaseRun | None = None,
) -> tuple:
    """Execute one query under a strategy; returns (RunReport, BaseRun)."""
    if isinstance(profile, str):
        profile = get_profile(profile)
    pp = plan_params or PlanParams.for_scale(bench.dataset.spec.sf)
    plan = builtin_plan(query, vs_mode, pp)
    if base is None:
        base = execute_base(plan, bench.dataset, bench.catalog)
    realized = realize(plan, strategy, profile, bench.catalog, bench.dataset)
    report, _ = cost_run(base, realized, profile, bench.catalog)
    report.sf = bench.dataset.spec.sf
    report.seed = bench.dataset.spec.seed
    report.k = pp.k
    report.k_prime = max(int(n.params["k_prime"]) for n in plan.vs_nodes())
    if with_quality and vs_mode != "enn":
        if enn_base is None:
            enn_base = execute_base(builtin_plan(query, "enn", pp), bench.dataset,
                                    bench.catalog)
        quality = quality_for_query(query, base.result, enn_base.result,
                                    shortfall=base.total_shortfall)
        report.recall = quality.recall
        report.rel_err = quality.rel_err
    elif with_quality:
        report.recall = 1.0 if query != "Q19" else None
        report.rel_err = 0.0 if query == "Q19" else None
    return report, base
