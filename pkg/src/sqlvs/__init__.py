"""Desk-scale SQL + vector search engine with a CPU/GPU placement simulator."""

from .datagen import Dataset, DatasetSpec, generate, load_dataset, save_dataset
from .executor import IndexCatalog, execute_base
from .metrics import QualityReport, recall, rel_err, share_rel
from .placement import (
    Artifact,
    HardwareProfile,
    MemoryBudget,
    ResidencyState,
    TransferReport,
    account_run,
    apply_pinning,
    apply_transform_cache,
    enable_host_residency,
    transfer_cost,
)
from .plans import PlanParams, PlanSpec, builtin_plan, parse_plan, plan_to_text
from .profiles import BUILTIN_PROFILES, get_profile, load_profile
from .report import RunReport, emit_report, load_report
from .runner import Workbench, build_workbench, run_query
from .strategy import (
    STRATEGIES,
    StrategyDecision,
    choose_strategy,
    crossover_sweep,
    estimate_cost,
    realize,
)
from .table import EmbeddingColumn, Schema, Table, concat, gather, project
from .vecindex import (
    FlatIndex,
    IvfIndex,
    KnnGraphIndex,
    NeighborTable,
    SearchParams,
    enn_search,
    load_index,
    save_index,
)
from .vecsearch import oversample_postfilter, vector_search_operator

__version__ = "0.1.0"
