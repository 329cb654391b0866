"""Execution strategies: placement programs over a plan, plus the chooser.

The six strategies fix where vector search and relational operators
execute, where the index / embeddings / relational data start, and what
crosses the interconnect (copy before execution vs streamed host reads at
runtime):

    strategy   VS   Rel   Idx Emb Rel   idx     emb      rel
    cpu        CPU  CPU   H   H   H     -       -        -
    gpu        GPU  GPU   D   D   D     -       -        -
    hybrid     CPU  GPU   H   H   H     -       -        copy
    copy_di    GPU  GPU   H   H   H     copy    copy     copy
    copy_i     GPU  GPU   H   H   H     copy    stream   copy
    gpu_i      GPU  GPU   D   H   H     -       stream   copy

copy_di rides the data-owning index layout (copying it moves the
embeddings); copy_i and gpu_i ride the non-owning layout and stream only
the embeddings the scan visits. Strategy never changes results. Realizing
a plan assigns devices, inserts pass-through transfer nodes on every edge
that crosses tiers, and flags device-placed search nodes whose oversampling
exceeds the device top-k cap for host fallback.
"""

from __future__ import annotations

from dataclasses import dataclass

from .datagen import Dataset, make_query_vectors
from .errors import CapabilityError, ParameterError
from .executor import BaseRun, IndexCatalog
from .placement import (
    DATA_TRANSFER,
    DEVICE,
    EMBEDDING_COLUMN,
    GRAPH_OWNING,
    GRAPH_STRUCTURE,
    HOST,
    INDEX_TRANSFER,
    IVF_OWNING,
    IVF_STRUCTURE,
    REL,
    RESIDUAL,
    STREAM,
    VS,
    Artifact,
    HardwareProfile,
    MemoryBudget,
    ResidencyState,
    TraceEvent,
    account_run,
    streamed_read_cost,
    transfer_cost,
)
from .plans import PlanNode, PlanSpec
from .report import RunReport
from .vecindex import SearchParams

STRATEGIES = ("cpu", "gpu", "hybrid", "copy_di", "copy_i", "gpu_i")


@dataclass(frozen=True)
class StrategyInfo:
    name: str
    vs_device: str
    rel_device: str
    idx_start: str
    emb_start: str
    rel_start: str
    idx_transfer: str   # none | copy
    emb_transfer: str   # none | copy | stream
    rel_transfer: str   # none | copy
    layout: str         # owning | non_owning


TABLE2 = {
    "cpu": StrategyInfo("cpu", HOST, HOST, HOST, HOST, HOST,
                        "none", "none", "none", "owning"),
    "gpu": StrategyInfo("gpu", DEVICE, DEVICE, DEVICE, DEVICE, DEVICE,
                        "none", "none", "none", "owning"),
    "hybrid": StrategyInfo("hybrid", HOST, DEVICE, HOST, HOST, HOST,
                           "none", "none", "copy", "owning"),
    "copy_di": StrategyInfo("copy_di", DEVICE, DEVICE, HOST, HOST, HOST,
                            "copy", "copy", "copy", "owning"),
    "copy_i": StrategyInfo("copy_i", DEVICE, DEVICE, HOST, HOST, HOST,
                           "copy", "stream", "copy", "non_owning"),
    "gpu_i": StrategyInfo("gpu_i", DEVICE, DEVICE, DEVICE, HOST, HOST,
                          "none", "stream", "copy", "non_owning"),
}

_VS_CLASS = {
    ("enn", False): "vs_flat",
    ("ivf", False): "vs_ivf",
    ("ivf", True): "vs_ivf_stream",
    ("graph", False): "vs_graph",
    ("graph", True): "vs_graph_stream",
}


def strategy_info(name: str) -> StrategyInfo:
    if name not in TABLE2:
        raise ParameterError(f"unknown strategy {name!r}; one of {STRATEGIES}")
    return TABLE2[name]


@dataclass
class RealizedPlan:
    plan: PlanSpec                   # devices assigned, transfer nodes inserted
    strategy: str
    fallback_nodes: list             # vs nodes forced back to host by the top-k cap
    stream_nodes: list               # vs nodes reading host embeddings at runtime
    resident: list                   # artifacts pre-resident on the device

    @property
    def host_fallback(self) -> bool:
        return bool(self.fallback_nodes)


def _index_artifacts(name: str, catalog: IndexCatalog) -> dict:
    """Owning and structure artifact descriptors for one catalog index."""
    owning = catalog.get(name, "owning")
    if hasattr(owning, "nlist"):
        return {
            "owning": Artifact(f"{name}:owning", IVF_OWNING, owning.nbytes(),
                               nlist=owning.nlist),
            "structure": Artifact(f"{name}:structure", IVF_STRUCTURE,
                                  owning.structure_nbytes(), nlist=owning.nlist),
        }
    return {
        "owning": Artifact(f"{name}:owning", GRAPH_OWNING, owning.nbytes()),
        "structure": Artifact(f"{name}:structure", GRAPH_STRUCTURE,
                              owning.structure_nbytes()),
    }


def realize(plan: PlanSpec, strategy: str, profile: HardwareProfile,
            catalog: IndexCatalog | None = None,
            dataset: Dataset | None = None) -> RealizedPlan:
    """Assign devices and insert transfer nodes per the strategy matrix."""
    info = strategy_info(strategy)
    if info.emb_transfer == "stream" and not profile.coherent_host_reads:
        raise CapabilityError(
            f"strategy {strategy!r} streams embeddings from host memory at "
            f"runtime, which requires coherent host reads; profile "
            f"{profile.name!r} does not support them")
    if info.layout == "non_owning":
        for vs in plan.vs_nodes():
            if vs.params["mode"] == "enn":
                raise ParameterError(
                    f"strategy {strategy!r} needs a non-owning index; the plan's "
                    "exhaustive search has none")

    out_nodes: list = []
    location: dict = {}
    fallbacks: list = []
    stream_nodes: list = []
    resident: list = []
    counter = 0

    def add_transfer(src_id: str, payload: str, category: str, direction: tuple) -> str:
        nonlocal counter
        counter += 1
        tid = f"t{counter}"
        out_nodes.append(PlanNode(
            tid, "transfer", [src_id], direction[1],
            {"payload": payload, "src": direction[0], "dst": direction[1],
             "category": category}))
        location[tid] = direction[1]
        return tid

    for node in plan.nodes:
        new = node.clone()
        if node.op == "scan":
            new.device = info.rel_start
            location[node.node_id] = info.rel_start
            out_nodes.append(new)
            continue
        if node.op == "query_vectors":
            new.device = info.vs_device
            location[node.node_id] = info.vs_device
            out_nodes.append(new)
            continue

        if node.op == "vector_search":
            device = info.vs_device
            if device == DEVICE and int(node.params["k_prime"]) > profile.gpu_topk_cap:
                device = HOST
                fallbacks.append(node.node_id)
            streaming = (info.emb_transfer == "stream" and device == DEVICE
                         and node.params["mode"] != "enn")
            if streaming:
                stream_nodes.append(node.node_id)
            new.device = device
            new.params["layout"] = info.layout if node.params["mode"] != "enn" else "owning"
            new.params["stream"] = streaming

            query_src, data_src = node.inputs
            new_inputs = []
            # query side: ordinary intermediate crossing
            if location[query_src] != device:
                tid = add_transfer(query_src, "edge", DATA_TRANSFER,
                                   (location[query_src], device))
                new_inputs.append(tid)
            else:
                new_inputs.append(query_src)
            # data side: embeddings travel with the index (owning), stream at
            # runtime (non-owning), or copy as data (exhaustive); scalar
            # columns always copy when the search runs on the other tier
            dsrc = data_src
            if location[data_src] != device:
                if node.params["mode"] == "enn":
                    tid = add_transfer(dsrc, "edge", DATA_TRANSFER,
                                       (location[data_src], device))
                else:
                    tid = add_transfer(dsrc, "edge_scalar", DATA_TRANSFER,
                                       (location[data_src], device))
                new_inputs.append(tid)
            else:
                new_inputs.append(dsrc)
            if node.params["mode"] != "enn" and device == DEVICE:
                idx_name = node.params["index"]
                if info.idx_transfer == "copy" and node.node_id not in fallbacks:
                    payload = f"index:{idx_name}:{info.layout}"
                    new_inputs[-1] = add_transfer(
                        new_inputs[-1], payload, INDEX_TRANSFER, (HOST, DEVICE))
            new.inputs = new_inputs
            location[node.node_id] = device
            out_nodes.append(new)
            continue

        # relational operators (vs_postfilter included)
        device = info.rel_device
        new.device = device
        new_inputs = []
        for src in node.inputs:
            if location[src] != device:
                tid = add_transfer(src, "edge", DATA_TRANSFER, (location[src], device))
                new_inputs.append(tid)
            else:
                new_inputs.append(src)
        new.inputs = new_inputs
        location[node.node_id] = device
        out_nodes.append(new)

    realized = PlanSpec(plan.query, out_nodes)

    if catalog is not None:
        seen = set()
        for node in plan.vs_nodes():
            if node.params["mode"] == "enn":
                continue
            name = node.params["index"]
            if name in seen:
                continue
            seen.add(name)
            arts = _index_artifacts(name, catalog)
            if info.idx_start == DEVICE:
                resident.append(arts["structure" if info.layout == "non_owning" else "owning"])
    if info.rel_start == DEVICE and dataset is not None:
        from .executor import _column_bytes

        for tname, table in dataset.tables.items():
            scalar_b, emb_b = _column_bytes(table)
            resident.append(Artifact(f"table:{tname}", "table", scalar_b,
                                     ncols=len(table.schema.names)))
            if emb_b:
                resident.append(Artifact(f"emb:{tname}", EMBEDDING_COLUMN, emb_b))

    budget = MemoryBudget(profile.device_capacity)
    for art in resident:
        budget.place(art)

    return RealizedPlan(realized, strategy, fallbacks, stream_nodes, resident)


def cost_run(base: BaseRun, realized: RealizedPlan, profile: HardwareProfile,
             catalog: IndexCatalog | None = None,
             state: ResidencyState | None = None) -> tuple:
    """Price a measured base run under a realized placement.

    Returns (RunReport, events). Compute seconds come from the base run;
    device-placed nodes are divided by the profile's class speedup inside
    account_run. Transfers and streamed reads are simulated.
    """
    state = state or ResidencyState()
    events: list = []
    measured = 0.0
    for node in realized.plan.nodes:
        if node.op == "transfer":
            events.extend(_transfer_events(node, base, realized.plan, profile,
                                           catalog, state))
            continue
        prof = base.profiles[node.node_id]
        measured += prof.seconds
        if node.op in ("scan", "query_vectors"):
            continue
        if node.op == "vector_search":
            streaming = bool(node.params.get("stream"))
            cls = _VS_CLASS[(node.params["mode"], streaming)]
            events.append(TraceEvent(node.node_id, VS, node.device, prof.seconds,
                                     op_class=cls))
            if streaming and prof.vs_stats is not None:
                emb_bytes = prof.vs_stats.visited_rows * _index_dim(
                    catalog, node.params["index"]) * 4
                events.append(TraceEvent(node.node_id, STREAM, node.device,
                                         streamed_read_cost(emb_bytes, profile),
                                         nbytes=emb_bytes))
        else:
            events.append(TraceEvent(node.node_id, REL, node.device, prof.seconds,
                                     op_class="rel"))
    residual = max(0.0, base.wall_seconds - measured)
    events.append(TraceEvent("orchestration", RESIDUAL, HOST, residual))
    report = account_run(events, profile)
    report.query = base.plan.query
    vs_modes = {n.params["mode"] for n in base.plan.vs_nodes()}
    report.vs_mode = vs_modes.pop() if len(vs_modes) == 1 else "+".join(sorted(vs_modes))
    report.strategy = realized.strategy
    report.profile = profile.name
    report.host_fallback = realized.host_fallback
    report.shortfall = base.total_shortfall
    return report, events


def _index_dim(catalog, name) -> int:
    return catalog.get(name, "owning").dim


def _transfer_events(node: PlanNode, base: BaseRun, realized: PlanSpec,
                     profile: HardwareProfile, catalog,
                     state: ResidencyState) -> list:
    payload = node.params["payload"]
    src, dst = node.params["src"], node.params["dst"]
    category = node.params["category"]
    producer = _resolve_producer(node, base, realized)
    events = []
    if payload.startswith("index:"):
        name, layout = payload[len("index:"):].rsplit(":", 1)
        arts = _index_artifacts(name, catalog)
        art = arts["owning" if layout == "owning" else "structure"]
        rep = transfer_cost(art, src, dst, profile, state)
        events.append(TraceEvent(node.node_id, INDEX_TRANSFER, dst, rep.t_total,
                                 nbytes=rep.nbytes, n_calls=rep.n_calls))
        return events
    prof = base.profiles[producer]
    scalar_b, emb_b = prof.out_scalar_bytes, prof.out_embedding_bytes
    if scalar_b:
        art = Artifact(f"{node.node_id}:scalar", "table", scalar_b,
                       ncols=prof.out_ncols)
        rep = transfer_cost(art, src, dst, profile, state)
        events.append(TraceEvent(node.node_id, category, dst, rep.t_total,
                                 nbytes=rep.nbytes, n_calls=rep.n_calls))
    if emb_b and payload != "edge_scalar":
        art = Artifact(f"{node.node_id}:emb", EMBEDDING_COLUMN, emb_b)
        rep = transfer_cost(art, src, dst, profile, state)
        events.append(TraceEvent(node.node_id, category, dst, rep.t_total,
                                 nbytes=rep.nbytes, n_calls=rep.n_calls))
    return events


def _resolve_producer(node: PlanNode, base: BaseRun, realized: PlanSpec) -> str:
    src = node.inputs[0]
    while src not in base.profiles:
        src = realized.node(src).inputs[0]
    return src


def estimate_cost(base: BaseRun, strategy: str, profile: HardwareProfile,
                  catalog: IndexCatalog | None = None,
                  dataset: Dataset | None = None) -> RunReport:
    """Simulated run report for one strategy over a shared base run."""
    realized = realize(base.plan, strategy, profile, catalog, dataset)
    report, _ = cost_run(base, realized, profile, catalog)
    return report


# --- decision heuristic -------------------------------------------------------


@dataclass(frozen=True)
class StrategyDecision:
    chosen: str
    rationale: str
    alternative: str | None
    inputs: dict


def choose_strategy(budget: MemoryBudget, sizes: dict, index_kind: str,
                    batch: int, profile: HardwareProfile) -> StrategyDecision:
    """Pick a strategy from memory fit, index kind, and batch size.

    Decision table: everything fits -> gpu. Only the index structure fits ->
    gpu_i for IVF, hybrid for graph. Nothing fits -> hybrid, with copy_i as
    the flagged alternative for IVF at large batches.
    """
    if index_kind not in ("ivf", "graph"):
        raise ParameterError(f"index kind must be ivf or graph, got {index_kind!r}")
    total = sizes["relational"] + sizes["embeddings"] + sizes["index_structure"]
    fits_all = total <= budget.device_capacity
    fits_index = sizes["index_structure"] <= budget.device_capacity
    inputs = {"fits_all": fits_all, "fits_index": fits_index,
              "index_kind": index_kind, "batch": batch,
              "large_batch_threshold": profile.large_batch_threshold}
    if fits_all:
        return StrategyDecision("gpu", "fits_all: all data and indices fit on the device",
                                None, inputs)
    if fits_index:
        if index_kind == "ivf":
            return StrategyDecision("gpu_i", "only_index_fits: ivf index kept device-resident",
                                    None, inputs)
        return StrategyDecision("hybrid", "only_index_fits: graph search stays on the host",
                                None, inputs)
    alternative = None
    if index_kind == "ivf" and batch >= profile.large_batch_threshold:
        alternative = "copy_i"
    return StrategyDecision("hybrid", "nothing_fits: relational work moves, search stays host",
                            alternative, inputs)


# --- batch-size crossover sweep ------------------------------------------------


@dataclass
class SweepPoint:
    index_kind: str
    batch: int
    strategy: str
    seconds: float


def _vs_work_macs(index, stats_visited: int, batch: int) -> float:
    if hasattr(index, "nlist"):
        return (stats_visited + batch * index.nlist) * index.dim
    return stats_visited * index.dim


def crossover_sweep(dataset: Dataset, catalog: IndexCatalog, batches: list,
                    profile: HardwareProfile, nprobe: int = 32, ef: int = 128,
                    seed: int = 11) -> list:
    """Modeled search-operator time per (index kind, batch, strategy).

    Search work is measured in distance evaluations from a real host run at
    each batch size, then priced with the profile's modeled rates, so the
    sweep is machine-independent. Strategies covered: cpu, gpu, copy_i,
    copy_di, and the theoretical single-contiguous-copy IVF variant.
    """
    points: list = []
    rate = profile.vs_host_mac_rate
    for kind, name in (("ivf", "ivf:reviews"), ("graph", "graph:reviews")):
        if name not in catalog:
            continue
        owning = catalog.get(name, "owning")
        non_owning = catalog.get(name, "non_owning")
        arts = _index_artifacts(name, catalog)
        t_own = transfer_cost(arts["owning"], HOST, DEVICE, profile,
                              ResidencyState()).t_total
        t_struct = transfer_cost(arts["structure"], HOST, DEVICE, profile,
                                 ResidencyState()).t_total
        contiguous = Artifact(f"{name}:contig", EMBEDDING_COLUMN, arts["owning"].nbytes)
        t_theory = transfer_cost(contiguous, HOST, DEVICE, profile,
                                 ResidencyState()).t_total
        for batch in batches:
            queries = make_query_vectors(dataset, "review", batch, seed)
            params = SearchParams(k=min(100, owning.count),
                                  k_prime=min(100, owning.count),
                                  nprobe=min(nprobe, getattr(owning, "nlist", nprobe)),
                                  ef=max(ef, min(100, owning.count)))
            nt = non_owning.search(queries, params)
            work = _vs_work_macs(owning, nt.visited_rows, batch)
            stream_bytes = nt.visited_rows * owning.dim * 4
            host_s = work / rate
            resident = profile.speedup(f"vs_{kind}")
            streamed = profile.speedup(f"vs_{kind}_stream")
            stream_s = streamed_read_cost(stream_bytes, profile) \
                if profile.coherent_host_reads else 0.0
            points.append(SweepPoint(kind, batch, "cpu", host_s))
            points.append(SweepPoint(kind, batch, "gpu", work / (rate * resident)))
            points.append(SweepPoint(kind, batch, "copy_i",
                                     t_struct + work / (rate * streamed) + stream_s))
            points.append(SweepPoint(kind, batch, "copy_di",
                                     t_own + work / (rate * resident)))
            if kind == "ivf":
                points.append(SweepPoint(kind, batch, "theoretical",
                                         t_theory + work / (rate * resident)))
    return points

