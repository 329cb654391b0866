"""Logical host/device placement and the calibrated interconnect simulator.

Simulated time is accounting only: computation always runs on the host, and
a device placement changes cost reports and capability checks, never
results. A transfer decomposes into three parts:

  t_htod       payload bytes / effective bandwidth (pinned or pageable)
  t_setup      copy calls x a per-call rate
  t_transform  host-index to device-index conversion, unless cached

Copy-call counts follow the measured per-kind closed forms: one call for a
contiguous embedding column, 5*nlist+1 for a data-owning IVF, 3*nlist+1 for
a non-owning IVF structure, two for an owning graph, one for a bare graph
structure. Payload-bearing calls (per-partition embedding copies) cost
orders of magnitude more per call than bare structure copies, so the two
rates are separate profile parameters, each calibrated from measurement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .errors import CapabilityError, ModelError, ParameterError, PlacementError

HOST = "host"
DEVICE = "device"

TABLE = "table"
EMBEDDING_COLUMN = "embedding_column"
IVF_OWNING = "ivf_owning"
IVF_STRUCTURE = "ivf_structure"
GRAPH_OWNING = "graph_owning"
GRAPH_STRUCTURE = "graph_structure"

_ARTIFACT_KINDS = (TABLE, EMBEDDING_COLUMN, IVF_OWNING, IVF_STRUCTURE,
                   GRAPH_OWNING, GRAPH_STRUCTURE)

_STRUCTURE_KINDS = (IVF_STRUCTURE, GRAPH_STRUCTURE)


@dataclass(frozen=True)
class HardwareProfile:
    """Interconnect and compute-model parameters for one machine shape."""

    name: str
    bw_pageable: float                    # bytes/s
    bw_pinned: float
    per_call_setup: float = 0.0           # seconds per payload-bearing copy call
    structure_call_setup: float = 0.0     # seconds per structure-only copy call
    transform_cost: dict = field(default_factory=dict)  # index kind -> seconds
    unified: bool = False
    coherent_host_reads: bool = False
    ats_host_read_bw: float = 0.0         # bytes/s for streamed host reads
    device_capacity: int = 96 * 2**30     # bytes
    gpu_topk_cap: int = 2048
    speedups: dict = field(default_factory=dict)   # op class -> device speedup
    vs_host_mac_rate: float = 5e9   # modeled host MAC/s for VS compute
    large_batch_threshold: int = 1000

    def __post_init__(self):
        if not (self.bw_pinned >= self.bw_pageable > 0):
            raise ParameterError("profile needs bw_pinned >= bw_pageable > 0")
        if self.per_call_setup < 0 or self.structure_call_setup < 0:
            raise ParameterError("per-call setup must be >= 0")

    def speedup(self, op_class: str) -> float:
        return float(self.speedups.get(op_class, 1.0))


@dataclass(frozen=True)
class Artifact:
    """A transferable object: sized, kinded, and identified."""

    art_id: str
    kind: str
    nbytes: int
    nlist: int = 0
    ncols: int = 1

    def __post_init__(self):
        if self.kind not in _ARTIFACT_KINDS:
            raise ModelError(f"unknown artifact kind {self.kind!r}")
        if self.kind in (IVF_OWNING, IVF_STRUCTURE) and self.nlist < 1:
            raise ModelError("IVF artifacts need nlist")


@dataclass
class ResidencyEntry:
    location: str = HOST
    pinned: bool = False
    cached_transform: bool = False
    host_resident: bool = False  # streamed reads enabled for this index


class ResidencyState:
    """Residency and optimization flags per artifact id."""

    def __init__(self):
        self._entries: dict[str, ResidencyEntry] = {}

    def entry(self, artifact: Artifact) -> ResidencyEntry:
        return self._entries.setdefault(artifact.art_id, ResidencyEntry())

    def set_location(self, artifact: Artifact, location: str) -> None:
        if location not in (HOST, DEVICE):
            raise ModelError(f"unknown device kind {location!r}")
        self.entry(artifact).location = location

    def location(self, artifact: Artifact) -> str:
        return self.entry(artifact).location


def copy_call_count(artifact: Artifact) -> int:
    """Measured closed forms per artifact kind."""
    if artifact.kind == EMBEDDING_COLUMN:
        return 1
    if artifact.kind == TABLE:
        return max(1, artifact.ncols)
    if artifact.kind == IVF_OWNING:
        return 5 * artifact.nlist + 1
    if artifact.kind == IVF_STRUCTURE:
        return 3 * artifact.nlist + 1
    if artifact.kind == GRAPH_OWNING:
        return 2
    if artifact.kind == GRAPH_STRUCTURE:
        return 1
    raise ModelError(f"unknown artifact kind {artifact.kind!r}")  # pragma: no cover


@dataclass(frozen=True)
class TransferReport:
    n_calls: int
    nbytes: int
    t_htod: float
    t_setup: float
    t_transform: float

    @property
    def t_total(self) -> float:
        return self.t_htod + self.t_setup + self.t_transform


_ZERO = TransferReport(0, 0, 0.0, 0.0, 0.0)


def transfer_cost(
    artifact: Artifact,
    src: str,
    dst: str,
    profile: HardwareProfile,
    state: Optional[ResidencyState] = None,
) -> TransferReport:
    """Simulated cost of moving one artifact between tiers."""
    for side in (src, dst):
        if side not in (HOST, DEVICE):
            raise ModelError(f"unknown device kind {side!r}")
    if profile.unified or src == dst:
        return _ZERO
    entry = state.entry(artifact) if state is not None else ResidencyEntry()
    bw = profile.bw_pinned if entry.pinned else profile.bw_pageable
    n_calls = copy_call_count(artifact)
    t_htod = artifact.nbytes / bw
    rate = profile.structure_call_setup if artifact.kind in (TABLE, *_STRUCTURE_KINDS) \
        else profile.per_call_setup
    t_setup = n_calls * rate
    t_transform = 0.0
    if dst == DEVICE and not entry.cached_transform:
        if artifact.kind == GRAPH_OWNING:
            t_transform = float(profile.transform_cost.get("graph", 0.0))
        elif artifact.kind == IVF_OWNING:
            t_transform = float(profile.transform_cost.get("ivf", 0.0))
    return TransferReport(n_calls, artifact.nbytes, t_htod, t_setup, t_transform)


def apply_pinning(state: ResidencyState, artifact: Artifact) -> ResidencyState:
    """Pin the host allocation; later transfers use the pinned bandwidth."""
    entry = state.entry(artifact)
    if entry.location != HOST:
        raise ParameterError("pinning applies to host-resident artifacts")
    entry.pinned = True
    return state


def apply_transform_cache(state: ResidencyState, artifact: Artifact) -> ResidencyState:
    """Cache the host-to-device index conversion; idempotent.

    Kinds without a conversion (flat embedding columns, tables, bare
    structures) are unaffected.
    """
    entry = state.entry(artifact)
    if entry.location != HOST:
        raise ParameterError("transform caching applies to host-resident indexes")
    if artifact.kind in (GRAPH_OWNING, IVF_OWNING):
        entry.cached_transform = True
    return state


def enable_host_residency(
    state: ResidencyState, artifact: Artifact, profile: HardwareProfile
) -> ResidencyState:
    """Let device-side search read the base embeddings from host memory.

    Only non-owning index structures qualify, and the profile must support
    coherent host reads.
    """
    if artifact.kind not in _STRUCTURE_KINDS:
        raise ParameterError("host residency applies to non-owning index structures")
    if not profile.coherent_host_reads:
        raise CapabilityError(
            f"profile {profile.name!r} does not support coherent host reads")
    entry = state.entry(artifact)
    entry.host_resident = True
    return state


def streamed_read_cost(visited_bytes: int, profile: HardwareProfile) -> float:
    """Seconds to stream `visited_bytes` of embeddings from host during search."""
    if profile.unified or visited_bytes <= 0:
        return 0.0
    if not profile.coherent_host_reads:
        raise CapabilityError(
            f"profile {profile.name!r} does not support coherent host reads")
    return visited_bytes / profile.ats_host_read_bw


class MemoryBudget:
    """Device-capacity accounting; over-capacity placements are rejected."""

    def __init__(self, device_capacity: int):
        self.device_capacity = int(device_capacity)
        self.usage: dict[str, int] = {}

    @property
    def used(self) -> int:
        return sum(self.usage.values())

    def place(self, artifact: Artifact) -> None:
        if artifact.art_id in self.usage:
            return
        if self.used + artifact.nbytes > self.device_capacity:
            raise PlacementError(
                f"placing {artifact.art_id} ({artifact.nbytes} B) exceeds device "
                f"capacity {self.device_capacity} B (used {self.used} B)")
        self.usage[artifact.art_id] = artifact.nbytes

    def release(self, artifact: Artifact) -> None:
        self.usage.pop(artifact.art_id, None)


# --- run accounting -------------------------------------------------------

REL = "rel"
VS = "vs"
DATA_TRANSFER = "data_transfer"
INDEX_TRANSFER = "index_transfer"
STREAM = "stream"
RESIDUAL = "residual"


@dataclass
class TraceEvent:
    """One accounted step of an executed plan."""

    node_id: str
    category: str          # rel | vs | data_transfer | index_transfer | stream | residual
    device: str = HOST
    seconds: float = 0.0   # measured host seconds (compute) or simulated (transfers)
    op_class: str = ""     # speedup class for compute events
    nbytes: int = 0
    n_calls: int = 0


def account_run(events: list, profile: HardwareProfile):
    """Fold a trace into the per-component breakdown.

    Compute events placed on the device are divided by the profile's class
    speedup; transfer and stream events carry simulated seconds already.
    Returns a `report.RunReport` with identity fields left blank.
    """
    from .report import RunReport

    rel = vs = data_mv = idx_mv = residual = 0.0
    calls = 0
    streamed = 0
    for ev in events:
        if ev.category in (REL, VS):
            secs = ev.seconds
            if ev.device == DEVICE:
                secs = secs / profile.speedup(ev.op_class or ev.category)
            if ev.category == REL:
                rel += secs
            else:
                vs += secs
        elif ev.category == DATA_TRANSFER:
            data_mv += ev.seconds
            calls += ev.n_calls
        elif ev.category == STREAM:
            data_mv += ev.seconds
            streamed += ev.nbytes
        elif ev.category == INDEX_TRANSFER:
            idx_mv += ev.seconds
            calls += ev.n_calls
        elif ev.category == RESIDUAL:
            residual += ev.seconds
        else:
            raise ModelError(f"unknown trace category {ev.category!r}")
    return RunReport(
        relational_ops=rel,
        vector_search=vs,
        data_movement=data_mv,
        index_movement=idx_mv,
        residual=residual,
        copy_calls=calls,
        streamed_bytes=streamed,
    )
