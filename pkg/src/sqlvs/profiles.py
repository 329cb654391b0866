"""Built-in hardware profiles and the profile file format.

The shipped profiles are calibrated against reference per-index transfer
measurements from an H100 PCIe 5.0 box and a GH200 NVLink-C2C box, plus a
unified-memory profile where the host/device split disappears:

  pcie5       24 / 55 GB/s pageable/pinned. per_call_setup from the owning
              IVF1024 row: (6510 - 452) ms over 5121 calls. Graph transform
              from the cached-vs-uncached graph totals: 853 - 425 ms.
  nvlink-c2c  417 GB/s (same pinned and pageable). per_call_setup
              (1266 - 46.4) ms / 5121 calls; structure_call_setup from the
              host-resident IVF1024 structure row: (4 ms - htod) / 3073
              calls; graph transform 112 - 27.4 ms. Supports coherent host
              reads (streamed embeddings) at 400 GB/s.
  unified     single memory pool; every transfer is free and the placement
              question disappears. cpu and gpu strategies differ only by
              the compute speedups.

Artifact sizes are byte counts (binary units: 1 GB = 2^30 B); bandwidths
are decimal GB/s. Device speedups and the host VS rate are model constants,
not hardware claims; edit them freely in a profile file.

Profile files are plain text, one `key = value` per line, `#` comments.
Keys match `profile_to_text` output; unknown keys are rejected.
"""

from __future__ import annotations

import io

from .errors import ParameterError
from .placement import HardwareProfile

GIB = 2**30
GB = 10**9


_DEFAULT_SPEEDUPS = {
    "rel": 8.0,
    "vs_flat": 12.0,
    "vs_ivf": 12.0,
    "vs_ivf_stream": 10.0,
    "vs_graph": 5.0,
    "vs_graph_stream": 0.8,
}

_UNIFIED_SPEEDUPS = {
    "rel": 4.0,
    "vs_flat": 6.0,
    "vs_ivf": 5.0,
    "vs_ivf_stream": 5.0,
    "vs_graph": 2.0,
    "vs_graph_stream": 2.0,
}

PCIE5 = HardwareProfile(
    name="pcie5",
    bw_pageable=24 * GB,
    bw_pinned=55 * GB,
    per_call_setup=(6.510 - 0.452) / 5121,       # s/call, owning IVF1024 gap
    structure_call_setup=1.2983e-6,              # s/call, borrowed from nvlink (unused: no coherent reads)
    transform_cost={"graph": 0.853 - 0.425, "ivf": 0.0},
    unified=False,
    coherent_host_reads=False,
    ats_host_read_bw=0.0,
    device_capacity=94 * GIB,
    speedups=dict(_DEFAULT_SPEEDUPS),
)

NVLINK_C2C = HardwareProfile(
    name="nvlink-c2c",
    bw_pageable=417 * GB,
    bw_pinned=417 * GB,
    per_call_setup=(1.266 - 0.0464) / 5121,      # s/call
    structure_call_setup=(0.004 - (0.004 * GIB) / (417 * GB)) / 3073,
    transform_cost={"graph": 0.112 - 0.0274, "ivf": 0.0},
    unified=False,
    coherent_host_reads=True,
    ats_host_read_bw=400 * GB,
    device_capacity=96 * GIB,
    speedups=dict(_DEFAULT_SPEEDUPS),
)

UNIFIED = HardwareProfile(
    name="unified",
    bw_pageable=273 * GB,
    bw_pinned=273 * GB,
    per_call_setup=0.0,
    structure_call_setup=0.0,
    transform_cost={"graph": 0.0, "ivf": 0.0},
    unified=True,
    coherent_host_reads=True,
    ats_host_read_bw=273 * GB,
    device_capacity=128 * GIB,
    speedups=dict(_UNIFIED_SPEEDUPS),
)

BUILTIN_PROFILES = {p.name: p for p in (PCIE5, NVLINK_C2C, UNIFIED)}


def get_profile(name: str) -> HardwareProfile:
    if name not in BUILTIN_PROFILES:
        raise ParameterError(
            f"unknown profile {name!r}; built-ins: {sorted(BUILTIN_PROFILES)}")
    return BUILTIN_PROFILES[name]


_SCALAR_KEYS = {
    "bw_pageable_gbps": ("bw_pageable", GB),
    "bw_pinned_gbps": ("bw_pinned", GB),
    "per_call_setup_ms": ("per_call_setup", 1e-3),
    "structure_call_setup_us": ("structure_call_setup", 1e-6),
    "ats_host_read_bw_gbps": ("ats_host_read_bw", GB),
    "device_capacity_gib": ("device_capacity", GIB),
    "vs_host_mac_rate": ("vs_host_mac_rate", 1),
}

_INT_KEYS = {"gpu_topk_cap", "large_batch_threshold"}
_BOOL_KEYS = {"unified", "coherent_host_reads"}


def parse_profile(text: str) -> HardwareProfile:
    values: dict = {"transform_cost": {}, "speedups": {}}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParameterError(f"profile line {lineno}: expected key = value")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key == "name":
            values["name"] = val
        elif key in _SCALAR_KEYS:
            field, scale = _SCALAR_KEYS[key]
            values[field] = float(val) * scale
        elif key in _INT_KEYS:
            values[key] = int(val)
        elif key in _BOOL_KEYS:
            if val.lower() not in ("true", "false"):
                raise ParameterError(f"profile line {lineno}: {key} must be true/false")
            values[key] = val.lower() == "true"
        elif key.startswith("transform_") and key.endswith("_ms"):
            values["transform_cost"][key[len("transform_"):-len("_ms")]] = float(val) * 1e-3
        elif key.startswith("speedup_"):
            values["speedups"][key[len("speedup_"):]] = float(val)
        else:
            raise ParameterError(f"profile line {lineno}: unknown key {key!r}")
    if "name" not in values:
        raise ParameterError("profile file must set name")
    if "device_capacity" in values:
        values["device_capacity"] = int(values["device_capacity"])
    return HardwareProfile(**values)


def load_profile(path) -> HardwareProfile:
    with open(path, "r", encoding="utf-8") as f:
        return parse_profile(f.read())


def profile_to_text(p: HardwareProfile) -> str:
    buf = io.StringIO()
    buf.write(f"name = {p.name}\n")
    buf.write(f"bw_pageable_gbps = {p.bw_pageable / GB:.6g}\n")
    buf.write(f"bw_pinned_gbps = {p.bw_pinned / GB:.6g}\n")
    buf.write(f"per_call_setup_ms = {p.per_call_setup * 1e3:.9g}\n")
    buf.write(f"structure_call_setup_us = {p.structure_call_setup * 1e6:.9g}\n")
    for kind, cost in sorted(p.transform_cost.items()):
        buf.write(f"transform_{kind}_ms = {cost * 1e3:.9g}\n")
    buf.write(f"unified = {'true' if p.unified else 'false'}\n")
    buf.write(f"coherent_host_reads = {'true' if p.coherent_host_reads else 'false'}\n")
    buf.write(f"ats_host_read_bw_gbps = {p.ats_host_read_bw / GB:.6g}\n")
    buf.write(f"device_capacity_gib = {p.device_capacity / GIB:.6g}\n")
    buf.write(f"gpu_topk_cap = {p.gpu_topk_cap}\n")
    buf.write(f"large_batch_threshold = {p.large_batch_threshold}\n")
    for cls, s in sorted(p.speedups.items()):
        buf.write(f"speedup_{cls} = {s:.6g}\n")
    buf.write(f"vs_host_mac_rate = {p.vs_host_mac_rate:.6g}\n")
    return buf.getvalue()
