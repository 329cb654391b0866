"""Run records: the per-run breakdown, delimited emission, and summaries.

A run record has five time components (relational operators, vector search,
data movement, index movement, residual) plus counters and quality numbers.
Records serialize to pipe-delimited text with a header row and a stable
column order; re-emitting the same runs is byte-identical.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Optional

from .errors import SqlVsError

COLUMNS = [
    "query", "vs_mode", "strategy", "profile", "sf", "seed", "k", "k_prime",
    "relational_ops_s", "vector_search_s", "data_movement_s",
    "index_movement_s", "residual_s", "total_s",
    "copy_calls", "streamed_bytes", "host_fallback", "shortfall",
    "recall", "rel_err",
]


@dataclass
class RunReport:
    query: str = ""
    vs_mode: str = ""
    strategy: str = ""
    profile: str = ""
    sf: float = 0.0
    seed: int = 0
    k: int = 0
    k_prime: int = 0
    relational_ops: float = 0.0
    vector_search: float = 0.0
    data_movement: float = 0.0
    index_movement: float = 0.0
    residual: float = 0.0
    copy_calls: int = 0
    streamed_bytes: int = 0
    host_fallback: bool = False
    shortfall: int = 0
    recall: Optional[float] = None
    rel_err: Optional[float] = None

    @property
    def total(self) -> float:
        return (self.relational_ops + self.vector_search + self.data_movement
                + self.index_movement + self.residual)

    def row(self) -> list:
        return [
            self.query, self.vs_mode, self.strategy, self.profile,
            _fmt(self.sf), str(self.seed), str(self.k), str(self.k_prime),
            _fmt(self.relational_ops), _fmt(self.vector_search),
            _fmt(self.data_movement), _fmt(self.index_movement),
            _fmt(self.residual), _fmt(self.total),
            str(self.copy_calls), str(self.streamed_bytes),
            "1" if self.host_fallback else "0", str(self.shortfall),
            _fmt(self.recall) if self.recall is not None else "",
            _fmt(self.rel_err) if self.rel_err is not None else "",
        ]


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def emit_report(runs: list, path) -> str:
    """Write one pipe-delimited record per run; returns the path written."""
    text = records_to_text(runs)
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)
    return str(path)


def records_to_text(runs: list) -> str:
    buf = io.StringIO()
    buf.write("|".join(COLUMNS) + "\n")
    for run in runs:
        buf.write("|".join(run.row()) + "\n")
    return buf.getvalue()


def load_report(path) -> list:
    runs = []
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        if header.split("|") != COLUMNS:
            raise SqlVsError(f"unexpected report header in {path}")
        for line in f:
            parts = line.rstrip("\n").split("|")
            if len(parts) != len(COLUMNS):
                raise SqlVsError(f"malformed report row in {path}")
            rec = dict(zip(COLUMNS, parts))
            runs.append(RunReport(
                query=rec["query"], vs_mode=rec["vs_mode"],
                strategy=rec["strategy"], profile=rec["profile"],
                sf=float(rec["sf"]), seed=int(rec["seed"]),
                k=int(rec["k"]), k_prime=int(rec["k_prime"]),
                relational_ops=float(rec["relational_ops_s"]),
                vector_search=float(rec["vector_search_s"]),
                data_movement=float(rec["data_movement_s"]),
                index_movement=float(rec["index_movement_s"]),
                residual=float(rec["residual_s"]),
                copy_calls=int(rec["copy_calls"]),
                streamed_bytes=int(rec["streamed_bytes"]),
                host_fallback=rec["host_fallback"] == "1",
                shortfall=int(rec["shortfall"]),
                recall=float(rec["recall"]) if rec["recall"] else None,
                rel_err=float(rec["rel_err"]) if rec["rel_err"] else None,
            ))
    return runs


def summarize(runs: list) -> str:
    """Human-readable table: one line per run, ms-scale components."""
    headers = ["query", "vs", "strategy", "profile", "rel_ms", "vs_ms",
               "data_mv_ms", "idx_mv_ms", "total_ms", "recall", "rel_err", "flags"]
    rows = []
    for r in runs:
        flags = []
        if r.host_fallback:
            flags.append("fallback")
        if r.shortfall:
            flags.append(f"shortfall={r.shortfall}")
        rows.append([
            r.query, r.vs_mode, r.strategy, r.profile,
            f"{r.relational_ops * 1e3:.2f}", f"{r.vector_search * 1e3:.2f}",
            f"{r.data_movement * 1e3:.2f}", f"{r.index_movement * 1e3:.2f}",
            f"{r.total * 1e3:.2f}",
            "" if r.recall is None else f"{r.recall:.4f}",
            "" if r.rel_err is None else f"{r.rel_err:.5f}",
            ",".join(flags),
        ])
    widths = [max(len(h), *(len(row[i]) for row in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines) + "\n"
