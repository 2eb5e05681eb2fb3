"""Bandwidth metrics and experiment reports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from rrcs.schemes import SchemeConfig, TrafficLedger
    from rrcs.server import Server
    from rrcs.traces import TraceStats

CSV_FIELDS = (
    "scheme_key", "scheme", "lam", "d", "det_pad_l", "redundancy_strategy", "seed", "chunk_size_bytes",
    "n_uploads", "total_file_bytes", "source_bytes", "total_data_bytes", "metadata_bytes", "redundant_chunks",
    "normalized_bandwidth_overhead", "re_ratio", "stored_bytes",
)


@dataclass(frozen=True)
class Metrics:
    normalized_bandwidth_overhead: float
    re_ratio: float | None
    overhead_source: float
    overhead_target: float


def compute_metrics(data_bytes: int, stats: "TraceStats") -> Metrics:
    """Overhead relative to the logical trace size, and the redundancy-elimination ratio.

    The RE ratio places ``data_bytes`` between target-side dedup (everything
    sent, 0) and perfect source-side dedup (1). It is ``None`` when the trace
    has no redundancy to eliminate.
    """
    b_target = stats.total_bytes
    b_source = stats.source_dedup_bytes
    if b_target == 0:
        return Metrics(0.0, None, 0.0, 0.0)
    overhead = data_bytes / b_target
    re_ratio = (b_target - data_bytes) / (b_target - b_source) if b_target > b_source else None
    return Metrics(overhead, re_ratio, b_source / b_target, 1.0)


def check_identity(m: Metrics, tol: float = 1e-9) -> bool:
    """overhead = overhead_source + (1 - re) * (overhead_target - overhead_source)."""
    if m.re_ratio is None:
        return True
    rebuilt = m.overhead_source + (1 - m.re_ratio) * (m.overhead_target - m.overhead_source)
    return math.isclose(rebuilt, m.normalized_bandwidth_overhead, rel_tol=tol, abs_tol=tol)


@dataclass
class ExperimentReport:
    config: dict
    trace: dict
    total_data_bytes: int
    total_data_chunks: int
    redundant_chunks: int
    metadata_bytes: int
    normalized_bandwidth_overhead: float
    re_ratio: float | None
    stored_bytes: int
    state_counts: dict[str, int]
    n_uploads: int
    runtime_s: float
    seed: int
    per_upload_data_bytes: list[int] = field(default_factory=list, repr=False)

    def to_dict(self, with_uploads: bool = False) -> dict:
        d = asdict(self)
        if not with_uploads:
            d.pop("per_upload_data_bytes")
        return d

    def csv_row(self) -> dict:
        from rrcs.schemes import SchemeConfig

        cfg = self.config
        return {
            "scheme_key": SchemeConfig(**cfg).key,
            **{k: cfg[k] for k in ("scheme", "lam", "d", "det_pad_l", "redundancy_strategy", "seed",
                                   "chunk_size_bytes")},
            "n_uploads": self.n_uploads,
            "total_file_bytes": self.trace["total_bytes"],
            "source_bytes": self.trace["source_dedup_bytes"],
            "total_data_bytes": self.total_data_bytes,
            "metadata_bytes": self.metadata_bytes,
            "redundant_chunks": self.redundant_chunks,
            "normalized_bandwidth_overhead": f"{self.normalized_bandwidth_overhead:.6f}",
            "re_ratio": "n/a" if self.re_ratio is None else f"{self.re_ratio:.6f}",
            "stored_bytes": self.stored_bytes,
        }


def build_report(config: "SchemeConfig", ledger: "TrafficLedger", stats: "TraceStats", runtime: float,
                 server: "Server") -> ExperimentReport:
    m = compute_metrics(ledger.data_bytes, stats)
    if not check_identity(m):
        raise AssertionError("overhead / RE-ratio identity violated")
    return ExperimentReport(
        config=config.to_dict(),
        trace=stats.to_dict(),
        total_data_bytes=ledger.data_bytes,
        total_data_chunks=ledger.data_chunks,
        redundant_chunks=ledger.redundant_chunks,
        metadata_bytes=ledger.metadata_bytes,
        normalized_bandwidth_overhead=m.normalized_bandwidth_overhead,
        re_ratio=m.re_ratio,
        stored_bytes=server.stored_bytes(),
        state_counts=ledger.state_counts(),
        n_uploads=len(ledger),
        runtime_s=runtime,
        seed=config.seed,
        per_upload_data_bytes=[r.data_bytes for r in ledger],
    )
