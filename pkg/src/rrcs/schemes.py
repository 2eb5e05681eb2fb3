"""Client-side upload strategies and the traffic ledger.

Every strategy talks to the server the same way: a duplicate query, then one
batch of packets. Only the choice of packets differs.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from rrcs.chunking import (
    DEFAULT_CHUNK_SIZE,
    DUPLICATE_PICK,
    NULL_PAD,
    REDUNDANCY_STRATEGIES,
    FileManifest,
    has_duplicate_candidates,
    make_redundant_chunk,
)
from rrcs.protocol import UploadPacket
from rrcs.server import SINGLE_USER, UPLOAD, Server, rts_decide

SOURCE = "source"
TARGET = "target"
RTS_FILE = "rts-file"
RTS_CHUNK = "rts-chunk"
DET_PAD = "det-pad"
RRCS = "rrcs"
SCHEMES = (SOURCE, TARGET, RTS_FILE, RTS_CHUNK, DET_PAD, RRCS)

STATE_SINGLE_USER_FULL = "single-user-full"
STATE_CROSS_USER_FULL = "cross-user-full"
STATE_PARTIAL = "partial"
STATE_NONE = "none"


def as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def ceil_mul(lam, n: int) -> int:
    """``ceil(lam * n)`` computed exactly, so 0.1 * 30 gives 3 and not 4."""
    return math.ceil(as_fraction(lam) * n)


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = RRCS
    lam: float = 1.0
    d: int = 20
    det_pad_l: int = 1
    redundancy_strategy: str = NULL_PAD
    seed: int = 0
    chunk_size_bytes: int = DEFAULT_CHUNK_SIZE
    rts_fixed_threshold: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {', '.join(SCHEMES)}")
        if not 0 < as_fraction(self.lam) <= 1:
            raise ValueError("lambda must lie in (0, 1]")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.det_pad_l < 1:
            raise ValueError("det_pad_l must be >= 1")
        if self.redundancy_strategy not in REDUNDANCY_STRATEGIES:
            raise ValueError(f"unknown redundancy strategy {self.redundancy_strategy!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def key(self) -> str:
        """Short label used to sort and name report rows."""
        if self.scheme == RRCS:
            return f"rrcs(lam={self.lam:g},{self.redundancy_strategy})"
        if self.scheme in (RTS_FILE, RTS_CHUNK):
            return f"{self.scheme}(d={self.d})"
        if self.scheme == DET_PAD:
            return f"det-pad(l={self.det_pad_l})"
        return self.scheme


def upload_rng(seed: int, user: int, file_id: int, seq: int) -> np.random.Generator:
    """Independent generator for one upload, derived from the experiment seed."""
    ss = np.random.SeedSequence(seed, spawn_key=(user, file_id, seq))
    return np.random.Generator(np.random.PCG64(ss))


# -- redundant-chunk planner ---------------------------------------------------

@dataclass(frozen=True, slots=True)
class RrcsPlan:
    n: int
    k: int
    lam_n: int
    h: tuple[int, int]
    r: int
    r_prime: int
    u: int
    direct_upload: bool = False

    @property
    def h_part(self) -> tuple[int, int]:
        return (0, self.lam_n)

    @property
    def h_full(self) -> tuple[int, int]:
        return (1, self.lam_n + 1)

    def h_values(self) -> range:
        return range(self.h[0], self.h[1] + 1)


def rrcs_h(n: int, k: int, lam) -> tuple[int, int]:
    lam_n = ceil_mul(lam, n)
    if k == 0:
        return (1, lam_n + 1)
    if k < n:
        return (0, lam_n)
    return (0, 0)


def rrcs_plan(n: int, k: int, lam, rng) -> RrcsPlan:
    """Draw the redundant-chunk count for a file with ``n`` chunks, ``k`` of them new.

    The count ``r`` is uniform on ``[1, ceil(lam*n)+1]`` for a full duplicate
    and on ``[0, ceil(lam*n)]`` for a partial one, then trimmed so no more than
    ``n`` chunks go on the wire. Single-chunk files are uploaded as is.
    """
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"invalid plan request n={n}, k={k}")
    if not 0 < as_fraction(lam) <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    lam_n = ceil_mul(lam, n)
    if n == 1:
        return RrcsPlan(n, k, lam_n, (0, 0), 0, 0, 1, direct_upload=True)
    lo, hi = rrcs_h(n, k, lam)
    r = int(rng.integers(lo, hi + 1))
    r_prime = n - k if r + k > n else r
    return RrcsPlan(n, k, lam_n, (lo, hi), r, r_prime, k + r_prime)


def upload_count_pmf(config: SchemeConfig, n: int, k: int, trim: bool = True) -> dict[int, Fraction]:
    """Exact distribution of data chunks sent for a cross-user upload with ``k`` new chunks.

    RTS schemes are modelled at first observation (no key has reached its
    threshold), where they send the whole file. ``trim=False`` drops the cap
    that keeps RRCS uploads within ``n`` chunks.
    """
    s = config.scheme
    if s == SOURCE:
        return {k: Fraction(1)}
    if s in (TARGET, RTS_FILE, RTS_CHUNK):
        return {n: Fraction(1)}
    if s == DET_PAD:
        return {max(k, config.det_pad_l): Fraction(1)}
    if n == 1:
        return {1: Fraction(1)}
    lo, hi = rrcs_h(n, k, config.lam)
    p = Fraction(1, hi - lo + 1)
    pmf: dict[int, Fraction] = {}
    for r in range(lo, hi + 1):
        u = k + (min(r, n - k) if trim else r)
        pmf[u] = pmf.get(u, 0) + p
    return pmf


# -- traffic ledger ----------------------------------------------------------

@dataclass(frozen=True, slots=True)
class UploadRecord:
    seq: int
    user: int
    file_id: int
    state: str
    n_chunks: int
    k: int
    logical_bytes: int
    data_bytes: int
    data_chunks: int
    redundant_chunks: int
    metadata_bytes: int


@dataclass
class TrafficLedger:
    """Append-only record of what each upload put on the wire."""

    records: list[UploadRecord] = field(default_factory=list)

    def append(self, record: UploadRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def data_bytes(self) -> int:
        return sum(r.data_bytes for r in self.records)

    @property
    def data_chunks(self) -> int:
        return sum(r.data_chunks for r in self.records)

    @property
    def redundant_chunks(self) -> int:
        return sum(r.redundant_chunks for r in self.records)

    @property
    def metadata_bytes(self) -> int:
        return sum(r.metadata_bytes for r in self.records)

    @property
    def logical_bytes(self) -> int:
        return sum(r.logical_bytes for r in self.records)

    def state_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for r in self.records:
            counts[r.state] = counts.get(r.state, 0) + 1
        return dict(sorted(counts.items()))


@dataclass(frozen=True, slots=True)
class UploadResult:
    u_chunks: int
    state: str
    data_bytes: int
    plan: RrcsPlan | None = None
    null_pad_fallback: bool = False


def _classify(report, n: int) -> str:
    if report.full_match == SINGLE_USER:
        return STATE_SINGLE_USER_FULL
    if report.k == 0:
        return STATE_CROSS_USER_FULL
    if report.k < n:
        return STATE_PARTIAL
    return STATE_NONE


def _new_chunk_packets(manifest: FileManifest, report) -> list[UploadPacket]:
    return [UploadPacket.for_chunk(c) for c, dup in zip(manifest.chunks, report.duplicates) if not dup]


def _redundant_packets(manifest: FileManifest, report, count: int, config: SchemeConfig, rng) -> tuple[list[UploadPacket], bool]:
    if count <= 0:
        return [], False
    positions = report.duplicate_positions() if config.redundancy_strategy == DUPLICATE_PICK else ()
    fallback = config.redundancy_strategy == DUPLICATE_PICK and not has_duplicate_candidates(
        manifest, config.chunk_size_bytes, positions)
    if fallback or config.redundancy_strategy == NULL_PAD:
        chunk = make_redundant_chunk(manifest, NULL_PAD, rng, config.chunk_size_bytes)
        return [UploadPacket.for_chunk(chunk, redundant=True)] * count, fallback
    packets = [
        UploadPacket.for_chunk(make_redundant_chunk(manifest, DUPLICATE_PICK, rng, config.chunk_size_bytes, positions),
                               redundant=True)
        for _ in range(count)
    ]
    return packets, False


def _send(manifest, user, server: Server, ledger: TrafficLedger | None, report, state, packets, seq,
          plan=None, fallback=False) -> UploadResult:
    server.receive_upload(packets, manifest, user)
    data_bytes = sum(p.payload_len for p in packets)
    redundant = sum(1 for p in packets if p.redundant)
    if ledger is not None:
        ledger.append(UploadRecord(
            seq, user, manifest.file_id, state, manifest.n_chunks, report.k, manifest.size_bytes,
            data_bytes, len(packets), redundant, report.metadata_bytes()))
    return UploadResult(len(packets), state, data_bytes, plan, fallback)


def upload_source(manifest, user, server, ledger=None, config=None, rng=None, seq=0) -> UploadResult:
    report = server.query_duplicates(manifest, user)
    return _send(manifest, user, server, ledger, report, _classify(report, manifest.n_chunks),
                 _new_chunk_packets(manifest, report), seq)


def upload_target(manifest, user, server, ledger=None, config=None, rng=None, seq=0) -> UploadResult:
    report = server.query_duplicates(manifest, user)
    packets = [UploadPacket.for_chunk(c) for c in manifest.chunks]
    return _send(manifest, user, server, ledger, report, _classify(report, manifest.n_chunks), packets, seq)


def upload_rts_file(manifest, user, server, ledger=None, config=None, rng=None, seq=0) -> UploadResult:
    report = server.query_duplicates(manifest, user)
    state = _classify(report, manifest.n_chunks)
    if state == STATE_SINGLE_USER_FULL:
        return _send(manifest, user, server, ledger, report, state, [], seq)
    if rts_decide(manifest.file_hash, server.rts_files, rng) == UPLOAD:
        packets = [UploadPacket.for_chunk(c) for c in manifest.chunks]
    else:
        packets = _new_chunk_packets(manifest, report)
    return _send(manifest, user, server, ledger, report, state, packets, seq)


def upload_rts_chunk(manifest, user, server, ledger=None, config=None, rng=None, seq=0) -> UploadResult:
    report = server.query_duplicates(manifest, user)
    state = _classify(report, manifest.n_chunks)
    if state == STATE_SINGLE_USER_FULL:
        return _send(manifest, user, server, ledger, report, state, [], seq)
    rts = server.rts_chunks
    packets = []
    for chunk, dup in zip(manifest.chunks, report.duplicates):
        # every occurrence counts as a copy; new chunks are sent regardless
        if rts_decide(chunk.fingerprint, rts, rng) == UPLOAD or not dup:
            packets.append(UploadPacket.for_chunk(chunk))
    return _send(manifest, user, server, ledger, report, state, packets, seq)


def upload_det_pad(manifest, user, server, ledger=None, config=None, rng=None, seq=0) -> UploadResult:
    config = config or SchemeConfig(DET_PAD)
    report = server.query_duplicates(manifest, user)
    state = _classify(report, manifest.n_chunks)
    if state == STATE_SINGLE_USER_FULL:
        return _send(manifest, user, server, ledger, report, state, [], seq)
    packets = _new_chunk_packets(manifest, report)
    padding, fallback = _redundant_packets(manifest, report, config.det_pad_l - report.k, config, rng)
    return _send(manifest, user, server, ledger, report, state, packets + padding, seq, fallback=fallback)


def upload_rrcs(manifest, user, server, ledger=None, config=None, rng=None, seq=0) -> UploadResult:
    config = config or SchemeConfig(RRCS)
    report = server.query_duplicates(manifest, user)
    n = manifest.n_chunks
    state = _classify(report, n)
    if state == STATE_SINGLE_USER_FULL:
        return _send(manifest, user, server, ledger, report, state, [], seq)
    plan = rrcs_plan(n, report.k, config.lam, rng)
    if plan.direct_upload:
        return _send(manifest, user, server, ledger, report, state,
                     [UploadPacket.for_chunk(manifest.chunks[0])], seq, plan)
    packets = _new_chunk_packets(manifest, report)
    padding, fallback = _redundant_packets(manifest, report, plan.r_prime, config, rng)
    return _send(manifest, user, server, ledger, report, state, packets + padding, seq, plan, fallback)


UPLOADERS: dict[str, Callable[..., UploadResult]] = {
    SOURCE: upload_source,
    TARGET: upload_target,
    RTS_FILE: upload_rts_file,
    RTS_CHUNK: upload_rts_chunk,
    DET_PAD: upload_det_pad,
    RRCS: upload_rrcs,
}


def upload(manifest: FileManifest, user: int, server: Server, config: SchemeConfig,
           ledger: TrafficLedger | None = None, seq: int = 0, rng=None) -> UploadResult:
    """Upload one file under ``config.scheme`` with a per-upload random stream."""
    if rng is None:
        rng = upload_rng(config.seed, user, manifest.file_id, seq)
    return UPLOADERS[config.scheme](manifest, user, server, ledger, config, rng, seq)


# -- trace replay ------------------------------------------------------------

class TraceError(ValueError):
    def __init__(self, index: int, reason: str):
        super().__init__(f"trace event {index}: {reason}")
        self.index = index


def replay_trace(trace: Iterable, config: SchemeConfig, server: Server | None = None,
                 ledger: TrafficLedger | None = None, stats=None):
    """Run every trace event through ``config.scheme`` against one server.

    Returns an :class:`rrcs.metrics.ExperimentReport`; the report is fully
    determined by the trace and ``config``.
    """
    from rrcs.metrics import build_report
    from rrcs.traces import TraceEvent, trace_stats

    server = server if server is not None else Server(config.d, config.rts_fixed_threshold)
    ledger = ledger if ledger is not None else TrafficLedger()
    events: list = []
    last_seq = None
    started = time.perf_counter()
    for i, ev in enumerate(trace):
        if not isinstance(ev, TraceEvent):
            raise TraceError(i, f"expected TraceEvent, got {type(ev).__name__}")
        if last_seq is not None and ev.seq <= last_seq:
            raise TraceError(i, f"seq {ev.seq} does not increase")
        if not isinstance(ev.manifest, FileManifest):
            raise TraceError(i, "missing manifest")
        last_seq = ev.seq
        events.append(ev)
        upload(ev.manifest, ev.user, server, config, ledger, ev.seq)
    runtime = time.perf_counter() - started
    if stats is None:
        stats = trace_stats(events)
    return build_report(config, ledger, stats, runtime, server)
