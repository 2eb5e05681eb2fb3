"""Upload workloads: synthetic generator, directory ingester, trace file format.

Trace file layout (little-endian)::

    "RRCSTRC1" | version:u8 | records...
    record = user:u64 | file_id:u64 | n_chunks:u32 | n_chunks * (fingerprint:32s | size:u32)

Event ``seq`` is the record's position in the file.
"""

from __future__ import annotations

import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from rrcs.chunking import (
    DEFAULT_CHUNK_SIZE,
    DIGEST_SIZE,
    Chunk,
    ChunkingParams,
    FileManifest,
    Fingerprint,
    chunk_file,
)

log = logging.getLogger(__name__)

TRACE_MAGIC = b"RRCSTRC1"
TRACE_VERSION = 1
_RECORD = struct.Struct("<QQI")
_CHUNK = struct.Struct(f"<{DIGEST_SIZE}sI")


class TraceFormatError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TraceEvent:
    seq: int
    user: int
    file_id: int
    manifest: FileManifest


# -- statistics --------------------------------------------------------------

@dataclass(frozen=True)
class TraceStats:
    n_events: int
    n_unique_files: int
    total_bytes: int
    single_user_dedup_bytes: int
    source_dedup_bytes: int
    cross_user_redundancy_ratio: float
    frac_gt3: float
    frac_gt5: float
    frac_gt10: float
    capped_files: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def source_dedup_bytes(events: Iterable[TraceEvent]) -> int:
    """Bytes a perfect source-side deduplicator transmits: each distinct chunk once."""
    seen: dict[bytes, int] = {}
    for ev in events:
        for c in ev.manifest.chunks:
            seen.setdefault(c.fingerprint, c.size_bytes)
    return sum(seen.values())


def copy_fractions(copies: Sequence[int]) -> tuple[float, float, float]:
    if len(copies) == 0:
        return (0.0, 0.0, 0.0)
    arr = np.asarray(copies)
    return tuple(float(np.mean(arr > k)) for k in (3, 5, 10))  # type: ignore[return-value]


def trace_stats(events: Sequence[TraceEvent], capped_files: int = 0) -> TraceStats:
    total = 0
    after_single = 0
    owners: dict[bytes, set[int]] = {}
    for ev in events:
        size = ev.manifest.size_bytes
        total += size
        users = owners.setdefault(ev.manifest.file_hash, set())
        if ev.user not in users:
            users.add(ev.user)
            after_single += size
    src = source_dedup_bytes(events)
    # share of all uploaded bytes a perfect source-side deduplicator never sends
    ratio = (total - src) / total if total else 0.0
    f3, f5, f10 = copy_fractions([len(u) for u in owners.values()])
    return TraceStats(len(events), len(owners), total, after_single, src, ratio, f3, f5, f10, capped_files)


# -- synthetic generator -----------------------------------------------------

@dataclass(frozen=True)
class SynthParams:
    """Workload knobs.

    Copy counts follow a geometric law: a file is shared with a second user
    with probability ``share_p`` (defaults to ``copy_p``) and gains each
    further copy with probability ``copy_p``. Sizes are lognormal with the
    given mean, clamped to ``[chunk_size_bytes, max_file_bytes]``.
    """

    n_users: int = 100
    n_unique_files: int = 1000
    copy_p: float = 0.3
    share_p: float | None = None
    mean_file_bytes: int = 622_000
    size_sigma: float = 1.0
    max_file_bytes: int = 64 * 2**20
    chunk_size_bytes: int = DEFAULT_CHUNK_SIZE
    intra_file_similarity: float = 0.0
    shared_run_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.copy_p < 1:
            raise ValueError("copy_p must lie in (0, 1)")
        if self.share_p is not None and not 0 <= self.share_p < 1:
            raise ValueError("share_p must lie in [0, 1)")
        if self.n_users < 1 or self.n_unique_files < 0:
            raise ValueError("n_users must be >= 1 and n_unique_files >= 0")
        if not 0 <= self.intra_file_similarity <= 1:
            raise ValueError("intra_file_similarity must lie in [0, 1]")
        if not 0 < self.shared_run_fraction <= 1:
            raise ValueError("shared_run_fraction must lie in (0, 1]")
        if self.mean_file_bytes < 1 or self.max_file_bytes < self.chunk_size_bytes:
            raise ValueError("file size bounds are inconsistent")
        ChunkingParams(self.chunk_size_bytes)

    @property
    def first_share_p(self) -> float:
        return self.copy_p if self.share_p is None else self.share_p

    def expected_copies(self) -> float:
        return 1 + self.first_share_p / (1 - self.copy_p)

    def expected_fractions(self) -> tuple[float, float, float]:
        """P(copies > k) for k = 3, 5, 10 before the user cap."""
        return tuple(self.first_share_p * self.copy_p ** (k - 1) for k in (3, 5, 10))  # type: ignore[return-value]

    def with_events(self, n_events: int) -> "SynthParams":
        return replace(self, n_unique_files=max(1, round(n_events / self.expected_copies())))


# Calibrated against the copy-count fractions and cross-user redundancy of
# the three reference datasets (Fslhomes, MacOS, Onefull).
PRESETS: dict[str, SynthParams] = {
    "fslhomes": SynthParams(n_users=200, copy_p=0.756, share_p=0.147, mean_file_bytes=1_530_000,
                            chunk_size_bytes=8_000),
    "macos": SynthParams(n_users=247, copy_p=0.35, share_p=0.6, mean_file_bytes=683_000,
                         chunk_size_bytes=8_000),
    "onefull": SynthParams(n_users=15, copy_p=0.44, share_p=0.18, mean_file_bytes=622_000,
                           chunk_size_bytes=10_000),
}

PRESET_TARGETS: dict[str, dict[str, float]] = {
    "fslhomes": {"frac_gt3": 0.084, "frac_gt5": 0.048, "frac_gt10": 0.009, "cross_user_redundancy_ratio": 0.39},
    "macos": {"frac_gt3": 0.074, "frac_gt5": 0.007, "frac_gt10": 0.002, "cross_user_redundancy_ratio": 0.48},
    "onefull": {"frac_gt3": 0.028, "frac_gt5": 0.007, "frac_gt10": 0.0, "cross_user_redundancy_ratio": 0.25},
}


@dataclass
class GeneratedTrace:
    events: list[TraceEvent]
    stats: TraceStats
    copy_counts: list[int] = field(repr=False)
    generator_fractions: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __iter__(self):
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)


def _draw_copies(rng: np.random.Generator, params: SynthParams) -> int:
    if rng.random() >= params.first_share_p:
        return 1
    return 1 + int(rng.geometric(1 - params.copy_p))


def _draw_size(rng: np.random.Generator, params: SynthParams) -> int:
    sigma = params.size_sigma
    mu = math.log(params.mean_file_bytes) - sigma * sigma / 2
    size = int(rng.lognormal(mu, sigma)) if sigma > 0 else params.mean_file_bytes
    return min(max(size, params.chunk_size_bytes), params.max_file_bytes)


def _chunk_sizes(n_bytes: int, chunk_size: int) -> list[int]:
    full, tail = divmod(n_bytes, chunk_size)
    return [chunk_size] * full + ([tail] if tail else [])


def generate_trace(params: SynthParams) -> GeneratedTrace:
    """Draw a fingerprint-only trace; identical params give an identical trace."""
    rng = np.random.default_rng(params.seed)
    cs = params.chunk_size_bytes
    files: list[tuple[Chunk, ...]] = []
    copy_counts: list[int] = []
    owner_lists: list[np.ndarray] = []
    capped = 0
    for _ in range(params.n_unique_files):
        copies = _draw_copies(rng, params)
        if copies > params.n_users:
            copies = params.n_users
            capped += 1
        sizes = _chunk_sizes(_draw_size(rng, params), cs)
        fps = [rng.bytes(DIGEST_SIZE) for _ in sizes]
        n_full = sum(1 for s in sizes if s == cs)
        if files and n_full and rng.random() < params.intra_file_similarity:
            src = files[int(rng.integers(len(files)))]
            src_full = [c for c in src if c.size_bytes == cs]
            if src_full:
                run = max(1, round(params.shared_run_fraction * min(n_full, len(src_full))))
                a = int(rng.integers(len(src_full) - run + 1))
                b = int(rng.integers(n_full - run + 1))
                for i in range(run):
                    fps[b + i] = src_full[a + i].fingerprint
        files.append(tuple(Chunk(Fingerprint(fp), s) for fp, s in zip(fps, sizes)))
        copy_counts.append(copies)
        owner_lists.append(rng.choice(params.n_users, size=copies, replace=False))

    uploads = [(j, int(u)) for j, owners in enumerate(owner_lists) for u in owners]
    order = rng.permutation(len(uploads))
    manifests: dict[int, FileManifest] = {}
    events = []
    for seq, idx in enumerate(order):
        j, user = uploads[idx]
        m = manifests.get(j)
        if m is None:
            m = manifests[j] = FileManifest(j, files[j])
        events.append(TraceEvent(seq, user, j, m))
    stats = trace_stats(events, capped)
    return GeneratedTrace(events, stats, copy_counts, copy_fractions(copy_counts))


# -- directory ingestion -----------------------------------------------------

def _top_dir_user(rel: Path) -> str:
    return rel.parts[0] if len(rel.parts) > 1 else ""


def ingest_directory(
    root: str | Path,
    params: ChunkingParams | None = None,
    user_of: Callable[[Path], str] | str = "top-dir",
    skipped: list[tuple[str, str]] | None = None,
) -> list[TraceEvent]:
    """One event per regular file under ``root``, in lexicographic path order.

    ``user_of`` maps a path relative to ``root`` to a user name; the default
    treats each top-level directory as one user and ``"single"`` puts every
    file under user 0. Unreadable or empty files are skipped and reported in
    ``skipped`` as ``(path, reason)``.
    """
    root = Path(root)
    params = params or ChunkingParams()
    if user_of == "top-dir":
        user_of = _top_dir_user
    elif user_of == "single":
        user_of = lambda rel: ""  # noqa: E731
    elif isinstance(user_of, str):
        raise ValueError(f"unknown user mapping rule {user_of!r}")

    paths = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        paths.extend(Path(dirpath, f) for f in filenames)
    paths.sort(key=lambda p: p.relative_to(root).as_posix())

    user_ids: dict[str, int] = {}
    events = []
    for path in paths:
        rel = path.relative_to(root)
        try:
            content = path.read_bytes()
            manifest = chunk_file(content, params, file_id=len(events))
        except (OSError, ValueError) as exc:
            log.warning("skipping %s: %s", rel, exc)
            if skipped is not None:
                skipped.append((rel.as_posix(), str(exc)))
            continue
        user = user_ids.setdefault(user_of(rel), len(user_ids))
        events.append(TraceEvent(len(events), user, manifest.file_id, manifest))
    return events


# -- trace files -------------------------------------------------------------

def write_trace(path: str | Path, events: Iterable[TraceEvent]) -> None:
    with open(path, "wb") as f:
        f.write(TRACE_MAGIC + bytes([TRACE_VERSION]))
        for ev in events:
            chunks = ev.manifest.chunks
            f.write(_RECORD.pack(ev.user, ev.file_id, len(chunks)))
            f.write(b"".join(_CHUNK.pack(c.fingerprint, c.size_bytes) for c in chunks))


def read_trace(path: str | Path) -> list[TraceEvent]:
    data = Path(path).read_bytes()
    head = len(TRACE_MAGIC) + 1
    if len(data) < head or data[:len(TRACE_MAGIC)] != TRACE_MAGIC:
        raise TraceFormatError("bad trace magic")
    if data[len(TRACE_MAGIC)] != TRACE_VERSION:
        raise TraceFormatError(f"unsupported trace version {data[len(TRACE_MAGIC)]}")
    view = memoryview(data)
    interned: dict[tuple[bytes, int], Chunk] = {}
    manifests: dict[tuple, FileManifest] = {}
    events = []
    off = head
    while off < len(data):
        if off + _RECORD.size > len(data):
            raise TraceFormatError("truncated record header")
        user, file_id, n = _RECORD.unpack_from(view, off)
        off += _RECORD.size
        end = off + n * _CHUNK.size
        if n == 0 or end > len(data):
            raise TraceFormatError("truncated or empty chunk list")
        chunks = []
        for fp, size in _CHUNK.iter_unpack(view[off:end]):
            c = interned.get((fp, size))
            if c is None:
                c = interned[(fp, size)] = Chunk(Fingerprint(fp), size)
            chunks.append(c)
        off = end
        key = (file_id, tuple(chunks))
        m = manifests.get(key)
        if m is None:
            m = manifests[key] = FileManifest(file_id, tuple(chunks))
        events.append(TraceEvent(len(events), user, file_id, m))
    return events
