"""Cloud storage side: chunk and file indices, RTS counters, upload receipt."""

from __future__ import annotations

import copy
import hashlib
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

from rrcs.chunking import DIGEST_SIZE, FileManifest, Fingerprint
from rrcs.protocol import (
    RESERVED_FLAG_MASK,
    FLAG_REDUNDANT,
    IntegrityError,
    ProtocolError,
    UploadPacket,
)

NO_MATCH = "none"
SINGLE_USER = "single-user"
CROSS_USER = "cross-user"

UPLOAD = "upload"
DEDUP_AT_CLIENT = "dedup-at-client"


@dataclass(slots=True)
class ChunkEntry:
    size_bytes: int
    refcount: int = 0


@dataclass(slots=True)
class FileEntry:
    fingerprints: tuple[Fingerprint, ...]
    owners: set[int] = field(default_factory=set)


@dataclass(frozen=True, slots=True)
class DuplicateReport:
    duplicates: tuple[bool, ...]
    k: int
    full_match: str

    @property
    def n(self) -> int:
        return len(self.duplicates)

    def duplicate_positions(self) -> list[int]:
        return [i for i, dup in enumerate(self.duplicates) if dup]

    def metadata_bytes(self) -> int:
        # request: fingerprint + 4-byte size per chunk; response: bitmap + state byte
        return (DIGEST_SIZE + 4) * self.n + (self.n + 7) // 8 + 1


@dataclass(frozen=True, slots=True)
class ReceiptSummary:
    stored_chunks: int
    deduplicated_chunks: int
    discarded_redundant: int
    bytes_received: int
    new_owner: bool


@dataclass
class RtsState:
    """Per-key upload counters with lazily drawn thresholds on ``[2, d]``.

    ``fixed_threshold`` pins every threshold to one value, used to replay
    single-threshold experiments.
    """

    d: int = 20
    fixed_threshold: int | None = None
    counters: dict[Hashable, int] = field(default_factory=dict)
    thresholds: dict[Hashable, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if self.fixed_threshold is not None and self.fixed_threshold < 1:
            raise ValueError("fixed threshold must be positive")

    def threshold(self, key: Hashable, rng) -> int:
        t = self.thresholds.get(key)
        if t is None:
            t = self.fixed_threshold if self.fixed_threshold is not None else int(rng.integers(2, self.d + 1))
            self.thresholds[key] = t
        return t


def rts_decide(key: Hashable, state: RtsState, rng) -> str:
    """Upload while fewer than ``t`` copies of ``key`` were seen, then dedup at the client."""
    t = state.threshold(key, rng)
    c = state.counters.get(key, 0)
    state.counters[key] = c + 1
    return UPLOAD if c < t else DEDUP_AT_CLIENT


class Server:
    """A single deduplicating storage server.

    Mutating methods are not thread-safe; parallel experiments use one
    instance each.
    """

    def __init__(self, d: int = 20, fixed_threshold: int | None = None):
        self.chunks: dict[Fingerprint, ChunkEntry] = {}
        self.files: dict[Fingerprint, FileEntry] = {}
        self.rts_files = RtsState(d, fixed_threshold)
        self.rts_chunks = RtsState(d, fixed_threshold)

    def clone(self) -> "Server":
        other = Server.__new__(Server)
        other.chunks = {fp: ChunkEntry(e.size_bytes, e.refcount) for fp, e in self.chunks.items()}
        other.files = {h: FileEntry(e.fingerprints, set(e.owners)) for h, e in self.files.items()}
        other.rts_files = copy.deepcopy(self.rts_files)
        other.rts_chunks = copy.deepcopy(self.rts_chunks)
        return other

    def query_duplicates(self, manifest: FileManifest, user: int) -> DuplicateReport:
        """Duplicate bitmap for ``manifest`` as seen by ``user``.

        A chunk is a duplicate when the server already stores it or when it
        repeats an earlier chunk of the same file.
        """
        entry = self.files.get(manifest.file_hash)
        if entry is not None:
            full_match = SINGLE_USER if user in entry.owners else CROSS_USER
            return DuplicateReport((True,) * manifest.n_chunks, 0, full_match)
        stored = self.chunks
        seen: set[Fingerprint] = set()
        bitmap = []
        k = 0
        for chunk in manifest.chunks:
            fp = chunk.fingerprint
            dup = fp in stored or fp in seen
            if not dup:
                k += 1
                seen.add(fp)
            bitmap.append(dup)
        return DuplicateReport(tuple(bitmap), k, NO_MATCH)

    def receive_upload(self, packets: Sequence[UploadPacket], manifest: FileManifest, user: int) -> ReceiptSummary:
        """Apply one file upload.

        Redundant packets only count toward ``bytes_received``. All packets are
        validated before the indices change, so a rejected upload leaves the
        server untouched.
        """
        declared = {c.fingerprint: c.size_bytes for c in manifest.chunks}
        bytes_received = 0
        discarded = 0
        incoming: dict[Fingerprint, int] = {}
        for p in packets:
            if p.flags & RESERVED_FLAG_MASK or not 0 <= p.flags <= 0xFF:
                raise ProtocolError(f"reserved flag bits set: {p.flags:#04x}")
            if p.payload is not None and len(p.payload) != p.payload_len:
                raise ProtocolError("payload_len does not match payload length")
            bytes_received += p.payload_len
            if p.flags & FLAG_REDUNDANT:
                discarded += 1
                continue
            size = declared.get(p.fingerprint)
            if size is None:
                raise ProtocolError("non-duplicate packet for a chunk outside the declared manifest")
            if size != p.payload_len:
                raise ProtocolError("payload_len disagrees with the declared chunk size")
            if p.payload is not None and hashlib.sha256(p.payload).digest() != p.fingerprint:
                raise IntegrityError("payload does not match fingerprint")
            incoming[p.fingerprint] = size

        chunks = self.chunks
        missing = [fp for fp in declared if fp not in chunks and fp not in incoming]
        if missing:
            raise ProtocolError(f"upload leaves {len(missing)} declared chunk(s) without data")

        stored = 0
        for fp, size in incoming.items():
            if fp not in chunks:
                chunks[fp] = ChunkEntry(size)
                stored += 1
        deduplicated = sum(1 for p in packets if not p.flags & FLAG_REDUNDANT) - stored

        entry = self.files.get(manifest.file_hash)
        if entry is None:
            entry = self.files[manifest.file_hash] = FileEntry(tuple(manifest.fingerprints()))
        new_owner = user not in entry.owners
        if new_owner:
            entry.owners.add(user)
            for c in manifest.chunks:
                chunks[c.fingerprint].refcount += 1
        return ReceiptSummary(stored, deduplicated, discarded, bytes_received, new_owner)

    def storage_fingerprint_set(self) -> frozenset[Fingerprint]:
        return frozenset(self.chunks)

    def stored_bytes(self) -> int:
        return sum(e.size_bytes for e in self.chunks.values())

    def owners(self, file_hash: Fingerprint) -> frozenset[int]:
        entry = self.files.get(file_hash)
        return frozenset(entry.owners) if entry else frozenset()

    def preload(self, manifests: Iterable[FileManifest], user: int) -> None:
        """Store files for ``user`` as a plain full upload, bypassing any scheme."""
        for m in manifests:
            report = self.query_duplicates(m, user)
            packets = [UploadPacket.for_chunk(c) for c, dup in zip(m.chunks, report.duplicates) if not dup]
            self.receive_upload(packets, m, user)


def storage_fingerprint_set(server: Server) -> frozenset[Fingerprint]:
    return server.storage_fingerprint_set()
