"""Fixed-size chunking, fingerprints and file manifests."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

DIGEST_SIZE = 32
DEFAULT_CHUNK_SIZE = 8192
MIN_CHUNK_SIZE = 64

DUPLICATE_PICK = "duplicate-pick"
NULL_PAD = "null-pad"
REDUNDANCY_STRATEGIES = (DUPLICATE_PICK, NULL_PAD)


class Fingerprint(bytes):
    """A 32-byte SHA-256 digest; the only identity used for duplicate tests."""

    __slots__ = ()

    def __new__(cls, value: bytes) -> "Fingerprint":
        if len(value) != DIGEST_SIZE:
            raise ValueError(f"fingerprint must be {DIGEST_SIZE} bytes, got {len(value)}")
        return super().__new__(cls, value)

    def __repr__(self) -> str:
        return f"Fingerprint({self.hex()[:16]}...)"


def fingerprint(payload: bytes) -> Fingerprint:
    return Fingerprint(hashlib.sha256(payload).digest())


@dataclass(frozen=True, slots=True)
class ChunkingParams:
    chunk_size_bytes: int = DEFAULT_CHUNK_SIZE
    mode: str = "fixed-size"

    def __post_init__(self):
        if self.chunk_size_bytes < MIN_CHUNK_SIZE:
            raise ValueError(f"chunk_size_bytes must be >= {MIN_CHUNK_SIZE}")
        if self.mode != "fixed-size":
            raise ValueError(f"unsupported chunking mode {self.mode!r}")


@dataclass(frozen=True, slots=True)
class Chunk:
    fingerprint: Fingerprint
    size_bytes: int
    payload: bytes | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.size_bytes <= 0:
            raise ValueError("chunk size must be positive")
        if self.payload is not None and len(self.payload) != self.size_bytes:
            raise ValueError("payload length does not match size_bytes")

    @classmethod
    def from_payload(cls, payload: bytes) -> "Chunk":
        return cls(fingerprint(payload), len(payload), payload)


def manifest_hash(fingerprints: Iterable[bytes]) -> Fingerprint:
    h = hashlib.sha256()
    for fp in fingerprints:
        h.update(fp)
    return Fingerprint(h.digest())


@dataclass(frozen=True, slots=True)
class FileManifest:
    """Ordered chunk list of one file.

    ``file_hash`` is the digest of the concatenated chunk fingerprints, so a
    manifest built from fingerprints alone has the same identity as one built
    from the raw content.
    """

    file_id: int
    chunks: tuple[Chunk, ...]
    file_hash: Fingerprint = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not self.chunks:
            raise ValueError("manifest must contain at least one chunk")
        expected = manifest_hash(c.fingerprint for c in self.chunks)
        if self.file_hash is None:
            object.__setattr__(self, "file_hash", expected)
        elif self.file_hash != expected:
            raise ValueError("file_hash does not match chunk fingerprints")

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)

    @property
    def size_bytes(self) -> int:
        return sum(c.size_bytes for c in self.chunks)

    @property
    def has_payloads(self) -> bool:
        return all(c.payload is not None for c in self.chunks)

    def fingerprints(self) -> list[Fingerprint]:
        return [c.fingerprint for c in self.chunks]

    def content(self) -> bytes:
        if not self.has_payloads:
            raise ValueError("manifest carries fingerprints only")
        return b"".join(c.payload for c in self.chunks)  # type: ignore[misc]

    def strip_payloads(self) -> "FileManifest":
        return FileManifest(
            self.file_id,
            tuple(Chunk(c.fingerprint, c.size_bytes) for c in self.chunks),
            self.file_hash,
        )


def chunk_file(content: bytes, params: ChunkingParams | None = None, file_id: int = 0) -> FileManifest:
    """Split ``content`` into fixed-size chunks; the last one holds the remainder."""
    if not content:
        raise ValueError("empty file")
    size = (params or ChunkingParams()).chunk_size_bytes
    view = memoryview(content)
    chunks = tuple(Chunk.from_payload(bytes(view[i:i + size])) for i in range(0, len(content), size))
    return FileManifest(file_id, chunks)


def manifest_from_fingerprints(file_id: int, fingerprints: Sequence[bytes], sizes: Sequence[int]) -> FileManifest:
    if len(fingerprints) != len(sizes):
        raise ValueError("fingerprints and sizes differ in length")
    return FileManifest(file_id, tuple(Chunk(Fingerprint(fp), s) for fp, s in zip(fingerprints, sizes)))


@lru_cache(maxsize=16)
def null_chunk(chunk_size: int) -> Chunk:
    """A chunk of ``chunk_size`` zero bytes, shared between callers."""
    return Chunk.from_payload(bytes(chunk_size))


def make_redundant_chunk(
    manifest: FileManifest,
    strategy: str,
    rng,
    chunk_size: int,
    duplicate_positions: Sequence[int] = (),
) -> Chunk:
    """Produce one redundant chunk of exactly ``chunk_size`` bytes.

    ``duplicate-pick`` draws uniformly among the file's duplicate chunks of
    full size (``duplicate_positions`` indexes into ``manifest.chunks``); with
    none available it falls back to null padding.
    """
    if strategy not in REDUNDANCY_STRATEGIES:
        raise ValueError(f"unknown redundancy strategy {strategy!r}")
    if strategy == DUPLICATE_PICK:
        eligible = [i for i in duplicate_positions if manifest.chunks[i].size_bytes == chunk_size]
        if eligible:
            return manifest.chunks[eligible[int(rng.integers(len(eligible)))]]
    return null_chunk(chunk_size)


def has_duplicate_candidates(manifest: FileManifest, chunk_size: int, duplicate_positions: Sequence[int]) -> bool:
    return any(manifest.chunks[i].size_bytes == chunk_size for i in duplicate_positions)
