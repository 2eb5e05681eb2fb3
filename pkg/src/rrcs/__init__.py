"""Chunk-level deduplication simulator with randomized redundant chunks.

The package models a cross-user, source-based deduplication service, the
client-side upload strategies that defend (or fail to defend) against
traffic-volume side channels, and the attacker that exploits them.
"""

from rrcs.chunking import (
    Chunk,
    ChunkingParams,
    FileManifest,
    Fingerprint,
    chunk_file,
    fingerprint,
    make_redundant_chunk,
)
from rrcs.schemes import RrcsPlan, SchemeConfig, TrafficLedger, rrcs_plan
from rrcs.server import Server

__all__ = [
    "Chunk",
    "ChunkingParams",
    "FileManifest",
    "Fingerprint",
    "RrcsPlan",
    "SchemeConfig",
    "Server",
    "TrafficLedger",
    "chunk_file",
    "fingerprint",
    "make_redundant_chunk",
    "rrcs_plan",
]

__version__ = "0.1.0"
