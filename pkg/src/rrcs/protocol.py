"""Upload packet codec.

Layout of one packet, little-endian::

    [32-byte fingerprint][1-byte flags][4-byte payload_len][payload]

Only bit 0 of ``flags`` is meaningful (1 = redundant chunk the server must
discard, 0 = non-duplicate chunk to store). A replay file is the 8-byte
magic ``RRCSPKT1`` followed by packets back to back.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

from rrcs.chunking import DIGEST_SIZE, Chunk, Fingerprint

FLAG_NON_DUPLICATE = 0x00
FLAG_REDUNDANT = 0x01
RESERVED_FLAG_MASK = 0xFE

REPLAY_MAGIC = b"RRCSPKT1"
HEADER = struct.Struct(f"<{DIGEST_SIZE}sBI")


class ProtocolError(ValueError):
    """A packet violates the wire layout."""


class IntegrityError(ValueError):
    """A stored-chunk payload does not hash to its declared fingerprint."""


@dataclass(frozen=True, slots=True)
class UploadPacket:
    """One chunk on the wire.

    ``payload`` may be ``None`` in fingerprint-only simulations; the packet
    still accounts for ``payload_len`` bytes of traffic but cannot be encoded.
    """

    fingerprint: Fingerprint
    flags: int
    payload_len: int
    payload: bytes | None = field(default=None, repr=False, compare=False)

    @property
    def redundant(self) -> bool:
        return bool(self.flags & FLAG_REDUNDANT)

    @classmethod
    def for_chunk(cls, chunk: Chunk, redundant: bool = False) -> "UploadPacket":
        return cls(chunk.fingerprint, FLAG_REDUNDANT if redundant else FLAG_NON_DUPLICATE,
                   chunk.size_bytes, chunk.payload)

    def validate(self) -> None:
        if len(self.fingerprint) != DIGEST_SIZE:
            raise ProtocolError("fingerprint must be 32 bytes")
        if self.flags & RESERVED_FLAG_MASK or not 0 <= self.flags <= 0xFF:
            raise ProtocolError(f"reserved flag bits set: {self.flags:#04x}")
        if not 0 <= self.payload_len <= 0xFFFFFFFF:
            raise ProtocolError("payload_len out of range")
        if self.payload is not None and len(self.payload) != self.payload_len:
            raise ProtocolError("payload_len does not match payload length")

    def encode(self) -> bytes:
        self.validate()
        if self.payload is None:
            raise ProtocolError("cannot encode a packet without payload")
        return HEADER.pack(self.fingerprint, self.flags, self.payload_len) + self.payload


def decode_packet(buf: bytes | memoryview, offset: int = 0) -> tuple[UploadPacket, int]:
    """Decode one packet at ``offset``; returns the packet and the next offset."""
    if len(buf) - offset < HEADER.size:
        raise ProtocolError("truncated packet header")
    fp, flags, length = HEADER.unpack_from(buf, offset)
    if flags & RESERVED_FLAG_MASK:
        raise ProtocolError(f"reserved flag bits set: {flags:#04x}")
    start = offset + HEADER.size
    end = start + length
    if end > len(buf):
        raise ProtocolError("payload shorter than payload_len")
    packet = UploadPacket(Fingerprint(fp), flags, length, bytes(buf[start:end]))
    return packet, end


def decode_packets(buf: bytes | memoryview) -> list[UploadPacket]:
    packets = []
    offset = 0
    while offset < len(buf):
        packet, offset = decode_packet(buf, offset)
        packets.append(packet)
    return packets


def encode_packets(packets: Iterable[UploadPacket]) -> bytes:
    return b"".join(p.encode() for p in packets)


def write_replay(dest: str | Path | BinaryIO, packets: Iterable[UploadPacket]) -> None:
    data = REPLAY_MAGIC + encode_packets(packets)
    if hasattr(dest, "write"):
        dest.write(data)  # type: ignore[union-attr]
    else:
        Path(dest).write_bytes(data)


def read_replay(src: str | Path | bytes) -> list[UploadPacket]:
    data = src if isinstance(src, bytes) else Path(src).read_bytes()
    if data[:len(REPLAY_MAGIC)] != REPLAY_MAGIC:
        raise ProtocolError("bad replay magic")
    return decode_packets(memoryview(data)[len(REPLAY_MAGIC):])
