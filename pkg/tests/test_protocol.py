import struct

import pytest
from hypothesis import given, strategies as st

from rrcs.chunking import Chunk, ChunkingParams, chunk_file, null_chunk
from rrcs.protocol import (
    HEADER,
    REPLAY_MAGIC,
    ProtocolError,
    UploadPacket,
    decode_packet,
    decode_packets,
    encode_packets,
    read_replay,
    write_replay,
)
from rrcs.server import ReceiptSummary, Server

P64 = ChunkingParams(64)


def golden_setup():
    base = chunk_file(b"A" * 64 + b"B" * 64 + b"C" * 64, P64, file_id=1)
    new = chunk_file(b"A" * 64 + b"B" * 64 + b"D" * 64 + b"E" * 64 + b"D" * 64 + b"tail", P64, file_id=2)
    server = Server()
    server.preload([base], 0)
    return server, new


class TestCodec:
    def test_header_layout(self):
        c = Chunk.from_payload(b"hello")
        raw = UploadPacket.for_chunk(c, redundant=True).encode()
        assert len(raw) == 32 + 1 + 4 + 5
        assert raw[:32] == c.fingerprint
        assert raw[32] == 1
        assert struct.unpack("<I", raw[33:37]) == (5,)
        assert raw[37:] == b"hello"

    @given(st.binary(min_size=1, max_size=300), st.booleans())
    def test_round_trip(self, payload, redundant):
        p = UploadPacket.for_chunk(Chunk.from_payload(payload), redundant)
        decoded, end = decode_packet(p.encode())
        assert decoded == p
        assert decoded.payload == payload
        assert end == HEADER.size + len(payload)

    def test_stream_round_trip(self):
        m = chunk_file(bytes(range(256)) * 3, P64)
        packets = [UploadPacket.for_chunk(c) for c in m.chunks]
        assert decode_packets(encode_packets(packets)) == packets

    @pytest.mark.parametrize("flags", [0x02, 0x80, 0xFF, 0x03])
    def test_reserved_bits_rejected(self, flags):
        raw = bytearray(UploadPacket.for_chunk(Chunk.from_payload(b"x")).encode())
        raw[32] = flags
        with pytest.raises(ProtocolError, match="reserved"):
            decode_packet(bytes(raw))
        with pytest.raises(ProtocolError):
            UploadPacket(Chunk.from_payload(b"x").fingerprint, flags, 1, b"x").encode()

    def test_truncation(self):
        raw = UploadPacket.for_chunk(Chunk.from_payload(b"abcdef")).encode()
        with pytest.raises(ProtocolError):
            decode_packet(raw[:20])
        with pytest.raises(ProtocolError):
            decode_packet(raw[:-1])

    def test_fingerprint_only_packet_cannot_encode(self):
        c = Chunk.from_payload(b"abc")
        with pytest.raises(ProtocolError):
            UploadPacket(c.fingerprint, 0, 3).encode()

    def test_bad_magic(self):
        with pytest.raises(ProtocolError):
            read_replay(b"NOTMAGIC")


class TestGoldenReplay:
    def test_file_bytes(self, data_dir):
        raw = (data_dir / "golden_upload.rrcs").read_bytes()
        assert raw.startswith(REPLAY_MAGIC)
        assert len(raw) == 8 + 6 * 37 + 324

    def test_decode_and_apply(self, data_dir):
        packets = read_replay(data_dir / "golden_upload.rrcs")
        assert [p.flags for p in packets] == [0, 0, 0, 0, 1, 1]
        assert packets[-1].payload == null_chunk(64).payload
        server, new = golden_setup()
        receipt = server.receive_upload(packets, new, user=1)
        assert receipt == ReceiptSummary(stored_chunks=3, deduplicated_chunks=1, discarded_redundant=2,
                                         bytes_received=324, new_owner=True)
        assert server.owners(new.file_hash) == {1}
        assert new.file_hash.hex() == "3531baaeceebfabfd2ff39c9f863711d8ebb888de6159e2b6d085dfa54312f6c"

    def test_write_reproduces_golden(self, data_dir, tmp_path):
        packets = read_replay(data_dir / "golden_upload.rrcs")
        write_replay(tmp_path / "copy.rrcs", packets)
        assert (tmp_path / "copy.rrcs").read_bytes() == (data_dir / "golden_upload.rrcs").read_bytes()
