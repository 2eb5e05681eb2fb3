import numpy as np
import pytest

from rrcs.chunking import ChunkingParams
from rrcs.traces import (
    PRESETS,
    SynthParams,
    TraceFormatError,
    generate_trace,
    ingest_directory,
    read_trace,
    source_dedup_bytes,
    write_trace,
)


class TestGenerator:
    def test_deterministic(self):
        p = SynthParams(n_users=10, n_unique_files=30, mean_file_bytes=50_000, seed=4)
        a, b = generate_trace(p), generate_trace(p)
        assert [(e.user, e.manifest.file_hash) for e in a] == [(e.user, e.manifest.file_hash) for e in b]

    def test_owners_distinct_and_seq(self):
        g = generate_trace(SynthParams(n_users=5, n_unique_files=50, copy_p=0.6, mean_file_bytes=20_000, seed=1))
        assert [e.seq for e in g] == list(range(len(g)))
        seen = set()
        for e in g:
            assert (e.file_id, e.user) not in seen
            seen.add((e.file_id, e.user))
        assert sum(g.copy_counts) == len(g)
        assert max(g.copy_counts) <= 5

    def test_user_cap_reported(self):
        g = generate_trace(SynthParams(n_users=2, n_unique_files=200, copy_p=0.9, mean_file_bytes=10_000, seed=2))
        assert g.stats.capped_files > 0

    def test_stats_identities(self):
        g = generate_trace(SynthParams(n_users=20, n_unique_files=100, mean_file_bytes=40_000,
                                       intra_file_similarity=0.5, seed=3))
        s = g.stats
        assert s.source_dedup_bytes == source_dedup_bytes(g.events) <= s.single_user_dedup_bytes <= s.total_bytes
        assert 0 < s.cross_user_redundancy_ratio < 1

    def test_geometric_tail(self):
        p = SynthParams(n_users=10_000, n_unique_files=20_000, copy_p=0.5, share_p=0.4, mean_file_bytes=8192,
                        size_sigma=0, seed=5)
        g = generate_trace(p)
        for got, want in zip(g.generator_fractions, p.expected_fractions()):
            assert abs(got - want) < 4 * np.sqrt(want * (1 - want) / 20_000) + 1e-9

    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_valid(self, name):
        assert PRESETS[name].expected_copies() > 1


class TestTraceFile:
    def test_round_trip(self, tmp_path):
        g = generate_trace(SynthParams(n_users=5, n_unique_files=20, mean_file_bytes=30_000, seed=9))
        write_trace(tmp_path / "t.trc", g.events)
        back = read_trace(tmp_path / "t.trc")
        assert [(e.seq, e.user, e.file_id, e.manifest.file_hash) for e in back] == \
            [(e.seq, e.user, e.file_id, e.manifest.file_hash) for e in g.events]

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x").write_bytes(b"garbage!!")
        with pytest.raises(TraceFormatError):
            read_trace(tmp_path / "x")

    def test_truncated(self, tmp_path):
        g = generate_trace(SynthParams(n_users=2, n_unique_files=2, mean_file_bytes=30_000, seed=9))
        write_trace(tmp_path / "t.trc", g.events)
        raw = (tmp_path / "t.trc").read_bytes()
        (tmp_path / "t.trc").write_bytes(raw[:-5])
        with pytest.raises(TraceFormatError):
            read_trace(tmp_path / "t.trc")


class TestIngest:
    def test_directory(self, tmp_path):
        (tmp_path / "alice").mkdir()
        (tmp_path / "bob").mkdir()
        (tmp_path / "alice" / "a.txt").write_bytes(b"x" * 200)
        (tmp_path / "bob" / "b.txt").write_bytes(b"x" * 200)
        (tmp_path / "bob" / "empty").write_bytes(b"")
        skipped = []
        events = ingest_directory(tmp_path, ChunkingParams(64), skipped=skipped)
        assert [e.user for e in events] == [0, 1]
        assert events[0].manifest.file_hash == events[1].manifest.file_hash
        assert skipped and skipped[0][0] == "bob/empty"
        single = ingest_directory(tmp_path, ChunkingParams(64), user_of="single")
        assert {e.user for e in single} == {0}
