from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rrcs.attacker import random_target
from rrcs.chunking import DUPLICATE_PICK, ChunkingParams, chunk_file, null_chunk
from rrcs.schemes import (
    DET_PAD,
    RRCS,
    RTS_CHUNK,
    RTS_FILE,
    SCHEMES,
    SOURCE,
    STATE_CROSS_USER_FULL,
    STATE_SINGLE_USER_FULL,
    TARGET,
    SchemeConfig,
    TrafficLedger,
    ceil_mul,
    rrcs_h,
    rrcs_plan,
    upload,
    upload_count_pmf,
    upload_rng,
)
from rrcs.server import Server

LAMS = (0.25, 0.5, 0.75, 1.0)


class TestCeil:
    def test_exact_rational(self):
        # 0.1 * 30 is 3.0000000000000004 in floating point
        assert ceil_mul(0.1, 30) == 3
        assert ceil_mul(0.5, 7) == 4
        assert ceil_mul(Fraction(1, 3), 9) == 3


class TestPlan:
    def test_h_ranges(self):
        assert rrcs_h(10, 0, 0.5) == (1, 6)
        assert rrcs_h(10, 3, 0.5) == (0, 5)
        assert rrcs_h(10, 10, 0.5) == (0, 0)

    def test_single_chunk_direct(self, rng):
        p = rrcs_plan(1, 0, 1.0, rng)
        assert p.direct_upload and p.u == 1

    def test_trim(self):
        class Fixed:
            def integers(self, lo, hi):
                return hi - 1
        p = rrcs_plan(10, 8, 1.0, Fixed())
        assert p.r == 10 and p.r_prime == 2 and p.u == 10

    @settings(max_examples=300, deadline=None)
    @given(n=st.integers(1, 500), data=st.data(), lam=st.sampled_from(LAMS), seed=st.integers(0, 2**32))
    def test_properties(self, n, data, lam, seed):
        k = data.draw(st.integers(0, n))
        p = rrcs_plan(n, k, lam, np.random.default_rng(seed))
        if n >= 2:
            assert 1 <= p.u <= n
            assert p.h_full == (p.h_part[0] + 1, p.h_part[1] + 1)
            assert p.r in p.h_values()
            assert p.r_prime == min(p.r, n - k)
            assert p.u == k + p.r_prime

    @pytest.mark.parametrize("bad", [0, -0.5, 1.5])
    def test_lambda_range(self, bad, rng):
        with pytest.raises(ValueError):
            rrcs_plan(10, 0, bad, rng)


class TestPmf:
    def test_rrcs_pmf_sums_to_one(self):
        for k in (0, 3, 10):
            pmf = upload_count_pmf(SchemeConfig(RRCS, lam=0.5), 10, k)
            assert sum(pmf.values()) == 1
            assert max(pmf) <= 10

    def test_full_duplicate_support(self):
        pmf = upload_count_pmf(SchemeConfig(RRCS, lam=1), 4, 0, trim=False)
        assert pmf == {u: Fraction(1, 5) for u in range(1, 6)}

    def test_det_pad(self):
        assert upload_count_pmf(SchemeConfig(DET_PAD, det_pad_l=3), 10, 1) == {3: 1}
        assert upload_count_pmf(SchemeConfig(DET_PAD, det_pad_l=3), 10, 5) == {5: 1}


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SchemeConfig("nope")
        with pytest.raises(ValueError):
            SchemeConfig(RRCS, lam=0)
        with pytest.raises(ValueError):
            SchemeConfig(DET_PAD, det_pad_l=0)

    def test_rng_streams_independent(self):
        a = upload_rng(1, 2, 3, 4).integers(0, 2**32, 4)
        b = upload_rng(1, 2, 3, 5).integers(0, 2**32, 4)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, upload_rng(1, 2, 3, 4).integers(0, 2**32, 4))


def _two_users(scheme, **kw):
    target = random_target(20, 8192, np.random.default_rng(3))
    server = Server()
    ledger = TrafficLedger()
    config = SchemeConfig(scheme, **kw)
    upload(target, 0, server, config, ledger, seq=0)
    upload(target, 0, server, config, ledger, seq=1)
    upload(target, 1, server, config, ledger, seq=2)
    return list(ledger), server


class TestUploaders:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_first_upload_sends_whole_file(self, scheme):
        records, _ = _two_users(scheme)
        assert records[0].data_chunks == 20
        assert records[0].redundant_chunks == 0

    @pytest.mark.parametrize("scheme", [RTS_FILE, RTS_CHUNK, DET_PAD, RRCS, SOURCE])
    def test_single_user_repeat_is_free(self, scheme):
        records, _ = _two_users(scheme)
        assert records[1].state == STATE_SINGLE_USER_FULL
        assert records[1].data_bytes == 0

    def test_target_resends(self):
        records, _ = _two_users(TARGET)
        assert [r.data_chunks for r in records] == [20, 20, 20]

    def test_rrcs_cross_user_is_padding(self):
        records, server = _two_users(RRCS, lam=0.5)
        r = records[2]
        assert r.state == STATE_CROSS_USER_FULL
        assert 1 <= r.data_chunks <= 11 and r.redundant_chunks == r.data_chunks
        assert len(server.chunks) == 20

    def test_det_pad_pads_to_l(self):
        records, _ = _two_users(DET_PAD, det_pad_l=3)
        assert records[2].data_chunks == 3 and records[2].redundant_chunks == 3

    def test_duplicate_pick_sends_file_chunks(self):
        target = chunk_file(bytes(range(256)) * 64, ChunkingParams(1024))
        server = Server()
        config = SchemeConfig(RRCS, redundancy_strategy=DUPLICATE_PICK, chunk_size_bytes=1024)
        upload(target, 0, server, config)
        ledger = TrafficLedger()
        res = upload(target, 1, server, config, ledger)
        assert not res.null_pad_fallback
        assert ledger.records[0].redundant_chunks == res.u_chunks

    def test_null_pad_chunk_size_matches_config(self):
        target = random_target(5, 4096, np.random.default_rng(1))
        server = Server()
        config = SchemeConfig(RRCS, chunk_size_bytes=4096)
        upload(target, 0, server, config)
        res = upload(target, 1, server, config)
        assert res.data_bytes == res.u_chunks * 4096
        assert null_chunk(4096).fingerprint not in server.storage_fingerprint_set()
