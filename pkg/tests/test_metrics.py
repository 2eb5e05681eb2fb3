import math

import pytest

from rrcs.metrics import check_identity, compute_metrics
from rrcs.schemes import SCHEMES, SchemeConfig, replay_trace, TraceError
from rrcs.traces import SynthParams, generate_trace, trace_stats


@pytest.fixture(scope="module")
def small_trace():
    return generate_trace(SynthParams(n_users=8, n_unique_files=60, copy_p=0.5, mean_file_bytes=40_000, seed=11))


class TestMetrics:
    def test_endpoints(self, small_trace):
        s = small_trace.stats
        assert compute_metrics(s.total_bytes, s).re_ratio == 0
        assert compute_metrics(s.source_dedup_bytes, s).re_ratio == 1

    def test_identity(self, small_trace):
        s = small_trace.stats
        m = compute_metrics((s.total_bytes + s.source_dedup_bytes) // 2, s)
        assert check_identity(m)
        assert math.isclose(m.re_ratio, 0.5, abs_tol=1e-6)

    def test_no_redundancy(self, small_trace):
        ev = small_trace.events[0]
        s = trace_stats([ev])
        assert compute_metrics(s.total_bytes, s).re_ratio is None


class TestReplay:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_reports_deterministic(self, small_trace, scheme):
        cfg = SchemeConfig(scheme, seed=3)
        a = replay_trace(small_trace.events, cfg)
        b = replay_trace(small_trace.events, cfg)
        assert a.csv_row() == b.csv_row()
        assert a.n_uploads == len(small_trace)

    def test_seq_must_increase(self, small_trace):
        evs = small_trace.events
        bad = [evs[1], evs[0]]
        with pytest.raises(TraceError) as info:
            replay_trace(bad, SchemeConfig("source"))
        assert info.value.index == 1

    def test_rejects_non_events(self):
        with pytest.raises(TraceError):
            replay_trace(["nope"], SchemeConfig("source"))
