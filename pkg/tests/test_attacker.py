from fractions import Fraction

import numpy as np
import pytest

from rrcs.attacker import (
    MODE_EXACT,
    MODE_EXCLUDED,
    MODE_INDISTINGUISHABLE,
    AttackKnowledge,
    AttackScenario,
    ModelMismatch,
    build_variants,
    enumerate_leak,
    exact_leak,
    monte_carlo_leak,
    payroll_scenario,
    random_target,
    range_exclusion_infer,
    run_lri_attack,
    theoretical_leak,
)
from rrcs.schemes import DET_PAD, RRCS, SOURCE, SchemeConfig


class TestInference:
    def setup_method(self):
        self.known = AttackKnowledge(4, 1, SchemeConfig(RRCS, lam=1), trim=False)

    def test_feasible_sets(self):
        true_set, other_set = self.known.feasible()
        assert true_set == set(range(1, 7))
        assert other_set == set(range(2, 8))

    def test_exact_when_truth_unique(self):
        out = range_exclusion_infer([1, 3, 4], self.known, correct_index=0)
        assert out.candidate_set == {0} and out.mode == MODE_EXACT and out.identified

    def test_others_out_of_range(self):
        out = range_exclusion_infer([4, 7, 7], self.known, correct_index=0)
        assert out.identified

    def test_indistinguishable(self):
        out = range_exclusion_infer([3, 3, 4], self.known, correct_index=0)
        assert out.mode == MODE_INDISTINGUISHABLE and not out.identified

    def test_excluded(self):
        out = range_exclusion_infer([3, 3, 7], self.known, correct_index=0)
        assert out.candidate_set == {0, 1} and out.mode == MODE_EXCLUDED

    def test_mismatch(self):
        with pytest.raises(ModelMismatch):
            range_exclusion_infer([9, 3], self.known)
        with pytest.raises(ModelMismatch):
            range_exclusion_infer([7, 7], self.known)


class TestScenario:
    def test_variants(self, rng):
        target = random_target(10, 8192, rng)
        sc = AttackScenario(target, 4, 5, correct_index=2)
        vs = build_variants(sc)
        assert vs[2].file_hash == target.file_hash
        assert len({v.file_hash for v in vs}) == 5
        assert all(v.chunks[:4] == target.chunks[:4] for v in vs)

    def test_appended_needs_rng(self, rng):
        sc = AttackScenario(random_target(4, 8192, rng), 0, 2, appended_chunks=1)
        with pytest.raises(ValueError):
            build_variants(sc)
        vs = build_variants(sc, rng)
        assert all(v.n_chunks == 5 for v in vs)

    def test_m_floor(self, rng):
        with pytest.raises(ValueError):
            AttackScenario(random_target(4, 8192, rng), 0, 1)

    def test_payroll_source_leaks_salary(self):
        sc, cands = payroll_scenario(chunk_size=256, n_chunks=8)
        stats = run_lri_attack(sc, SchemeConfig(SOURCE, chunk_size_bytes=256), 5, candidates=cands)
        assert stats.identification_rate == 1.0

    def test_payroll_rrcs_full_duplicate(self):
        sc, cands = payroll_scenario(chunk_size=256, n_chunks=8)
        stats = run_lri_attack(sc, SchemeConfig(RRCS, chunk_size_bytes=256), 50, candidates=cands)
        assert stats.identified == 0


class TestLeakFormulas:
    def test_small_enumeration(self):
        e = enumerate_leak(1, 4, 1, 2)
        assert e["additive"] == theoretical_leak(1, 4, 1, 2, exact=True) == Fraction(1, 3)
        assert e["identified"] == exact_leak(SchemeConfig(RRCS, lam=1), 4, 1, 2, trim=False) == Fraction(11, 36)

    @pytest.mark.parametrize("lam,n,L,m", [(0.5, 6, 1, 3), (1, 5, 2, 2), (0.75, 7, 1, 3)])
    def test_enumeration_matches_exact(self, lam, n, L, m):
        e = enumerate_leak(lam, n, L, m, trim=True)
        assert e["identified"] == exact_leak(SchemeConfig(RRCS, lam=lam), n, L, m, trim=True)

    def test_monte_carlo_close(self):
        est = monte_carlo_leak(1, 20, 1, 2, 200_000, np.random.default_rng(0))
        assert abs(est.additive_rate - theoretical_leak(1, 20, 1, 2)) < 4 * est.additive_stderr

    def test_formula_preconditions(self):
        with pytest.raises(ValueError):
            theoretical_leak(1, 10, 0, 2)
        with pytest.raises(ValueError):
            theoretical_leak(1, 10, 1, 1)


class TestBaselines:
    def test_det_pad_broken_by_appending(self, rng):
        sc = AttackScenario(random_target(12, 8192, rng), 3, 4, appended_chunks=2)
        stats = run_lri_attack(sc, SchemeConfig(DET_PAD, det_pad_l=1), 20)
        assert stats.identification_rate == 1.0

    def test_det_pad_hides_without_appending(self, rng):
        sc = AttackScenario(random_target(12, 8192, rng), 3, 4)
        stats = run_lri_attack(sc, SchemeConfig(DET_PAD, det_pad_l=1), 20)
        assert stats.identified == 0
