"""Learn-the-remaining-information attack, with and without appended chunks.

The attacker knows a stored file except for one sensitive chunk, uploads
``m`` candidate versions from distinct accounts, and watches only the number
of data bytes each upload puts on the wire.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from rrcs.chunking import Chunk, FileManifest, Fingerprint, chunk_file, ChunkingParams
from rrcs.schemes import (
    RRCS,
    SchemeConfig,
    TrafficLedger,
    ceil_mul,
    rrcs_h,
    upload,
    upload_count_pmf,
)
from rrcs.server import Server

VICTIM = 0

MODE_EXACT = "exact"
MODE_EXCLUDED = "excluded-n"
MODE_INDISTINGUISHABLE = "indistinguishable"


class ModelMismatch(ValueError):
    """Observed traffic is impossible under the assumed scheme."""


@dataclass(frozen=True)
class AttackScenario:
    target: FileManifest
    sensitive_chunk_index: int
    m: int
    correct_index: int = 0
    appended_chunks: int = 0
    chunk_size: int = 8192

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if not 0 <= self.sensitive_chunk_index < self.target.n_chunks:
            raise ValueError("sensitive chunk index outside the target file")
        if not 0 <= self.correct_index < self.m:
            raise ValueError("correct index outside [0, m)")
        if self.appended_chunks < 0:
            raise ValueError("appended chunk count must be >= 0")

    @property
    def n(self) -> int:
        return self.target.n_chunks

    def describe(self) -> dict:
        return {
            "n_chunks": self.n,
            "target_bytes": self.target.size_bytes,
            "chunk_size": self.chunk_size,
            "sensitive_chunk_index": self.sensitive_chunk_index,
            "m": self.m,
            "correct_index": self.correct_index,
            "appended_chunks": self.appended_chunks,
        }


def random_target(n_chunks: int, chunk_size: int, rng: np.random.Generator, with_payloads: bool = False,
                  file_id: int = 0) -> FileManifest:
    if with_payloads:
        return chunk_file(rng.bytes(n_chunks * chunk_size), ChunkingParams(chunk_size), file_id)
    return FileManifest(file_id, tuple(Chunk(Fingerprint(rng.bytes(32)), chunk_size) for _ in range(n_chunks)))


def payroll_scenario(name: str = "Bob", employee_no: int = 4711, salary: int = 9000,
                     salaries: Sequence[int] = range(5000, 15001, 1000), chunk_size: int = 8192,
                     n_chunks: int = 100, appended_chunks: int = 0) -> tuple[AttackScenario, list[bytes]]:
    """The payroll example: one salary line hidden in an otherwise known document.

    Returns the scenario and the candidate sensitive-chunk payloads, one per
    salary value.
    """
    salaries = list(salaries)

    def sensitive(value: int) -> bytes:
        line = f"name={name};employee={employee_no};salary={value}\n".encode()
        return line.ljust(chunk_size, b" ")

    body = bytearray()
    for i in range(n_chunks):
        if i == n_chunks // 2:
            body += sensitive(salary)
        else:
            body += hashlib.sha256(f"payroll-filler-{i}".encode()).digest() * (chunk_size // 32)
            body += b"\n" * (chunk_size % 32)
    target = chunk_file(bytes(body), ChunkingParams(chunk_size))
    scenario = AttackScenario(target, n_chunks // 2, len(salaries), salaries.index(salary), appended_chunks,
                              chunk_size)
    return scenario, [sensitive(v) for v in salaries]


def _candidate_chunk(base: Chunk, candidate: int) -> Chunk:
    """A stand-in for the sensitive chunk holding a wrong guess."""
    tag = candidate.to_bytes(8, "little")
    if base.payload is not None:
        payload = hashlib.sha256(base.fingerprint + tag).digest()[:8] + base.payload[8:]
        return Chunk.from_payload(payload[:base.size_bytes])
    return Chunk(Fingerprint(hashlib.sha256(base.fingerprint + tag).digest()), base.size_bytes)


def build_variants(scenario: AttackScenario, rng: np.random.Generator | None = None,
                   candidates: Sequence[bytes] | None = None) -> list[FileManifest]:
    """The ``m`` candidate files; only ``correct_index`` equals the target.

    ``candidates`` supplies explicit sensitive-chunk payloads; otherwise wrong
    guesses are derived from the true chunk. Each variant gets its own
    ``appended_chunks`` fresh random chunks at the end.
    """
    x = scenario.target
    pos = scenario.sensitive_chunk_index
    base = x.chunks[pos]
    payload_mode = x.has_payloads
    if scenario.appended_chunks and rng is None:
        raise ValueError("appending fresh chunks needs a random generator")
    variants = []
    for i in range(scenario.m):
        if candidates is not None:
            sens = Chunk.from_payload(candidates[i])
        elif i == scenario.correct_index:
            sens = base
        else:
            sens = _candidate_chunk(base, i)
        chunks = list(x.chunks)
        chunks[pos] = sens
        for _ in range(scenario.appended_chunks):
            if payload_mode:
                chunks.append(Chunk.from_payload(rng.bytes(scenario.chunk_size)))
            else:
                chunks.append(Chunk(Fingerprint(rng.bytes(32)), scenario.chunk_size))
        variants.append(FileManifest(1000 + i, tuple(chunks)))
    if candidates is not None and variants[scenario.correct_index].file_hash != x.file_hash and not scenario.appended_chunks:
        raise ValueError("the candidate at correct_index does not reproduce the target")
    return variants


# -- inference ---------------------------------------------------------------

@dataclass(frozen=True)
class AttackKnowledge:
    """Public parameters the attacker reasons with."""

    n: int
    appended_chunks: int
    config: SchemeConfig
    trim: bool = True

    def feasible(self) -> tuple[frozenset[int], frozenset[int]]:
        """Data-chunk counts possible for the true file and for a wrong guess."""
        total = self.n + self.appended_chunks
        k_true = self.appended_chunks
        true_set = frozenset(upload_count_pmf(self.config, total, k_true, self.trim))
        other_set = frozenset(upload_count_pmf(self.config, total, k_true + 1, self.trim))
        return true_set, other_set


@dataclass(frozen=True)
class TrafficObservation:
    data_chunks: tuple[int, ...]
    data_bytes: tuple[int, ...] = ()

    @classmethod
    def from_ledger(cls, ledger: TrafficLedger, chunk_size: int) -> "TrafficObservation":
        sizes = tuple(r.data_bytes for r in ledger)
        return cls(tuple(-(-b // chunk_size) for b in sizes), sizes)


@dataclass(frozen=True)
class AttackOutcome:
    candidate_set: frozenset[int]
    mode: str
    correct_index: int | None = None

    @property
    def identified(self) -> bool:
        return self.correct_index is not None and self.candidate_set == {self.correct_index}


def range_exclusion_infer(obs: TrafficObservation | Sequence[int], known: AttackKnowledge,
                          correct_index: int | None = None) -> AttackOutcome:
    """Candidates ``i`` whose traffic fits "is the target" while every other fits "is not"."""
    counts = obs.data_chunks if isinstance(obs, TrafficObservation) else tuple(obs)
    true_set, other_set = known.feasible()
    for c in counts:
        if c not in true_set and c not in other_set:
            raise ModelMismatch(f"{c} data chunks is impossible under {known.config.scheme}")
    fits_true = [c in true_set for c in counts]
    misfits_other = sum(1 for c in counts if c not in other_set)
    candidates = frozenset(
        i for i, c in enumerate(counts)
        if fits_true[i] and misfits_other - (c not in other_set) == 0
    )
    if not candidates:
        raise ModelMismatch("no candidate is consistent with the observed traffic")
    if len(candidates) == 1:
        mode = MODE_EXACT
    elif len(candidates) == len(counts):
        mode = MODE_INDISTINGUISHABLE
    else:
        mode = MODE_EXCLUDED
    return AttackOutcome(candidates, mode, correct_index)


# -- attack campaign ---------------------------------------------------------

@dataclass
class AttackStats:
    trials: int
    identified: int
    excluded: int
    guess_successes: int
    mode_counts: dict[str, int] = field(default_factory=dict)

    @property
    def identification_rate(self) -> float:
        return self.identified / self.trials

    @property
    def exclusion_rate(self) -> float:
        return self.excluded / self.trials

    @property
    def guess_success_rate(self) -> float:
        return self.guess_successes / self.trials

    @property
    def stderr(self) -> float:
        r = self.identification_rate
        return math.sqrt(r * (1 - r) / self.trials)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(identification_rate=self.identification_rate, exclusion_rate=self.exclusion_rate,
                 guess_success_rate=self.guess_success_rate, stderr=self.stderr)
        return d


def run_lri_attack(scenario: AttackScenario, config: SchemeConfig, trials: int, seed: int | None = None,
                   candidates: Sequence[bytes] | None = None) -> AttackStats:
    """Repeat the attack on fresh servers that hold only the victim's file.

    Each trial uploads every variant exactly once, each from its own account.
    """
    seed = config.seed if seed is None else seed
    base = Server(config.d, config.rts_fixed_threshold)
    base.preload([scenario.target], VICTIM)
    known = AttackKnowledge(scenario.n, scenario.appended_chunks, config)
    fixed_variants = None if scenario.appended_chunks else build_variants(scenario, candidates=candidates)

    stats = AttackStats(trials, 0, 0, 0)
    for trial in range(trials):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial,))))
        variants = fixed_variants or build_variants(scenario, rng, candidates)
        server = base.clone()
        ledger = TrafficLedger()
        for i, variant in enumerate(variants):
            upload(variant, 1 + i, server, config, ledger, seq=i, rng=rng)
        obs = TrafficObservation.from_ledger(ledger, scenario.chunk_size)
        outcome = range_exclusion_infer(obs, known, scenario.correct_index)
        stats.identified += outcome.identified
        stats.excluded += outcome.mode == MODE_EXCLUDED
        stats.mode_counts[outcome.mode] = stats.mode_counts.get(outcome.mode, 0) + 1
        guess = sorted(outcome.candidate_set)[int(rng.integers(len(outcome.candidate_set)))]
        stats.guess_successes += guess == scenario.correct_index
    return stats


# -- leak probabilities ------------------------------------------------------

def leak_q(lam, n: int, appended: int) -> int:
    return ceil_mul(lam, n + appended) + 1


def theoretical_leak(lam, n: int, appended: int, m: int, exact: bool = False) -> float | Fraction:
    """Closed-form leak probability ``1/q + (1/q)^(m-1)``, ``q = ceil(lam (n+L)) + 1``.

    The two leak events are added without removing their overlap.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if appended < 1:
        raise ValueError("the closed form needs at least one appended chunk")
    q = leak_q(lam, n, appended)
    value = Fraction(1, q) + Fraction(1, q) ** (m - 1)
    return value if exact else float(value)


def exact_leak(config: SchemeConfig, n: int, appended: int, m: int, trim: bool = True) -> Fraction:
    """Identification probability of the range-exclusion rule, from exact upload-count laws.

    The true file is identified when its count is impossible for a wrong
    guess, or when every wrong guess shows a count impossible for the truth.
    """
    total = n + appended
    pmf_true = upload_count_pmf(config, total, appended, trim)
    pmf_other = upload_count_pmf(config, total, appended + 1, trim)
    true_set, other_set = set(pmf_true), set(pmf_other)
    p_true_hidden = sum((p for u, p in pmf_true.items() if u in other_set), Fraction(0))
    p_other_excluded = sum((p for u, p in pmf_other.items() if u not in true_set), Fraction(0))
    return 1 - p_true_hidden * (1 - p_other_excluded ** (m - 1))


@dataclass(frozen=True)
class LeakEstimate:
    trials: int
    identified: int
    event1: int
    event2: int
    overlap: int
    additive_var: float = 0.0

    @property
    def rate(self) -> float:
        return self.identified / self.trials

    @property
    def stderr(self) -> float:
        r = self.rate
        return math.sqrt(r * (1 - r) / self.trials)

    @property
    def additive_rate(self) -> float:
        """(event1 + event2) / trials, the estimator matching the closed form."""
        return (self.event1 + self.event2) / self.trials

    @property
    def additive_stderr(self) -> float:
        return math.sqrt(self.additive_var / self.trials)

    def to_dict(self) -> dict:
        return {**asdict(self), "rate": self.rate, "stderr": self.stderr,
                "additive_rate": self.additive_rate, "additive_stderr": self.additive_stderr}


def _membership(values: frozenset[int], size: int) -> np.ndarray:
    mask = np.zeros(size, dtype=bool)
    mask[list(values)] = True
    return mask


def monte_carlo_leak(lam, n: int, appended: int, m: int, trials: int, rng: np.random.Generator,
                     trim: bool = False, batch: int = 200_000) -> LeakEstimate:
    """Sample redundant-chunk draws for the ``m`` variants and apply the range-exclusion rule.

    Event 1: the true file's count is impossible for a wrong guess. Event 2:
    every wrong guess shows a count impossible for the truth. A trial where
    both happen counts once in ``identified`` and once in ``overlap``.

    With ``trim=False`` the counts are ``K + R`` as in the closed-form
    analysis; ``trim=True`` also applies the cap of ``n + appended`` chunks.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    total = n + appended
    config = SchemeConfig(RRCS, lam=lam)
    known = AttackKnowledge(n, appended, config, trim)
    true_set, other_set = known.feasible()
    size = max(true_set | other_set) + 2
    true_mask = _membership(true_set, size)
    other_mask = _membership(other_set, size)
    k_true, k_other = appended, appended + 1
    lo_t, hi_t = rrcs_h(total, k_true, lam)
    lo_o, hi_o = rrcs_h(total, k_other, lam)

    identified = e1 = e2 = both = 0
    sum_x = sum_x2 = 0.0
    done = 0
    while done < trials:
        b = min(batch, trials - done)
        r_true = rng.integers(lo_t, hi_t + 1, size=b)
        r_other = rng.integers(lo_o, hi_o + 1, size=(b, m - 1))
        if trim:
            r_true = np.minimum(r_true, total - k_true)
            r_other = np.minimum(r_other, total - k_other)
        u_true = k_true + r_true
        u_other = k_other + r_other
        ev1 = ~other_mask[u_true]
        ev2 = (~true_mask[u_other]).all(axis=1)
        x = ev1.astype(np.int64) + ev2
        identified += int((ev1 | ev2).sum())
        e1 += int(ev1.sum())
        e2 += int(ev2.sum())
        both += int((ev1 & ev2).sum())
        sum_x += float(x.sum())
        sum_x2 += float((x * x).sum())
        done += b
    mean = sum_x / trials
    var = max(sum_x2 / trials - mean * mean, 0.0)
    return LeakEstimate(trials, identified, e1, e2, both, var)


def enumerate_leak(lam, n: int, appended: int, m: int, trim: bool = False) -> dict[str, Fraction]:
    """Exhaustive check over every joint draw, running :func:`range_exclusion_infer` on each."""
    total = n + appended
    config = SchemeConfig(RRCS, lam=lam)
    known = AttackKnowledge(n, appended, config, trim)
    true_set, other_set = known.feasible()
    k_true, k_other = appended, appended + 1
    h_true = range(rrcs_h(total, k_true, lam)[0], rrcs_h(total, k_true, lam)[1] + 1)
    h_other = range(rrcs_h(total, k_other, lam)[0], rrcs_h(total, k_other, lam)[1] + 1)

    def count(k, r):
        return k + (min(r, total - k) if trim else r)

    cases = identified = e1 = e2 = 0
    for r_true in h_true:
        for r_others in itertools.product(h_other, repeat=m - 1):
            obs = [count(k_true, r_true)] + [count(k_other, r) for r in r_others]
            outcome = range_exclusion_infer(obs, known, correct_index=0)
            cases += 1
            identified += outcome.identified
            e1 += obs[0] not in other_set
            e2 += all(o not in true_set for o in obs[1:])
    return {
        "cases": Fraction(cases),
        "identified": Fraction(identified, cases),
        "event1": Fraction(e1, cases),
        "event2": Fraction(e2, cases),
        "additive": Fraction(e1 + e2, cases),
    }


def rts_second_upload_leak(d: int, keys: int, seed: int = 0, victim_first: bool = True,
                           chunk_size: int = 8192, n_chunks: int = 2) -> tuple[int, int]:
    """Count keys for which an attacker's second upload of a file sends nothing.

    With ``victim_first`` the file is already held by another user before the
    attacker's two uploads. Returns ``(zero_traffic_keys, keys)``.
    """
    from rrcs.schemes import RTS_FILE

    config = SchemeConfig(RTS_FILE, d=d, seed=seed, chunk_size_bytes=chunk_size)
    rng = np.random.default_rng(seed)
    zero = 0
    for key in range(keys):
        server = Server(d)
        target = random_target(n_chunks, chunk_size, rng, file_id=key)
        if victim_first:
            upload(target, VICTIM, server, config, None, seq=0, rng=rng)
        upload(target, 1, server, config, None, seq=1, rng=rng)
        second = upload(target, 2, server, config, None, seq=2, rng=rng)
        zero += second.data_bytes == 0
    return zero, keys
