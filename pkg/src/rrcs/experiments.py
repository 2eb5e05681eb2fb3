"""Repeated uploads of one file by many users (cumulative traffic curves)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from rrcs.attacker import random_target
from rrcs.schemes import (
    RRCS,
    RTS_CHUNK,
    RTS_FILE,
    SOURCE,
    TARGET,
    SchemeConfig,
    TrafficLedger,
    upload,
    upload_count_pmf,
)
from rrcs.server import Server

FIG8_SCHEMES = (SOURCE, TARGET, RTS_FILE, RTS_CHUNK, RRCS)


def expected_min_threshold(k: int, d: int) -> Fraction:
    """E[min(k, t)] for t uniform on [2, d]."""
    return sum((Fraction(min(k, t)) for t in range(2, d + 1)), Fraction(0)) / (d - 1)


def expected_rrcs_duplicate_chunks(n: int, lam) -> Fraction:
    """Mean chunks sent for a cross-user full duplicate, with the cap at ``n`` applied."""
    pmf = upload_count_pmf(SchemeConfig(RRCS, lam=lam), n, 0)
    return sum((u * p for u, p in pmf.items()), Fraction(0))


@dataclass
class Fig8Result:
    file_size: int
    chunk_size: int
    n_chunks: int
    k_max: int
    seeds: int
    lam: float
    d: int
    cumulative: dict[str, np.ndarray] = field(repr=False)
    per_upload: dict[str, np.ndarray] = field(repr=False)

    def mean(self, scheme: str) -> np.ndarray:
        return self.cumulative[scheme].mean(axis=0)

    def sem(self, scheme: str) -> np.ndarray:
        c = self.cumulative[scheme]
        return c.std(axis=0, ddof=1) / math.sqrt(c.shape[0]) if c.shape[0] > 1 else np.zeros(c.shape[1])

    def crossover(self, scheme: str = RRCS, against: str = RTS_FILE) -> int | None:
        """Smallest k from which the mean curve of ``scheme`` stays above ``against``."""
        above = self.mean(scheme) > self.mean(against)
        if not above[-1]:
            return None
        k = self.k_max
        while k > 1 and above[k - 2]:
            k -= 1
        return k

    def duplicate_upload_chunks(self, scheme: str = RRCS) -> tuple[float, float]:
        """Mean and standard error of chunks sent per upload after the first."""
        chunks = self.per_upload[scheme][:, 1:].ravel() / self.chunk_size
        return float(chunks.mean()), float(chunks.std(ddof=1) / math.sqrt(chunks.size))

    def rows(self) -> list[dict]:
        out = []
        for k in range(1, self.k_max + 1):
            row = {"k": k}
            for s in self.cumulative:
                row[f"{s}_mean_bytes"] = f"{self.mean(s)[k - 1]:.1f}"
                row[f"{s}_sem_bytes"] = f"{self.sem(s)[k - 1]:.1f}"
            out.append(row)
        return out


def run_fig8(file_size: int = 800_000, chunk_size: int = 8_000, k_max: int = 60, seeds: int = 200,
             schemes=FIG8_SCHEMES, lam: float = 0.5, d: int = 20, base_seed: int = 0,
             rts_fixed_threshold: int | None = None) -> Fig8Result:
    """Upload one file ``k_max`` times from distinct users, per scheme and seed."""
    n_chunks = -(-file_size // chunk_size)
    if n_chunks < 2:
        raise ValueError("the file must span at least two chunks")
    if file_size % chunk_size:
        raise ValueError("file_size must be a multiple of chunk_size")
    cumulative = {s: np.zeros((seeds, k_max)) for s in schemes}
    per_upload = {s: np.zeros((seeds, k_max)) for s in schemes}
    for i in range(seeds):
        seed = base_seed + i
        target = random_target(n_chunks, chunk_size, np.random.default_rng([seed, 8]))
        for s in schemes:
            config = SchemeConfig(s, lam=lam, d=d, seed=seed, chunk_size_bytes=chunk_size,
                                  rts_fixed_threshold=rts_fixed_threshold)
            server = Server(d, rts_fixed_threshold)
            ledger = TrafficLedger()
            for k in range(k_max):
                upload(target, k + 1, server, config, ledger, seq=k)
            sent = np.array([r.data_bytes for r in ledger], dtype=float)
            per_upload[s][i] = sent
            cumulative[s][i] = np.cumsum(sent)
    return Fig8Result(file_size, chunk_size, n_chunks, k_max, seeds, lam, d, cumulative, per_upload)
