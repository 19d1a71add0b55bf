"""Sequential treatment-assignment generators and balance diagnostics.

Arms are labelled ``1..J``. Every generator is deterministic given its seed.
Independent substreams (per stratum, per replication) are derived from one
master seed via ``SeedSequence`` spawn keys, so results do not depend on the
order in which streams are consumed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .domain import RankCalError

__all__ = [
    "RandomizationScheme",
    "BalanceDiagnostic",
    "substream",
    "assign_simple",
    "assign_stratified_block",
    "assign_minimization",
    "assign",
    "balance_report",
]

SeedLike = Union[None, int, np.random.SeedSequence]
KINDS = ("simple", "stratified_block", "minimization")


def substream(seed: SeedLike, *key: int) -> np.random.SeedSequence:
    """Child seed sequence addressed by ``key`` under ``seed``."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy,
                                      spawn_key=tuple(seed.spawn_key) + tuple(key))
    return np.random.SeedSequence(seed, spawn_key=tuple(key))


def _rng(seed: SeedLike, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(substream(seed, *key)))


@dataclass(frozen=True)
class RandomizationScheme:
    """Parameters of one assignment generator.

    ``block_size`` is used by ``stratified_block`` and must make every
    ``block_size * pi_j`` a positive integer. ``p_mz`` is the probability
    that minimization picks an imbalance-minimizing arm; ``factor_weights``
    defaults to equal weights.
    """

    kind: str = "simple"
    pi: tuple = (0.5, 0.5)
    block_size: Optional[int] = None
    p_mz: float = 0.75
    factor_weights: Optional[tuple] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RankCalError(f"unknown randomization kind {self.kind!r}")
        pi = tuple(float(v) for v in self.pi)
        if len(pi) < 2 or any(v <= 0 for v in pi) or abs(sum(pi) - 1) > 1e-12:
            raise RankCalError("pi must have >= 2 positive entries summing to 1")
        object.__setattr__(self, "pi", pi)
        if self.kind == "stratified_block":
            if self.block_size is None or int(self.block_size) < 1:
                raise RankCalError("stratified_block needs a positive block_size")
            self.block_counts()
        if not 0.5 < self.p_mz <= 1:
            raise RankCalError("p_mz must lie in (0.5, 1]")
        if self.factor_weights is not None:
            w = tuple(float(v) for v in self.factor_weights)
            if any(v < 0 for v in w) or not any(w):
                raise RankCalError("factor weights must be >= 0 and not all zero")
            object.__setattr__(self, "factor_weights", w)

    @property
    def num_arms(self) -> int:
        return len(self.pi)

    def block_counts(self) -> np.ndarray:
        """Copies of each arm in one block."""
        raw = np.asarray(self.pi) * int(self.block_size)
        counts = np.rint(raw)
        if np.any(np.abs(raw - counts) > 1e-9) or np.any(counts < 1):
            raise RankCalError(
                f"block size {self.block_size} incompatible with pi {self.pi}: "
                f"block_size * pi = {raw.tolist()} is not a positive integer vector")
        return counts.astype(int)


@dataclass(frozen=True)
class BalanceDiagnostic:
    levels: tuple
    counts: np.ndarray  # shape (levels, J): n_zj
    max_deviation: float

    @property
    def stratum_sizes(self) -> np.ndarray:
        return self.counts.sum(axis=1)


def _seed(scheme: RandomizationScheme, seed: SeedLike) -> SeedLike:
    return scheme.seed if seed is None else seed


def assign_simple(n: int, scheme: RandomizationScheme,
                  seed: SeedLike = None) -> np.ndarray:
    """Independent draws with ``P(A_i = j) = pi_j``."""
    if n < 0:
        raise RankCalError("n must be >= 0")
    rng = _rng(_seed(scheme, seed), 0)
    return rng.choice(scheme.num_arms, size=n, p=scheme.pi) + 1


def assign_stratified_block(strata, scheme: RandomizationScheme,
                            seed: SeedLike = None) -> np.ndarray:
    """Permuted blocks within each stratum, units taken in arrival order.

    A trailing incomplete block is a full shuffled block truncated to the
    remaining units.
    """
    strata = np.asarray(strata)
    counts = scheme.block_counts()
    base = np.repeat(np.arange(1, scheme.num_arms + 1), counts)
    out = np.empty(strata.shape[0], dtype=np.int64)
    master = _seed(scheme, seed)
    for s, level in enumerate(np.unique(strata)):
        idx = np.flatnonzero(strata == level)
        nblocks = math.ceil(idx.size / base.size)
        rng = _rng(master, s)
        blocks = rng.permuted(np.tile(base, (nblocks, 1)), axis=1)
        out[idx] = blocks.ravel()[:idx.size]
    return out


def _factor_codes(levels) -> np.ndarray:
    arr = np.asarray(levels, dtype=object)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise RankCalError("minimization needs at least one factor")
    codes = np.empty(arr.shape, dtype=np.int64)
    for f in range(arr.shape[1]):
        col = np.array([str(v) for v in arr[:, f]])
        codes[:, f] = np.unique(col, return_inverse=True)[1]
    return codes


def assign_minimization(covariate_levels, scheme: RandomizationScheme,
                        seed: SeedLike = None) -> np.ndarray:
    """Pocock-Simon minimization with a biased coin.

    For each arriving unit, every candidate arm gets an imbalance score: the
    weighted sum over factors of the range of the (hypothetical) counts at
    the unit's level, each divided by ``pi``. The arm set with the lowest
    score is chosen with probability ``p_mz`` (uniformly within the set);
    otherwise a uniform pick among the other arms is made.
    """
    codes = _factor_codes(covariate_levels)
    n, m = codes.shape
    J = scheme.num_arms
    w = np.ones(m) if scheme.factor_weights is None else np.asarray(scheme.factor_weights)
    if w.size != m:
        raise RankCalError(f"{w.size} factor weights for {m} factors")
    inv_pi = 1 / np.asarray(scheme.pi)
    tables = [np.zeros((codes[:, f].max() + 1, J)) for f in range(m)]
    eye = np.eye(J)
    rng = _rng(_seed(scheme, seed), 0)
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        score = np.zeros(J)
        for f in range(m):
            hyp = (tables[f][codes[i, f]][None, :] + eye) * inv_pi
            score += w[f] * (hyp.max(axis=1) - hyp.min(axis=1))
        best = np.flatnonzero(np.isclose(score, score.min(), rtol=1e-12, atol=0))
        coin, pick = rng.random(2)
        if best.size == J or coin < scheme.p_mz:
            pool = best
        else:
            pool = np.setdiff1d(np.arange(J), best)
        arm = pool[int(pick * pool.size)]
        out[i] = arm + 1
        for f in range(m):
            tables[f][codes[i, f], arm] += 1
    return out


def assign(scheme: RandomizationScheme, n: Optional[int] = None, strata=None,
           factors=None, seed: SeedLike = None) -> np.ndarray:
    """Dispatch to the generator named by ``scheme.kind``."""
    if scheme.kind == "simple":
        if n is None:
            n = len(strata if strata is not None else factors)
        return assign_simple(n, scheme, seed)
    if scheme.kind == "stratified_block":
        if strata is None:
            raise RankCalError("stratified_block needs stratum labels")
        return assign_stratified_block(strata, scheme, seed)
    if factors is None:
        factors = strata
    if factors is None:
        raise RankCalError("minimization needs factor levels")
    return assign_minimization(factors, scheme, seed)


def balance_report(assignments, strata, pi: Sequence[float]) -> BalanceDiagnostic:
    """Per-stratum arm counts and the largest ``|n_zj / n_z - pi_j|``."""
    a = np.asarray(assignments)
    z = np.asarray(strata)
    if a.shape != z.shape:
        raise RankCalError(f"{a.size} assignments but {z.size} stratum labels")
    pi = np.asarray(pi, dtype=float)
    J = pi.size
    if a.size and (a.min() < 1 or a.max() > J):
        raise RankCalError("assignment label out of range")
    levels, inv = np.unique(z, return_inverse=True)
    counts = np.zeros((levels.size, J), dtype=np.int64)
    np.add.at(counts, (inv, a - 1), 1)
    n_z = counts.sum(axis=1, keepdims=True)
    dev = np.abs(counts / np.maximum(n_z, 1) - pi[None, :])
    return BalanceDiagnostic(tuple(levels.tolist()), counts,
                             float(dev.max()) if dev.size else 0.0)
