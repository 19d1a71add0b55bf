"""Core data model: trial data, design constants, estimate reports.

All containers are frozen dataclasses holding read-only numpy arrays, so
they can be shared between threads and worker processes without copying
semantics getting in the way.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "RankCalError",
    "TrialDataError",
    "TrialData",
    "DesignSpec",
    "EstimateReport",
    "ValidationSummary",
    "validate_trial",
    "METHODS",
    "SMALL_GROUP_WARNING",
]

METHODS = ("unadjusted_u", "adjusted_u", "restricted_adjusted_u", "mean_difference")

# Group size below which asymptotic inference is flagged as shaky.
SMALL_GROUP_WARNING = 20


class RankCalError(ValueError):
    """Base class for all errors raised by this package."""


class TrialDataError(RankCalError):
    """Structural violation of the trial data or design invariants."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrialData:
    """Aligned per-unit columns for one trial.

    Parameters
    ----------
    treatments : array of int, shape (n,)
        Arm label of every unit, in ``1..num_treatments``.
    outcomes : array of float, shape (n,)
        Observed outcome of every unit.
    covariates : array of float, shape (n, p) or (n,)
        Baseline covariates; a 1-d array is treated as ``p = 1``.
    num_treatments : int
        Number of arms ``J >= 2``.
    strata : array, shape (n,), optional
        Discrete stratum labels used by the randomizer, if any.
    """

    treatments: np.ndarray
    outcomes: np.ndarray
    covariates: np.ndarray
    num_treatments: int
    strata: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.asarray(self.treatments)
        if a.ndim != 1:
            raise TrialDataError("treatments must be one-dimensional")
        if a.size and not np.all(np.equal(np.mod(a, 1), 0)):
            raise TrialDataError("treatment labels must be integers")
        a = a.astype(np.int64)
        y = np.asarray(self.outcomes, dtype=float)
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        n = a.shape[0]
        if n == 0:
            raise TrialDataError("trial has no units")
        if y.shape != (n,):
            raise TrialDataError(f"outcomes has length {y.size}, expected {n}")
        if x.ndim != 2 or x.shape[0] != n:
            raise TrialDataError(f"covariates has {x.shape[0]} rows, expected {n}")
        if x.shape[1] < 1:
            raise TrialDataError("at least one covariate column is required")
        J = int(self.num_treatments)
        if J < 2:
            raise TrialDataError("num_treatments must be >= 2")
        bad = (a < 1) | (a > J)
        if bad.any():
            raise TrialDataError(
                f"label out of range: {int(a[bad][0])} not in 1..{J}")
        if not np.all(np.isfinite(y)):
            raise TrialDataError("outcomes contain non-finite values")
        if not np.all(np.isfinite(x)):
            raise TrialDataError("covariates contain non-finite values")
        z = self.strata
        if z is not None:
            z = np.asarray(z)
            if z.shape != (n,):
                raise TrialDataError(f"strata has length {z.size}, expected {n}")
            z = _readonly(z)
        object.__setattr__(self, "treatments", _readonly(a))
        object.__setattr__(self, "outcomes", _readonly(y))
        object.__setattr__(self, "covariates", _readonly(x))
        object.__setattr__(self, "num_treatments", J)
        object.__setattr__(self, "strata", z)

    @property
    def n(self) -> int:
        return self.treatments.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def group_sizes(self) -> np.ndarray:
        """Counts ``n_1..n_J`` as an array of length J."""
        return np.bincount(self.treatments, minlength=self.num_treatments + 1)[1:]

    def mask(self, arm: int) -> np.ndarray:
        return self.treatments == arm

    def group_outcomes(self, arm: int) -> np.ndarray:
        return self.outcomes[self.treatments == arm]

    def group_covariates(self, arm: int) -> np.ndarray:
        return self.covariates[self.treatments == arm]


@dataclass(frozen=True)
class DesignSpec:
    """Known allocation proportions and the ordered pair being compared."""

    target_proportions: tuple
    pair: tuple = (1, 2)

    def __post_init__(self):
        pi = tuple(float(v) for v in self.target_proportions)
        if len(pi) < 2:
            raise TrialDataError("need at least two allocation proportions")
        if any(not np.isfinite(v) or v <= 0 for v in pi):
            raise TrialDataError("all allocation proportions must be > 0")
        if abs(sum(pi) - 1.0) > 1e-12:
            raise TrialDataError(f"allocation proportions sum to {sum(pi)!r}, not 1")
        j, k = (int(v) for v in self.pair)
        J = len(pi)
        if j == k:
            raise TrialDataError("pair must name two different treatments")
        if not (1 <= j <= J and 1 <= k <= J):
            raise TrialDataError(f"pair {(j, k)} outside 1..{J}")
        object.__setattr__(self, "target_proportions", pi)
        object.__setattr__(self, "pair", (j, k))

    @classmethod
    def uniform(cls, J: int, pair=(1, 2)) -> "DesignSpec":
        # 1/J repeated does not always sum to exactly 1 in floating point
        pi = [1.0 / J] * J
        pi[-1] = 1.0 - sum(pi[:-1])
        return cls(tuple(pi), pair)

    @classmethod
    def empirical(cls, data: TrialData, pair=(1, 2)) -> "DesignSpec":
        """Plug in ``n_j / n`` for the proportions.

        Opt-in only: the asymptotics treat the proportions as known design
        constants, so this emits a warning.
        """
        warnings.warn("allocation proportions estimated as n_j/n instead of "
                      "taken from the design", stacklevel=2)
        counts = data.group_sizes().astype(float)
        if np.any(counts == 0):
            raise TrialDataError("cannot estimate proportions with an empty arm")
        pi = counts / counts.sum()
        pi[-1] = 1.0 - pi[:-1].sum()
        return cls(tuple(pi), pair)

    @property
    def num_treatments(self) -> int:
        return len(self.target_proportions)

    @property
    def pi_j(self) -> float:
        return self.target_proportions[self.pair[0] - 1]

    @property
    def pi_k(self) -> float:
        return self.target_proportions[self.pair[1] - 1]

    def with_pair(self, pair) -> "DesignSpec":
        return DesignSpec(self.target_proportions, tuple(pair))


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate, standard error and normal-theory interval."""

    point: float
    std_error: float
    ci_low: float
    ci_high: float
    method: str
    alpha: float = 0.05
    floored: bool = False
    note: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise RankCalError(f"unknown method {self.method!r}")
        if not self.std_error >= 0:
            raise RankCalError("std_error must be >= 0")

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "std_error": self.std_error,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "method": self.method,
            "alpha": self.alpha,
            "floored": self.floored,
            "note": self.note,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateReport":
        return cls(**d)


@dataclass(frozen=True)
class ValidationSummary:
    group_sizes: dict
    n_tie_pairs: int
    covariate_rank: int
    flags: tuple = ()
    notes: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.flags


def _count_tie_pairs(y: np.ndarray) -> int:
    _, counts = np.unique(y, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _strata_in_span(strata: np.ndarray, x: np.ndarray) -> bool:
    """True when every stratum indicator is a linear function of [1, X]."""
    levels, inv = np.unique(strata, return_inverse=True)
    if levels.size <= 1:
        return True
    onehot = np.eye(levels.size)[inv]
    design = np.column_stack([np.ones(x.shape[0]), x])
    coef, *_ = np.linalg.lstsq(design, onehot, rcond=None)
    resid = onehot - design @ coef
    return float(np.max(np.abs(resid))) < 1e-8


def validate_trial(data: TrialData, design: DesignSpec,
                   strata_used: bool = True) -> ValidationSummary:
    """Check a dataset against a design before any statistic is computed.

    Structural problems raise :class:`TrialDataError`. Conditions that
    weaken the asymptotics without invalidating the computation are
    returned as flags: ``outcome_ties``, ``small_group`` (an arm of the
    pair with fewer than two units) and ``strata_not_in_covariates``.
    """
    if design.num_treatments != data.num_treatments:
        raise TrialDataError(
            f"design has {design.num_treatments} arms, data has {data.num_treatments}")
    sizes = data.group_sizes()
    j, k = design.pair
    for arm in (j, k):
        if sizes[arm - 1] == 0:
            raise TrialDataError(f"treatment group {arm} is empty")

    flags = []
    notes = []
    ties = _count_tie_pairs(data.outcomes)
    if ties:
        flags.append("outcome_ties")
    if min(sizes[j - 1], sizes[k - 1]) < 2:
        flags.append("small_group")
    if min(sizes[j - 1], sizes[k - 1]) < SMALL_GROUP_WARNING:
        notes.append(f"group size below {SMALL_GROUP_WARNING}; "
                     "normal approximations may be poor")
    if strata_used and data.strata is not None:
        if not _strata_in_span(data.strata, data.covariates):
            flags.append("strata_not_in_covariates")
    xc = data.covariates - data.covariates.mean(axis=0)
    rank = int(np.linalg.matrix_rank(xc)) if data.n > 1 else 0
    if rank < data.p:
        notes.append(f"centered covariates have rank {rank} < p={data.p}")
    return ValidationSummary(
        group_sizes={i + 1: int(c) for i, c in enumerate(sizes)},
        n_tie_pairs=ties,
        covariate_rank=rank,
        flags=tuple(flags),
        notes=tuple(notes),
    )
