"""Monte Carlo study of the mean difference, U and calibrated U.

Data-generating process: correlated standard-normal covariates, arms from a
randomization scheme, and outcome ``a (A - 1) + c'X + noise`` with normal or
double-exponential noise. Each replication draws from its own substream of
the master seed, so a study is reproducible bit for bit whatever the number
of worker processes.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import stats

from .calibration import fit_calibration
from .domain import DesignSpec, RankCalError, TrialData
from .inference import (TestConfig, t_test_baseline, wmw_test_adjusted,
                        wmw_test_unadjusted)
from .randomization import RandomizationScheme, assign, substream

__all__ = [
    "Scenario",
    "MetricsRow",
    "StudyResult",
    "ReplicationError",
    "generate_dataset",
    "theta_truth",
    "run_study",
    "format_table",
    "ESTIMATORS",
]

ESTIMATORS = ("mean_diff", "u", "u_adjusted")
FAMILIES = ("normal", "double_exponential")
DEFAULT_NOISE_VARIANCE = {"normal": 0.25, "double_exponential": 0.5}


class ReplicationError(RankCalError):
    def __init__(self, message, replication, seed):
        super().__init__(message)
        self.replication = replication
        self.seed = seed


@dataclass(frozen=True)
class Scenario:
    """One cell of a simulation table.

    Defaults describe the reference design: four arms with equal
    allocation, two covariates with correlation 0.3 and coefficients
    (0.3, 0.3), comparison of arms 1 and 2 at level 0.05. Strata for
    covariate-adaptive schemes are the population quartiles of the first
    covariate.
    """

    outcome_family: str = "normal"
    effect_a: float = 0.0
    n: int = 400
    replications: int = 2000
    seed: int = 20240101
    randomizer: str = "simple"
    block_size: int = 8
    p_mz: float = 0.75
    rho: float = 0.3
    coefficients: tuple = (0.3, 0.3)
    noise_variance: Optional[float] = None
    num_treatments: int = 4
    pi: Optional[tuple] = None
    pair: tuple = (1, 2)
    alpha: float = 0.05
    num_strata: int = 4

    def __post_init__(self):
        errors = self.problems()
        if errors:
            raise RankCalError("invalid scenario: " + "; ".join(errors))
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        object.__setattr__(self, "pair", tuple(int(v) for v in self.pair))
        if self.noise_variance is None:
            object.__setattr__(self, "noise_variance",
                               DEFAULT_NOISE_VARIANCE[self.outcome_family])
        if self.pi is None:
            object.__setattr__(self, "pi",
                               DesignSpec.uniform(self.num_treatments).target_proportions)
        else:
            object.__setattr__(self, "pi", tuple(float(v) for v in self.pi))

    def problems(self) -> list:
        """Every constraint violation, not just the first."""
        out = []
        if self.outcome_family not in FAMILIES:
            out.append(f"outcome_family must be one of {FAMILIES}")
        if self.noise_variance is not None and not self.noise_variance > 0:
            out.append("noise_variance must be > 0")
        if not (isinstance(self.replications, int) and self.replications >= 1):
            out.append("replications must be an integer >= 1")
        if not (isinstance(self.n, int) and self.n >= 8):
            out.append("n must be an integer >= 8")
        if not -1 < self.rho < 1:
            out.append("rho must lie in (-1, 1)")
        if len(self.coefficients) < 1:
            out.append("coefficients must be non-empty")
        if self.randomizer not in ("simple", "stratified_block", "minimization"):
            out.append("randomizer must be simple, stratified_block or minimization")
        if self.num_treatments < 2:
            out.append("num_treatments must be >= 2")
        if self.pi is not None and len(self.pi) != self.num_treatments:
            out.append("pi must have num_treatments entries")
        if not 0 < self.alpha < 0.5:
            out.append("alpha must lie in (0, 0.5)")
        if self.num_strata < 1:
            out.append("num_strata must be >= 1")
        if len(self.pair) != 2:
            out.append("pair must have two entries")
        return out

    @property
    def design(self) -> DesignSpec:
        return DesignSpec(self.pi, self.pair)

    @property
    def covariance(self) -> np.ndarray:
        p = len(self.coefficients)
        s = np.full((p, p), self.rho)
        np.fill_diagonal(s, 1.0)
        return s

    @property
    def scheme(self) -> RandomizationScheme:
        return RandomizationScheme(
            kind=self.randomizer, pi=self.pi,
            block_size=self.block_size if self.randomizer == "stratified_block" else None,
            p_mz=self.p_mz)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coefficients"] = list(self.coefficients)
        d["pi"] = list(self.pi)
        d["pair"] = list(self.pair)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise RankCalError(f"unknown scenario keys: {', '.join(unknown)}")
        d = dict(d)
        for key in ("coefficients", "pi", "pair"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    AB: float
    SD: Optional[float]
    SE: float
    CP: float
    P: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StudyResult:
    scenario: Scenario
    rows: tuple
    truth: dict
    raw: np.ndarray = field(repr=False, compare=False)

    def row(self, estimator: str) -> MetricsRow:
        for r in self.rows:
            if r.estimator == estimator:
                return r
        raise KeyError(estimator)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario.to_dict(),
                "truth": dict(self.truth),
                "rows": [r.to_dict() for r in self.rows]}


def _noise(rng, family, variance, size):
    if family == "normal":
        return rng.normal(0.0, math.sqrt(variance), size)
    # Laplace variance is 2 b^2
    return rng.laplace(0.0, math.sqrt(variance / 2), size)


def stratum_of(scenario: Scenario, x_first: np.ndarray) -> np.ndarray:
    """Equal-probability categories of the first covariate (population cuts)."""
    cuts = stats.norm.ppf(np.arange(1, scenario.num_strata) / scenario.num_strata)
    return np.searchsorted(cuts, x_first, side="right")


def generate_dataset(scenario: Scenario, replication: int) -> TrialData:
    ss = substream(scenario.seed, replication)
    rng_x = np.random.Generator(np.random.PCG64(substream(ss, 0)))
    rng_y = np.random.Generator(np.random.PCG64(substream(ss, 2)))
    p = len(scenario.coefficients)
    chol = np.linalg.cholesky(scenario.covariance)
    x = rng_x.standard_normal((scenario.n, p)) @ chol.T
    strata = stratum_of(scenario, x[:, 0])
    a = assign(scenario.scheme, n=scenario.n, strata=strata, seed=substream(ss, 1))
    mean = scenario.effect_a * (a - 1) + x @ np.asarray(scenario.coefficients)
    y = mean + _noise(rng_y, scenario.outcome_family, scenario.noise_variance, scenario.n)
    return TrialData(a, y, x, scenario.num_treatments, strata)


@lru_cache(maxsize=64)
def _theta_cached(family, shift, coefficients, rho, noise_variance, draws, seed, chunk):
    p = len(coefficients)
    s = np.full((p, p), rho)
    np.fill_diagonal(s, 1.0)
    chol = np.linalg.cholesky(s)
    c = np.asarray(coefficients)
    rng = np.random.Generator(np.random.PCG64(seed))
    hits = 0
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        # two independent units, one per arm
        xj = rng.standard_normal((m, p)) @ chol.T
        xk = rng.standard_normal((m, p)) @ chol.T
        yj = xj @ c + _noise(rng, family, noise_variance, m)
        yk = shift + xk @ c + _noise(rng, family, noise_variance, m)
        hits += int(np.count_nonzero(yj <= yk))
        done += m
    return hits / draws


def theta_truth(scenario: Scenario, draws: int = 10_000_000, seed: int = 12345,
                chunk: int = 1_000_000) -> float:
    """Monte Carlo value of ``P(Y_j <= Y_k)`` over the marginal outcome laws.

    Covariates are drawn independently for the two units, so this is the
    unconditional probability the U statistic estimates. Cached per
    scenario parameters.
    """
    j, k = scenario.pair
    shift = scenario.effect_a * (k - j)
    return _theta_cached(scenario.outcome_family, float(shift),
                         tuple(scenario.coefficients), float(scenario.rho),
                         float(scenario.noise_variance), int(draws), int(seed),
                         int(chunk))


def _replicate(scenario: Scenario, rep: int, truths) -> np.ndarray:
    data = generate_dataset(scenario, rep)
    design = scenario.design
    cfg = TestConfig(alpha=scenario.alpha)
    fit = fit_calibration(data, design)
    reports = (t_test_baseline(data, design, cfg),
               wmw_test_unadjusted(data, design, cfg),
               wmw_test_adjusted(data, design, cfg, fit=fit))
    out = np.empty((3, 4))
    for i, (rep_, truth) in enumerate(zip(reports, truths)):
        est = rep_.estimate
        out[i] = (est.point, est.std_error,
                  float(est.ci_low <= truth <= est.ci_high), float(rep_.reject))
    return out


def _run_chunk(args):
    scenario, start, stop, truths = args
    out = np.empty((stop - start, 3, 4))
    for r in range(start, stop):
        try:
            out[r - start] = _replicate(scenario, r, truths)
        except Exception as exc:  # noqa: BLE001 - re-raised with context
            raise ReplicationError(
                f"replication {r} failed (master seed {scenario.seed}): {exc}",
                r, scenario.seed) from exc
    return out


def _mean(values) -> float:
    return math.fsum(values) / len(values)


def _aggregate(raw: np.ndarray, truths) -> tuple:
    R = raw.shape[0]
    rows = []
    for i, name in enumerate(ESTIMATORS):
        est = raw[:, i, 0].tolist()
        m = _mean(est)
        sd = (math.sqrt(math.fsum((e - m) ** 2 for e in est) / (R - 1))
              if R > 1 else None)
        rows.append(MetricsRow(name, m - truths[i], sd, _mean(raw[:, i, 1].tolist()),
                               _mean(raw[:, i, 2].tolist()), _mean(raw[:, i, 3].tolist())))
    return tuple(rows)


def run_study(scenario: Scenario, truth: Optional[float] = None,
              threads: Optional[int] = 1, chunk_size: int = 100) -> StudyResult:
    """Run all replications and summarize them as AB, SD, SE, CP, P.

    Parameters
    ----------
    truth : float, optional
        ``theta_jk`` used for bias and coverage of U and calibrated U.
        Computed by :func:`theta_truth` when omitted (exactly 1/2 if the
        effect is zero).
    threads : int, optional
        Number of worker processes; ``None`` uses every available core.
    """
    j, k = scenario.pair
    if truth is None:
        truth = 0.5 if scenario.effect_a == 0 else theta_truth(scenario)
    mean_truth = scenario.effect_a * (j - k)
    truths = (mean_truth, truth, truth)
    R = scenario.replications
    bounds = [(s, min(s + chunk_size, R)) for s in range(0, R, chunk_size)]
    jobs = [(scenario, a, b, truths) for a, b in bounds]
    workers = (os.cpu_count() or 1) if threads is None else max(1, int(threads))
    if workers == 1 or len(jobs) == 1:
        parts = [_run_chunk(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, jobs))
    raw = np.concatenate(parts, axis=0)
    return StudyResult(scenario, _aggregate(raw, truths),
                       {"mean_diff": mean_truth, "theta": truth}, raw)


def format_table(results) -> str:
    """Aligned text: one block of AB SD SE CP P per randomizer, side by side."""
    if isinstance(results, StudyResult):
        results = [results]
    by_cell = {}
    order = []
    for res in results:
        sc = res.scenario
        key = (sc.outcome_family, sc.effect_a, sc.n)
        if key not in by_cell:
            by_cell[key] = {}
            order.append(key)
        by_cell[key][sc.randomizer] = res
    randomizers = []
    for res in results:
        if res.scenario.randomizer not in randomizers:
            randomizers.append(res.scenario.randomizer)

    def num(v):
        return "    NA" if v is None else f"{v:6.3f}"

    head = f"{'a':>5} {'n':>5} {'estimator':<11}"
    for r in randomizers:
        head += f" | {r:^34}"
    sub = " " * len(f"{'a':>5} {'n':>5} {'estimator':<11}")
    for _ in randomizers:
        sub += " | " + " ".join(f"{c:>6}" for c in ("AB", "SD", "SE", "CP", "P"))
    lines = [head, sub, "-" * len(sub)]
    for key in order:
        fam, a, n = key
        for i, name in enumerate(ESTIMATORS):
            prefix = f"{a:5.2f} {n:5d}" if i == 0 else " " * 11
            line = f"{prefix} {name:<11}"
            for r in randomizers:
                res = by_cell[key].get(r)
                if res is None:
                    line += " | " + " " * 34
                    continue
                row = res.row(name)
                line += " | " + " ".join(num(v) for v in
                                         (row.AB, row.SD, row.SE, row.CP, row.P))
            lines.append(line)
    return "\n".join(lines)
