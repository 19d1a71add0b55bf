"""Pitman asymptotic relative efficiencies under simple randomization.

Only closed forms; a custom family is described by its variance and
``int f^2`` rather than a density, so no quadrature is involved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import RankCalError

__all__ = [
    "DistributionSpec",
    "AREReport",
    "DominanceReport",
    "are_wmw_vs_t",
    "are_adjusted_vs_unadjusted",
    "are_report",
    "dominance_check",
    "HODGES_LEHMANN_BOUND",
]

# infimum of the WMW-vs-t efficiency over all continuous densities
HODGES_LEHMANN_BOUND = 0.864

FAMILIES = ("normal", "uniform", "double_exponential", "custom")


@dataclass(frozen=True)
class DistributionSpec:
    family: str
    variance: float
    density_sq_integral: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise RankCalError(f"unknown family {self.family!r}")
        if not (self.variance > 0 and self.density_sq_integral > 0):
            raise RankCalError("variance and int f^2 must both be positive")

    @classmethod
    def normal(cls, variance: float = 1.0) -> "DistributionSpec":
        sd = math.sqrt(variance)
        return cls("normal", variance, 1 / (2 * sd * math.sqrt(math.pi)))

    @classmethod
    def uniform(cls, low: float = 0.0, high: float = 1.0) -> "DistributionSpec":
        width = high - low
        if width <= 0:
            raise RankCalError("uniform needs high > low")
        return cls("uniform", width * width / 12, 1 / width)

    @classmethod
    def double_exponential(cls, scale: float = 1.0) -> "DistributionSpec":
        if scale <= 0:
            raise RankCalError("scale must be positive")
        return cls("double_exponential", 2 * scale * scale, 1 / (4 * scale))

    @classmethod
    def custom(cls, variance: float, density_sq_integral: float) -> "DistributionSpec":
        return cls("custom", variance, density_sq_integral)

    @classmethod
    def from_name(cls, family: str, **params) -> "DistributionSpec":
        if family == "normal":
            return cls.normal(params.get("variance", 1.0))
        if family == "uniform":
            return cls.uniform(params.get("low", 0.0), params.get("high", 1.0))
        if family == "double_exponential":
            if "variance" in params:
                return cls.double_exponential(math.sqrt(params["variance"] / 2))
            return cls.double_exponential(params.get("scale", 1.0))
        if family == "custom":
            return cls.custom(params["variance"], params["density_sq_integral"])
        raise RankCalError(f"unknown family {family!r}")


@dataclass(frozen=True)
class AREReport:
    wmw_vs_t: float
    adjusted_vs_unadjusted: float
    adjusted_vs_t: float

    def to_dict(self) -> dict:
        return {"wmw_vs_t": self.wmw_vs_t,
                "adjusted_vs_unadjusted": self.adjusted_vs_unadjusted,
                "adjusted_vs_t": self.adjusted_vs_t}


@dataclass(frozen=True)
class DominanceReport:
    dominates_t: bool
    one_minus_12q: float
    are: AREReport


def are_wmw_vs_t(dist: DistributionSpec) -> float:
    """``12 sigma^2 (int f^2)^2``: unadjusted WMW test relative to the t-test."""
    return 12 * dist.variance * dist.density_sq_integral ** 2


def _beta_sigma_beta(beta, sigma) -> float:
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape != (beta.size, beta.size):
        raise RankCalError(f"sigma shape {sigma.shape} does not match beta length {beta.size}")
    if not np.allclose(sigma, sigma.T):
        raise RankCalError("sigma must be symmetric")
    if np.linalg.eigvalsh(sigma)[0] < -1e-12 * max(1.0, np.abs(sigma).max()):
        raise RankCalError("sigma must be positive semi-definite")
    return float(beta @ sigma @ beta)


def are_adjusted_vs_unadjusted(beta, sigma) -> float:
    """``1 / (1 - 12 beta' Sigma beta)``, at least 1."""
    q = _beta_sigma_beta(beta, sigma)
    if 12 * q >= 1:
        raise RankCalError(
            f"12 beta' Sigma beta = {12 * q:.4g} >= 1; beta' Sigma beta cannot "
            "exceed the null placement variance 1/12")
    return 1 / (1 - 12 * q)


def are_report(dist: DistributionSpec, beta=0.0, sigma=1.0) -> AREReport:
    base = are_wmw_vs_t(dist)
    gain = are_adjusted_vs_unadjusted(beta, sigma)
    return AREReport(base, gain, base * gain)


def dominance_check(dist: DistributionSpec, beta, sigma) -> DominanceReport:
    """Whether calibration alone guarantees beating the t-test.

    True when ``1 - 12 beta' Sigma beta < 0.864``: the adjusted WMW test is
    then more efficient than the t-test for every outcome density.
    """
    q = _beta_sigma_beta(beta, sigma)
    shrink = 1 - 12 * q
    return DominanceReport(shrink < HODGES_LEHMANN_BOUND, shrink,
                           are_report(dist, beta, sigma))
