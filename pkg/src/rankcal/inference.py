"""Variance estimation, Wilcoxon-Mann-Whitney tests and confidence intervals.

All tests are two-sided and referred to the standard normal. ``n`` is always
the total number of randomized units (all arms), and the allocation
proportions come from the design unless ``pi_source="empirical"``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .calibration import CalibrationFit, calibrate, fit_calibration
from .domain import DesignSpec, EstimateReport, RankCalError, TrialData
from .ranks import compute_u, placements

__all__ = [
    "VarianceError",
    "VarianceComponents",
    "TestConfig",
    "TestReport",
    "phi_pooled",
    "phi_restricted",
    "phi_under_null",
    "pooled_beta",
    "variance_components",
    "normal_interval",
    "adjusted_null_sd",
    "wmw_test_unadjusted",
    "wmw_test_adjusted",
    "confidence_interval",
    "t_test_baseline",
    "NULL_VARIANCE_EPS",
]

NULL_VARIANCE_EPS = 1e-10

UNADJUSTED_CAVEAT = "valid only under simple randomization"


class VarianceError(RankCalError):
    """An estimated variance is impossible (negative null variance)."""


@dataclass(frozen=True)
class VarianceComponents:
    tau_jk: float
    tau_kj: float
    phi_jk: float
    asymptotic_variance: float
    floored: bool = False

    @property
    def raw_variance(self) -> float:
        return self.tau_jk + self.tau_kj - self.phi_jk

    def to_dict(self) -> dict:
        return {"tau_jk": self.tau_jk, "tau_kj": self.tau_kj,
                "phi_jk": self.phi_jk,
                "asymptotic_variance": self.asymptotic_variance,
                "floored": self.floored}

    @classmethod
    def from_dict(cls, d: dict) -> "VarianceComponents":
        return cls(**d)


@dataclass(frozen=True)
class TestConfig:
    alpha: float = 0.05
    continuity_correction: bool = False
    pi_source: str = "design"

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise RankCalError("alpha must lie in (0, 0.5)")
        if self.pi_source not in ("design", "empirical"):
            raise RankCalError("pi_source must be 'design' or 'empirical'")


@dataclass(frozen=True)
class TestReport:
    """Outcome of one two-sided test.

    ``statistic`` is on the scale of the rejection rule: ``sqrt(n)(U - 1/2)``
    for the rank tests, the mean difference over its SE for the t-test.
    ``threshold`` is the critical value for ``|statistic|`` and ``z`` the
    standardized statistic from which ``p_value`` is computed.
    """

    method: str
    statistic: float
    z: float
    threshold: float
    p_value: float
    reject: bool
    alpha: float
    estimate: EstimateReport
    warnings: tuple = ()

    __test__ = False

    def to_dict(self) -> dict:
        return {"method": self.method, "statistic": self.statistic, "z": self.z,
                "threshold": self.threshold, "p_value": self.p_value,
                "reject": self.reject, "alpha": self.alpha,
                "estimate": self.estimate.to_dict(),
                "warnings": list(self.warnings)}

    @classmethod
    def from_dict(cls, d: dict) -> "TestReport":
        d = dict(d)
        d["estimate"] = EstimateReport.from_dict(d["estimate"])
        d["warnings"] = tuple(d.get("warnings", ()))
        return cls(**d)


def _quad(a, sigma, b=None):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = a if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    return float(a @ np.atleast_2d(sigma) @ b)


def phi_pooled(beta_j, beta_k, sigma, pi_j: float, pi_k: float) -> float:
    """Variance reduction achieved by pooled-mean calibration."""
    beta_j = np.atleast_1d(np.asarray(beta_j, dtype=float))
    beta_k = np.atleast_1d(np.asarray(beta_k, dtype=float))
    s = pi_j * beta_k + pi_k * beta_j
    d = beta_j - beta_k
    return (_quad(s, sigma) / (pi_j * pi_k * (pi_j + pi_k))
            + (1 - pi_j - pi_k) * _quad(d, sigma) / (pi_j + pi_k))


def phi_restricted(beta_j, beta_k, sigma, pi_j: float, pi_k: float) -> float:
    """Variance reduction when calibrating against the mean of arms j, k only."""
    beta_j = np.atleast_1d(np.asarray(beta_j, dtype=float))
    beta_k = np.atleast_1d(np.asarray(beta_k, dtype=float))
    return _quad(pi_k * beta_j + pi_j * beta_k, sigma) / (pi_j * pi_k * (pi_j + pi_k))


def pooled_beta(beta_j, beta_k, pi_j: float, pi_k: float) -> np.ndarray:
    """Proportion-weighted average of the two calibration vectors."""
    return ((pi_j * np.asarray(beta_j, dtype=float)
             + pi_k * np.asarray(beta_k, dtype=float)) / (pi_j + pi_k))


def phi_under_null(beta, sigma, design: DesignSpec) -> float:
    """``beta' Sigma beta (1/pi_j + 1/pi_k)``, the null-hypothesis form."""
    return _quad(beta, sigma) * (1 / design.pi_j + 1 / design.pi_k)


def _resolve_design(data: TrialData, design: DesignSpec, pi_source: str):
    if pi_source == "empirical":
        return DesignSpec.empirical(data, design.pair)
    return design


def _pair_outcomes(data: TrialData, design: DesignSpec):
    j, k = design.pair
    y_j, y_k = data.group_outcomes(j), data.group_outcomes(k)
    if y_j.size == 0 or y_k.size == 0:
        raise RankCalError(f"treatment group {j if y_j.size == 0 else k} is empty")
    return y_j, y_k


def variance_components(data: TrialData, design: DesignSpec,
                        fit: Optional[CalibrationFit] = None,
                        mode: str = "pooled_mean") -> VarianceComponents:
    """Plug-in estimates of tau_jk, tau_kj and phi_jk.

    With ``fit=None`` no calibration is assumed and phi is zero.
    """
    y_j, y_k = _pair_outcomes(data, design)
    g_j, g_k = placements(y_j, y_k)
    u = compute_u(y_j, y_k)
    tau_jk = max((np.mean(g_j ** 2) - u * u) / design.pi_j, 0.0)
    tau_kj = max((np.mean(g_k ** 2) - u * u) / design.pi_k, 0.0)
    if fit is None:
        phi = 0.0
    elif mode == "pooled_mean":
        phi = phi_pooled(fit.beta_j_hat, fit.beta_k_hat, fit.sigma_hat,
                           design.pi_j, design.pi_k)
    elif mode == "restricted_mean":
        phi = phi_restricted(fit.beta_j_hat, fit.beta_k_hat, fit.sigma_hat,
                             design.pi_j, design.pi_k)
    else:
        raise RankCalError(f"unknown calibration mode {mode!r}")
    raw = tau_jk + tau_kj - phi
    return VarianceComponents(float(tau_jk), float(tau_kj), float(phi), float(max(raw, 0.0)),
                              bool(raw <= 0))


def normal_interval(point: float, variance: float, n: int, alpha: float):
    """``point -/+ z_{alpha/2} sqrt(variance / n)`` and the standard error."""
    se = math.sqrt(max(variance, 0.0) / n)
    half = stats.norm.ppf(1 - alpha / 2) * se
    return point - half, point + half, se


def confidence_interval(data: TrialData, design: DesignSpec,
                        method: str = "adjusted", alpha: float = 0.05,
                        fit: Optional[CalibrationFit] = None, ridge: float = 0.0,
                        pi_source: str = "design") -> EstimateReport:
    """Large-sample interval for ``theta_jk = P(Y_j <= Y_k)``.

    ``method`` is ``"unadjusted"``, ``"adjusted"`` (pooled-mean
    calibration) or ``"restricted"``. The unadjusted interval ignores the
    randomization scheme and is only valid under simple randomization.
    """
    design = _resolve_design(data, design, pi_source)
    y_j, y_k = _pair_outcomes(data, design)
    if method == "unadjusted":
        point = compute_u(y_j, y_k)
        vc = variance_components(data, design)
        label, note = "unadjusted_u", UNADJUSTED_CAVEAT
    elif method in ("adjusted", "restricted"):
        mode = "pooled_mean" if method == "adjusted" else "restricted_mean"
        if fit is None:
            fit = fit_calibration(data, design, ridge=ridge)
        point = calibrate(compute_u(y_j, y_k), fit, mode)
        vc = variance_components(data, design, fit, mode)
        label = "adjusted_u" if method == "adjusted" else "restricted_adjusted_u"
        note = ""
    else:
        raise RankCalError(f"unknown interval method {method!r}")
    lo, hi, se = normal_interval(point, vc.asymptotic_variance, data.n, alpha)
    if vc.floored:
        note = "; ".join(filter(None, [note, "variance floored at 0"]))
    return EstimateReport(point, se, lo, hi, label, alpha, vc.floored, note)


def _tie_warnings(y_j, y_k):
    both = np.concatenate([y_j, y_k])
    if np.unique(both).size < both.size:
        msg = "tied outcomes: indicator I(y_j <= y_k) counts ties for both arms"
        warnings.warn(msg, stacklevel=3)
        return (msg,)
    return ()


def _two_sided(z: float) -> float:
    return float(min(1.0, 2 * stats.norm.sf(abs(z))))


def adjusted_null_sd(beta_sigma_beta: float, pi_j: float, pi_k: float) -> float:
    """Null SD of ``sqrt(n)(U^C - 1/2)``; raises if the variance is impossible."""
    raw = 1 / 12 - beta_sigma_beta
    if raw <= 0:
        raise VarianceError(
            f"beta' Sigma beta = {beta_sigma_beta:.4g} >= 1/12: calibration "
            "coefficients are grossly misestimated")
    return math.sqrt(max(raw, NULL_VARIANCE_EPS) * (1 / pi_j + 1 / pi_k))


def _report(method, stat, null_sd, alpha, estimate, warn):
    z = stat / null_sd if null_sd > 0 else (0.0 if stat == 0 else math.copysign(math.inf, stat))
    p = _two_sided(z)
    return TestReport(method, float(stat), float(z),
                      float(stats.norm.ppf(1 - alpha / 2) * null_sd), p,
                      bool(p < alpha), alpha, estimate, tuple(warn))


def wmw_test_unadjusted(data: TrialData, design: DesignSpec,
                        config: TestConfig = TestConfig()) -> TestReport:
    """Classical Wilcoxon-Mann-Whitney test of ``F_j = F_k``.

    Rejects when ``sqrt(n)|U - 1/2| > z sqrt((1/pi_j + 1/pi_k) / 12)``. With
    ``continuity_correction`` the bracket becomes
    ``n/n_j + n/n_k + n/(n_j n_k)``.
    """
    design = _resolve_design(data, design, config.pi_source)
    y_j, y_k = _pair_outcomes(data, design)
    warn = _tie_warnings(y_j, y_k)
    n, n_j, n_k = data.n, y_j.size, y_k.size
    u = compute_u(y_j, y_k)
    if config.continuity_correction:
        factor = n / n_j + n / n_k + n / (n_j * n_k)
    else:
        factor = 1 / design.pi_j + 1 / design.pi_k
    est = confidence_interval(data, design, "unadjusted", config.alpha)
    method = "wmw_unadjusted_cc" if config.continuity_correction else "wmw_unadjusted"
    return _report(method, math.sqrt(n) * (u - 0.5), math.sqrt(factor / 12),
                   config.alpha, est, warn)


def wmw_test_adjusted(data: TrialData, design: DesignSpec,
                      config: TestConfig = TestConfig(),
                      fit: Optional[CalibrationFit] = None,
                      ridge: float = 0.0, mode: str = "pooled_mean") -> TestReport:
    """Covariate-calibrated Wilcoxon-Mann-Whitney test.

    Null variance ``(1/12 - b' S b)(1/pi_j + 1/pi_k)`` with ``b`` the
    proportion-weighted calibration vector; valid under any randomization
    scheme that balances on covariates included in the adjustment. With
    equal calibration vectors the restricted-mean reduction has the same
    null form, so ``mode="restricted_mean"`` reuses it.
    """
    design = _resolve_design(data, design, config.pi_source)
    y_j, y_k = _pair_outcomes(data, design)
    warn = _tie_warnings(y_j, y_k)
    if fit is None:
        fit = fit_calibration(data, design, ridge=ridge)
    b = pooled_beta(fit.beta_j_hat, fit.beta_k_hat, design.pi_j, design.pi_k)
    null_sd = adjusted_null_sd(_quad(b, fit.sigma_hat), design.pi_j, design.pi_k)
    u_c = calibrate(compute_u(y_j, y_k), fit, mode)
    if mode == "pooled_mean":
        interval, method = "adjusted", "wmw_adjusted"
    else:
        interval, method = "restricted", "wmw_restricted"
    est = confidence_interval(data, design, interval, config.alpha, fit=fit)
    return _report(method, math.sqrt(data.n) * (u_c - 0.5), null_sd,
                   config.alpha, est, warn)


def t_test_baseline(data: TrialData, design: DesignSpec,
                    config: TestConfig = TestConfig()) -> TestReport:
    """Welch two-sample test on ``ybar_j - ybar_k`` with a normal reference."""
    y_j, y_k = _pair_outcomes(data, design)
    if y_j.size < 2 or y_k.size < 2:
        raise RankCalError("t-test needs at least two units per group")
    diff = float(y_j.mean() - y_k.mean())
    se = math.sqrt(y_j.var(ddof=1) / y_j.size + y_k.var(ddof=1) / y_k.size)
    if se == 0:
        raise VarianceError("both groups have zero outcome variance")
    half = stats.norm.ppf(1 - config.alpha / 2) * se
    est = EstimateReport(diff, se, diff - half, diff + half, "mean_difference",
                         config.alpha, note=UNADJUSTED_CAVEAT)
    z = diff / se
    p = _two_sided(z)
    return TestReport("t_test", z, z, float(stats.norm.ppf(1 - config.alpha / 2)),
                      p, bool(p < config.alpha), config.alpha, est)
