"""Covariate calibration of the Wilcoxon two-sample statistic.

The calibrated statistic adds mean-zero covariate contrasts to U::

    U^C = U + (xbar_j - xbar)' beta_j - (xbar_k - xbar)' beta_k

with ``beta_j = Sigma^{-1} C_jk`` and ``beta_k = Sigma^{-1} C_kj``, where
``C_jk`` is the covariance between the placement ``F_k(Y_j)`` and ``X_j``.
No outcome model is fitted; only the covariance structure is used.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .domain import DesignSpec, RankCalError, TrialData
from .ranks import compute_u, counts_below, placements

__all__ = [
    "SingularCovarianceError",
    "CalibrationFit",
    "AdjustedEstimate",
    "sample_covariance",
    "estimate_c",
    "fit_calibration",
    "adjusted_u",
    "calibrate",
    "EIGEN_RATIO_TOL",
]

# smallest/largest eigenvalue ratio below which Sigma-hat counts as singular
EIGEN_RATIO_TOL = 1e-10


class SingularCovarianceError(RankCalError):
    """Raised when the pooled covariate covariance cannot be inverted."""

    def __init__(self, message, columns=(), eigenvalues=None):
        super().__init__(message)
        self.columns = tuple(columns)
        self.eigenvalues = eigenvalues


@dataclass(frozen=True)
class CalibrationFit:
    sigma_hat: np.ndarray
    c_jk_hat: np.ndarray
    c_kj_hat: np.ndarray
    beta_j_hat: np.ndarray
    beta_k_hat: np.ndarray
    xbar_j: np.ndarray
    xbar_k: np.ndarray
    xbar_all: np.ndarray
    xbar_pair: np.ndarray
    eigenvalues: np.ndarray
    ridge: float = 0.0

    def summary(self) -> dict:
        return {
            "beta_j": self.beta_j_hat.tolist(),
            "beta_k": self.beta_k_hat.tolist(),
            "c_jk": self.c_jk_hat.tolist(),
            "c_kj": self.c_kj_hat.tolist(),
            "sigma": self.sigma_hat.tolist(),
            "eigen_min": float(self.eigenvalues[0]),
            "eigen_max": float(self.eigenvalues[-1]),
            "ridge": self.ridge,
        }


@dataclass(frozen=True)
class AdjustedEstimate:
    u_unadjusted: float
    u_adjusted: float
    fit: CalibrationFit
    mode: str = "pooled_mean"


def sample_covariance(covariates) -> np.ndarray:
    """Unbiased (divisor n-1) covariance of the rows of ``covariates``."""
    x = np.asarray(covariates, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise RankCalError("sample covariance needs at least two rows")
    if not np.all(np.isfinite(x)):
        raise RankCalError("covariates contain non-finite values")
    xc = x - x.mean(axis=0)
    s = xc.T @ xc / (x.shape[0] - 1)
    return (s + s.T) / 2


def _pair_arrays(data: TrialData, design: DesignSpec):
    j, k = design.pair
    y_j, y_k = data.group_outcomes(j), data.group_outcomes(k)
    if y_j.size == 0 or y_k.size == 0:
        raise RankCalError(f"treatment group {j if y_j.size == 0 else k} is empty")
    return y_j, y_k, data.group_covariates(j), data.group_covariates(k)


def estimate_c(data: TrialData, design: DesignSpec):
    """Plug-in estimates ``(C_jk, C_kj)``.

    ``C_jk`` averages ``I(y_k <= y_j) (x_j - xbar_j)`` over all cross pairs;
    ``C_kj`` averages ``I(y_j <= y_k) (x_k - xbar_k)``.
    """
    y_j, y_k, x_j, x_k = _pair_arrays(data, design)
    h_j = counts_below(y_j, y_k) / y_k.size
    g_k = placements(y_j, y_k).g_k
    c_jk = (x_j - x_j.mean(axis=0)).T @ h_j / y_j.size
    c_kj = (x_k - x_k.mean(axis=0)).T @ g_k / y_k.size
    return c_jk, c_kj


def _solve_spd(sigma: np.ndarray, rhs: np.ndarray, ridge: float,
               names: Optional[Sequence[str]]):
    w, v = np.linalg.eigh(sigma)
    if ridge:
        a = sigma + ridge * np.eye(sigma.shape[0])
    else:
        if w[-1] <= 0 or w[0] < EIGEN_RATIO_TOL * w[-1]:
            small = w <= max(w[-1], 0) * EIGEN_RATIO_TOL
            null = v[:, small]
            cols = np.flatnonzero(np.max(np.abs(null), axis=1) > 1e-6)
            labels = [names[c] if names else f"x{c}" for c in cols]
            raise SingularCovarianceError(
                "covariate covariance is singular (smallest eigenvalue "
                f"{w[0]:.3g}, largest {w[-1]:.3g}); collinear or constant "
                f"columns: {', '.join(labels)}",
                columns=labels, eigenvalues=w)
        a = sigma
    try:
        cf = linalg.cho_factor(a, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"covariate covariance is not positive definite: {exc}",
            eigenvalues=w) from None
    return linalg.cho_solve(cf, rhs), w


def fit_calibration(data: TrialData, design: DesignSpec, ridge: float = 0.0,
                    column_names: Optional[Sequence[str]] = None) -> CalibrationFit:
    """Estimate Sigma, C_jk, C_kj and solve for the calibration coefficients.

    Parameters
    ----------
    ridge : float
        If positive, solve with ``Sigma + ridge * I``. Off by default since
        it changes the estimator.
    column_names : sequence of str, optional
        Used to name collinear columns in the singularity error.
    """
    if ridge < 0:
        raise RankCalError("ridge must be >= 0")
    j, k = design.pair
    sizes = data.group_sizes()
    p = data.p
    if p > min(sizes[j - 1], sizes[k - 1]) / 10:
        warnings.warn(f"{p} covariates is large relative to group sizes "
                      f"{sizes[j - 1]}, {sizes[k - 1]}", stacklevel=2)
    sigma = sample_covariance(data.covariates)
    c_jk, c_kj = estimate_c(data, design)
    betas, w = _solve_spd(sigma, np.column_stack([c_jk, c_kj]), ridge,
                          column_names)
    x = data.covariates
    in_pair = data.mask(j) | data.mask(k)
    return CalibrationFit(
        sigma_hat=sigma,
        c_jk_hat=c_jk,
        c_kj_hat=c_kj,
        beta_j_hat=betas[:, 0],
        beta_k_hat=betas[:, 1],
        xbar_j=x[data.mask(j)].mean(axis=0),
        xbar_k=x[data.mask(k)].mean(axis=0),
        xbar_all=x.mean(axis=0),
        xbar_pair=x[in_pair].mean(axis=0),
        eigenvalues=w,
        ridge=float(ridge),
    )


def calibrate(u: float, fit: CalibrationFit, mode: str = "pooled_mean") -> float:
    """Apply the calibration shift from ``fit`` to a raw statistic ``u``."""
    if mode == "pooled_mean":
        center = fit.xbar_all
    elif mode == "restricted_mean":
        center = fit.xbar_pair
    else:
        raise RankCalError(f"unknown calibration mode {mode!r}")
    return float(u + (fit.xbar_j - center) @ fit.beta_j_hat
                 - (fit.xbar_k - center) @ fit.beta_k_hat)


def adjusted_u(data: TrialData, design: DesignSpec, mode: str = "pooled_mean",
               fit: Optional[CalibrationFit] = None, ridge: float = 0.0,
               column_names: Optional[Sequence[str]] = None) -> AdjustedEstimate:
    """Calibrated Wilcoxon statistic for the design's pair.

    ``mode="pooled_mean"`` centers on the mean of all units. The
    ``"restricted_mean"`` variant centers on the mean of arms j and k only;
    it is asymptotically dominated by the pooled form when there are more
    than two arms and exists for that comparison.
    """
    j, k = design.pair
    y_j, y_k, _, _ = _pair_arrays(data, design)
    if fit is None:
        fit = fit_calibration(data, design, ridge=ridge, column_names=column_names)
    u = compute_u(y_j, y_k)
    return AdjustedEstimate(u, calibrate(u, fit, mode), fit, mode)
