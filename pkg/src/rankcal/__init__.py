"""Covariate-calibrated Wilcoxon two-sample inference."""
from .domain import (DesignSpec, EstimateReport, RankCalError, TrialData,
                     TrialDataError, ValidationSummary, validate_trial)
from .ranks import compute_u, placements, rank_sum_statistic
from .calibration import (AdjustedEstimate, CalibrationFit, SingularCovarianceError,
                          adjusted_u, estimate_c, fit_calibration, sample_covariance)
from .inference import (TestConfig, TestReport, VarianceComponents, VarianceError,
                        confidence_interval, phi_pooled, phi_under_null,
                        t_test_baseline, variance_components, wmw_test_adjusted,
                        wmw_test_unadjusted)
from .randomization import (BalanceDiagnostic, RandomizationScheme, assign,
                            assign_minimization, assign_simple,
                            assign_stratified_block, balance_report)
from .are import (AREReport, DistributionSpec, are_adjusted_vs_unadjusted,
                  are_report, are_wmw_vs_t, dominance_check)
from .simlab import MetricsRow, Scenario, generate_dataset, run_study, theta_truth

__all__ = [
    "DesignSpec",
    "EstimateReport",
    "RankCalError",
    "TrialData",
    "TrialDataError",
    "ValidationSummary",
    "validate_trial",
    "compute_u",
    "placements",
    "rank_sum_statistic",
    "AdjustedEstimate",
    "CalibrationFit",
    "SingularCovarianceError",
    "adjusted_u",
    "estimate_c",
    "fit_calibration",
    "sample_covariance",
    "TestConfig",
    "TestReport",
    "VarianceComponents",
    "VarianceError",
    "confidence_interval",
    "phi_pooled",
    "phi_under_null",
    "t_test_baseline",
    "variance_components",
    "wmw_test_adjusted",
    "wmw_test_unadjusted",
    "BalanceDiagnostic",
    "RandomizationScheme",
    "assign",
    "assign_minimization",
    "assign_simple",
    "assign_stratified_block",
    "balance_report",
    "AREReport",
    "DistributionSpec",
    "are_adjusted_vs_unadjusted",
    "are_report",
    "are_wmw_vs_t",
    "dominance_check",
    "MetricsRow",
    "Scenario",
    "generate_dataset",
    "run_study",
    "theta_truth",
]

__version__ = "0.1.0"
