"""Factor-distance correlation models and correlation stress testing for VaR."""

from .factor_model import (BetaDistribution, CorrelationModel, DistanceMatrixSet, build_distances,
                           calibrate_betas, correlation_matrix, estimate_beta_distribution,
                           factor_correlation, rolling_calibration)
from .portfolio_risk import PortfolioWeights, var_joint_stress, var_normal, var_t
from .scenario import (AnnealingConfig, StressScenario, conditional_stress, mahalanobis,
                       stationarity_check, worst_case_search)

__version__ = "0.1.0"

__all__ = [
    "AnnealingConfig", "BetaDistribution", "CorrelationModel", "DistanceMatrixSet",
    "PortfolioWeights", "StressScenario", "build_distances", "calibrate_betas",
    "conditional_stress", "correlation_matrix", "estimate_beta_distribution",
    "factor_correlation", "mahalanobis", "rolling_calibration", "stationarity_check",
    "var_joint_stress", "var_normal", "var_t", "worst_case_search",
]
