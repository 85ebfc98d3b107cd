"""Phase-type distribution toolkit: homogeneous, transformed and
multivariate models, EM estimation with censoring, simulation and
dependence diagnostics."""

from .em import (ESufficientStats, FitConfig, FitResult, Observation,
                 estep, estep_censored, estep_exact, exact, fit_iph, fit_ph,
                 interval, mstep, right_censored)
from .em_multi import (BivFitResult, MPHFitResult, MultivariateSample,
                       fit_biv_block, fit_biv_inhom, fit_mph,
                       fit_mph_two_stage, sum_observation)
from .estimators import (BivariateBlockEstimator, MPHEstimator,
                         PhaseTypeEstimator, TransformedBivariateEstimator,
                         TransformedPhaseTypeEstimator)
from .exceptions import (BetaSearchFailedError, DegenerateMarginalError,
                         DomainError, NumericalUnderflowError, PhasefitError,
                         SingularMatrixError, UnsupportedModelError)
from .io import load_model, save_model
from .iph import (IPHModel, iph_density, iph_sample, iph_sample_many,
                  iph_survival, matrix_gev, matrix_gompertz, matrix_pareto,
                  matrix_weibull)
from .mph import (BivariateBlockModel, DependenceSummary, InhomMPHModel,
                  MPHModel, biv_density, biv_survival, empirical_dependence,
                  inhom_density, inhom_sample_many, inhom_survival,
                  kendall_tau, marginal, mph_mean_and_correlation,
                  mph_sample_many)
from .ph import (PHModel, Trajectory, ph_density, ph_moment, ph_sample,
                 ph_sample_times, ph_survival)
from .transforms import (GEV, Gompertz, Identity, Pareto, TransformFamily,
                         Weibull, family_names, make_transform)

__version__ = "0.1.0"

__all__ = [
    "BetaSearchFailedError", "BivFitResult", "BivariateBlockEstimator",
    "BivariateBlockModel", "DegenerateMarginalError", "DependenceSummary",
    "DomainError", "ESufficientStats", "FitConfig", "FitResult", "GEV",
    "Gompertz", "IPHModel", "Identity", "InhomMPHModel", "MPHEstimator",
    "MPHFitResult", "MPHModel", "MultivariateSample",
    "NumericalUnderflowError", "Observation", "PHModel", "Pareto",
    "PhaseTypeEstimator", "PhasefitError", "SingularMatrixError",
    "Trajectory", "TransformFamily", "TransformedBivariateEstimator",
    "TransformedPhaseTypeEstimator", "UnsupportedModelError", "Weibull",
    "biv_density", "biv_survival", "empirical_dependence", "estep",
    "estep_censored", "estep_exact", "exact", "family_names", "fit_biv_block",
    "fit_biv_inhom", "fit_iph", "fit_mph", "fit_mph_two_stage", "fit_ph",
    "inhom_density", "inhom_sample_many", "inhom_survival", "interval",
    "iph_density", "iph_sample", "iph_sample_many", "iph_survival",
    "kendall_tau", "load_model", "marginal", "matrix_gev", "matrix_gompertz",
    "matrix_pareto", "matrix_weibull", "mph_mean_and_correlation",
    "mph_sample_many", "mstep", "ph_density", "ph_moment", "ph_sample",
    "ph_sample_times", "ph_survival", "right_censored", "save_model",
    "sum_observation", "make_transform",
]
