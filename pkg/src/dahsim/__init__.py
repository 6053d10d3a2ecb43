"""Generative model and trial-design tools for the days-alive-and-at-home endpoint."""

from .canonical import canonical_covariates, canonical_model, competitor_generators, scenario_model, scenario_population
from .competitors import CompetitorSpec, fit_all, fit_competitor
from .composite import CompositeModel, FitConfig, dah_from_components, fit_composite
from .diagnostics import integrated_discrepancy, randomized_quantile_residuals, resampling_qq_check, worm_plot_data
from .distributions import (
    Bernoulli, BetaBinomial, Categorical, NegativeBinomial, PoissonInverseGaussian, Poisson,
    RightCensored, ZeroAdjusted, ZeroInflated, ZeroTruncated,
)
from .errors import CalibrationError, ConfigError, DahError, DataError, FitError, ParameterError, SupportError
from .regression import ComponentSpec, fit_component, gaic, stepwise_select
from .trial import ScenarioPair, calibrate_effect, min_sample_size, mww_test, power_curve

__version__ = "0.1.0"
