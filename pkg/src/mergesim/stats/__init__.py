from .distributions import normal_cdf, normal_two_sided_p, t_cdf, t_ppf, t_two_sided_p
from .indicators import IndicatorScore, score_indicators
from .intervals import t_interval, wilson_interval
from .regression import (
    CollinearityError, DegenerateFit, FitError, SeparationError, fit_logit, fit_ols, linear_fit, logistic_fit,
)

__all__ = [
    "normal_cdf", "normal_two_sided_p", "t_cdf", "t_ppf", "t_two_sided_p",
    "IndicatorScore", "score_indicators", "t_interval", "wilson_interval",
    "CollinearityError", "DegenerateFit", "FitError", "SeparationError",
    "fit_logit", "fit_ols", "linear_fit", "logistic_fit",
]
