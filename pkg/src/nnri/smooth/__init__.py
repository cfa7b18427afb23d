"""Smooth ratio and residual-variance models."""

from .bspline import BSplineBasis
from .gam import GamFit, GamProblem, fit_gam_multinomial, softmax_ratios, solve_gauss_newton
from .pspline import PSplineFit, fit_penalized_spline, relative_lambda_grid
from .ratio import (
    RATIO_METHODS,
    Param1Fit,
    Param2Fit,
    fit_param1,
    fit_param2,
    fit_ratio,
    predict_m,
)
from .sigma import SIGMA_METHODS, SigmaFit, fit_sigma

__all__ = [
    "BSplineBasis",
    "GamFit",
    "GamProblem",
    "PSplineFit",
    "Param1Fit",
    "Param2Fit",
    "RATIO_METHODS",
    "SIGMA_METHODS",
    "SigmaFit",
    "fit_gam_multinomial",
    "fit_param1",
    "fit_param2",
    "fit_penalized_spline",
    "fit_ratio",
    "fit_sigma",
    "predict_m",
    "relative_lambda_grid",
    "softmax_ratios",
    "solve_gauss_newton",
]
