"""Deconvolution estimators for errors-in-variables data."""

from .distributions import (
    Gamma2,
    GammaTarget,
    Laplace,
    NoError,
    NormalMixture,
    StdNormal,
    SymGamma,
    parse_error,
    parse_target,
    smoothness_class,
)
from .errors import DeconvolutionError
from .estimators import DeconvFit, abs_moment, cdf_at, density_at, poly_moment, quantile, resample
from .kernels import Kernel
from .transforms import QuadratureSpec

__all__ = [
    "DeconvFit",
    "DeconvolutionError",
    "Gamma2",
    "GammaTarget",
    "Kernel",
    "Laplace",
    "NoError",
    "NormalMixture",
    "QuadratureSpec",
    "StdNormal",
    "SymGamma",
    "abs_moment",
    "cdf_at",
    "density_at",
    "parse_error",
    "parse_target",
    "poly_moment",
    "quantile",
    "resample",
    "smoothness_class",
]
