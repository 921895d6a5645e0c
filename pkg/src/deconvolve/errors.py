"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class DeconvolutionError(Exception):
    """Base class for numerical and domain failures raised by the package."""


class QuadratureError(DeconvolutionError):
    """Raised when an oscillatory quadrature fails to converge.

    Parameters
    ----------
    message : str
        Human readable description.
    estimates : tuple of float, optional
        The last two estimates produced before giving up.
    """

    def __init__(self, message: str, estimates: tuple = ()):
        super().__init__(message)
        self.estimates = tuple(estimates)


class UnsupportedMomentError(DeconvolutionError):
    """A requested moment does not exist or is not implemented."""


class UnsupportedBandwidthError(DeconvolutionError):
    """The requested bandwidth is not admissible for this operation."""


class DivergentIntegralError(DeconvolutionError):
    """An improper integral required by the computation diverges."""


class NoiseDominatesError(DeconvolutionError):
    """The observed variance does not exceed the error variance."""


class SpanExhaustedError(DeconvolutionError):
    """A monotone curve never crosses the requested level inside the span."""


class DegenerateDistributionError(DeconvolutionError):
    """A distribution estimate carries no mass to sample from."""


class NonIntegrableTailError(DeconvolutionError):
    """The kernel tail decays too slowly for the requested moment."""


class PoleError(DeconvolutionError):
    """A closed-form constant hits a pole of its defining sum."""


class NoAsymptoteError(DeconvolutionError):
    """The requested asymptotic approximation does not apply."""
