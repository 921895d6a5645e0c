"""Plug-in bandwidth selection for the distribution-function estimator.

The selector minimises the two leading terms of the mean integrated squared
error,

    M(h) = I(h) / n + (1/4) kappa2^2 R h^4,
    I(h) = (1/pi) [ int_0^{1/h} t^-2 (1 - K^Ft(ht) / f^Ft(t))^2 dt + h ],

where ``R = int f_W'^2`` is the roughness of the target density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, optimize

from .distributions import ErrorModel, NoError, TargetModel, smoothness_class
from .errors import DivergentIntegralError, NoAsymptoteError, NoiseDominatesError
from .kernels import Kernel
from .transforms import _gauss

__all__ = [
    "MisePlan",
    "BandwidthResult",
    "mise_I",
    "a_delta",
    "estimate_sigma_w",
    "select_bandwidth",
    "one_step_roughness",
    "normal_roughness",
]


def _geometric_rule(lo: float, hi: float, m: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Gauss panels on ``[0, lo]`` then on dyadic blocks up to ``hi``."""
    x, w = _gauss(m)
    edges = [0.0, lo]
    while edges[-1] < hi:
        edges.append(min(2.0 * edges[-1], hi))
    edges = np.asarray(edges)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


@lru_cache(maxsize=4096)
def mise_I(error: ErrorModel, kernel: Kernel, h: float) -> float:
    """Integrated-variance functional ``I(h)``.

    For ``h > 0`` the frequency integral stops at ``1/h`` and the remainder
    ``int_{1/h}^inf t^-2 dt = h`` is added in closed form. For ``h = 0`` the
    integral runs to infinity and the tail is integrated term by term from
    the large-``t`` series of ``1/f^Ft``.

    Raises
    ------
    DivergentIntegralError
        If ``h = 0`` and the integral diverges.
    """
    if h < 0:
        raise ValueError("h must be nonnegative")
    if h > 0:
        T = 1.0 / h
        t, w = _geometric_rule(min(1.0, T / 2.0), T)
        d = 1.0 - kernel.ft(h * t) * error.inverse_cf(t)
        return float((np.dot(d * d / (t * t), w) + h) / math.pi)
    if isinstance(error, NoError):
        return 0.0
    if not smoothness_class(error).feasible:
        raise DivergentIntegralError(f"I(0) diverges for {error.spec}")
    T = 1e6
    t, w = _geometric_rule(1.0, T)
    g = error.inverse_cf(t)
    body = float(np.dot((1.0 - g) ** 2 / (t * t), w))
    # (1 - g)^2 t^-2 with g = sum c_k t^e_k, integrated over [T, inf)
    exps, coefs = error.inverse_cf_tail(12)
    ex = np.concatenate([[0.0], exps])
    cf = np.concatenate([[-1.0], coefs])
    tail = 0.0
    for e1, c1 in zip(ex, cf):
        for e2, c2 in zip(ex, cf):
            p = e1 + e2 - 1.0
            tail += c1 * c2 * T**p / (-p)
    return (body + tail) / math.pi


def a_delta(error: ErrorModel, kernel: Kernel) -> float:
    """Constant ``A`` in ``I(h) ~ A h^(1 - 2 alpha)`` as ``h -> 0``.

    Substituting ``f^Ft(t) ~ C t^-alpha`` into ``I(h)`` gives
    ``A = kappa / (pi C^2)`` with ``kappa = int_0^1 t^(2 alpha - 2) K^Ft(t)^2 dt``.

    Raises
    ------
    NoAsymptoteError
        If ``alpha <= 1/2``; then ``I(0)`` is finite instead.
    """
    alpha = error.tail_exponent
    if alpha <= 0.5:
        raise NoAsymptoteError(f"tail exponent {alpha:g} <= 1/2: I(h) has a finite limit")
    kappa, _ = integrate.quad(
        lambda t: t ** (2 * alpha - 2) * kernel.ft(t) ** 2, 0.0, 1.0, epsabs=0, epsrel=1e-12,
        limit=200,
    )
    return kappa / (math.pi * error.tail_constant**2)


def estimate_sigma_w(data, error: ErrorModel) -> float:
    """Standard deviation of ``W`` from ``var(X) - E(delta^2)``.

    Raises
    ------
    NoiseDominatesError
        If the difference is not positive.
    """
    x = np.asarray(data, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two observations")
    var = float(np.var(x, ddof=1)) - error.even_moment(1)
    if not var > 0:
        raise NoiseDominatesError(f"sample variance does not exceed error variance (diff {var:g})")
    return math.sqrt(var)


def normal_roughness(sigma: float) -> float:
    """``int f'^2`` for a normal density with standard deviation ``sigma``."""
    return 1.0 / (4.0 * math.sqrt(math.pi) * sigma**3)


@dataclass(frozen=True, eq=False)
class MisePlan:
    """Inputs of the plug-in selector.

    Parameters
    ----------
    error : ErrorModel
    n : int
        Sample size in ``M(h)``; taken from ``data`` when omitted.
    kernel : Kernel
        Must have ``kappa2 != 0``, so ``r = 2``.
    roughness : {"exact", "normal", "onestep"}
        Source of ``R``: the target's closed form, the normal reference
        value at the estimated ``sigma_W``, or the one-step estimate.
    target : TargetModel, optional
        Required for ``"exact"``.
    data : array_like, optional
        Required for ``"normal"`` and ``"onestep"``.
    h_min, h_max, resolution : float, float, int
        Log-spaced search grid.
    i_method : {"exact", "asymptotic"}
        Use ``I(h)`` itself or its small-``h`` approximation ``A h^(1-2 alpha)``.
    """

    error: ErrorModel
    n: Optional[int] = None
    kernel: Kernel = Kernel(2, 2)
    roughness: str = "exact"
    target: Optional[TargetModel] = None
    data: Optional[np.ndarray] = None
    h_min: float = 0.01
    h_max: float = 3.0
    resolution: int = 60
    i_method: str = "exact"

    def __post_init__(self):
        if self.kernel.kappa2 == 0:
            raise ValueError("the selector needs a kernel with kappa2 != 0 (r = 2)")
        if not (0 < self.h_min < self.h_max):
            raise ValueError("need 0 < h_min < h_max")
        if self.resolution < 3:
            raise ValueError("resolution must be at least 3")
        if self.roughness not in ("exact", "normal", "onestep"):
            raise ValueError(f"unknown roughness source '{self.roughness}'")
        if self.i_method not in ("exact", "asymptotic"):
            raise ValueError(f"unknown i_method '{self.i_method}'")
        if self.roughness == "exact" and self.target is None:
            raise ValueError("exact roughness needs a target model")
        if self.roughness != "exact" and self.data is None:
            raise ValueError(f"{self.roughness} roughness needs data")
        if self.data is not None:
            object.__setattr__(self, "data", np.asarray(self.data, dtype=float).ravel())
        if self.n is None:
            if self.data is None:
                raise ValueError("n is required without data")
            object.__setattr__(self, "n", int(self.data.size))
        if self.n < 1:
            raise ValueError("n must be positive")

    def roughness_value(self) -> float:
        if self.roughness == "exact":
            return self.target.roughness()
        if self.roughness == "normal":
            return normal_roughness(estimate_sigma_w(self.data, self.error))
        return one_step_roughness(self.data, self.error, self.kernel)

    def integral(self, h: float) -> float:
        if self.i_method == "exact":
            return mise_I(self.error, self.kernel, float(h))
        alpha = self.error.tail_exponent
        return a_delta(self.error, self.kernel) * h ** (1.0 - 2.0 * alpha)


@dataclass(frozen=True, eq=False)
class BandwidthResult:
    """Selected bandwidth with the criterion curve used to find it."""

    h_opt: float
    mise_min: float
    roughness: float
    h_grid: np.ndarray = field(repr=False)
    mise_curve: np.ndarray = field(repr=False)
    at_boundary: bool = False


def mise_curve(plan: MisePlan, h, roughness: float):
    """Evaluate ``M(h)`` for a plan and a roughness value."""
    b = 0.25 * plan.kernel.kappa2**2 * roughness
    h = np.asarray(h, dtype=float)
    vals = np.array([plan.integral(float(x)) / plan.n + b * float(x) ** 4 for x in h.ravel()])
    return vals.reshape(h.shape) if h.ndim else float(vals[0])


def select_bandwidth(plan: MisePlan) -> BandwidthResult:
    """Minimise ``M(h)`` on the log grid, then by golden section.

    The golden-section search runs inside the bracket formed by the grid
    minimum and its two neighbours, to a relative tolerance of ``1e-4``.
    A grid minimum at either end of the range is returned as is, with
    ``at_boundary`` set.
    """
    rough = plan.roughness_value()
    grid = np.geomspace(plan.h_min, plan.h_max, plan.resolution)
    curve = mise_curve(plan, grid, rough)
    i = int(np.argmin(curve))
    if i == 0 or i == grid.size - 1:
        return BandwidthResult(float(grid[i]), float(curve[i]), rough, grid, curve, True)
    res = optimize.minimize_scalar(
        lambda h: mise_curve(plan, h, rough),
        bracket=(grid[i - 1], grid[i], grid[i + 1]),
        method="golden",
        options={"xtol": 1e-4},
    )
    h_opt = float(res.x)
    return BandwidthResult(h_opt, float(mise_curve(plan, h_opt, rough)), rough, grid, curve)


def _pilot_expected_roughness(h: float, sigma: float, n: int, error: ErrorModel, kernel: Kernel):
    """Mean of the roughness estimate at bandwidth ``h`` for a normal target."""
    T = 1.0 / h
    t, w = _geometric_rule(min(1.0, T / 2.0), T)
    k2 = kernel.ft(h * t) ** 2
    g2 = error.inverse_cf(t) ** 2
    # E|ecf|^2 = |phi_X|^2 (1 - 1/n) + 1/n and |phi_X|^2 g^2 = exp(-sigma^2 t^2)
    body = np.exp(-(sigma * t) ** 2) * (1.0 - 1.0 / n) + g2 / n
    return float(np.dot(t * t * k2 * body, w) / math.pi)


def one_step_roughness(data, error: ErrorModel, kernel: Kernel = Kernel(2, 2)) -> float:
    """Roughness ``int f_W'^2`` from one refinement of the normal reference.

    Stage one fits a normal reference ``N(0, sigma_W^2)`` and picks the
    pilot ``h0`` at which the roughness estimate is unbiased under that
    reference. Stage two returns the roughness of the derivative of the
    density estimate at ``h0``, computed in the frequency domain:

        R = (1/pi) int_0^{1/h0} t^2 K^Ft(h0 t)^2 |ecf(t)|^2 / f^Ft(t)^2 dt.
    """
    x = np.asarray(data, dtype=float).ravel()
    n = x.size
    sigma = estimate_sigma_w(x, error)
    target = normal_roughness(sigma)

    def gap(logh):
        return _pilot_expected_roughness(math.exp(logh), sigma, n, error, kernel) - target

    lo, hi = math.log(1e-3 * sigma), math.log(10.0 * sigma)
    while gap(lo) < 0:
        lo -= 1.0
    h0 = math.exp(optimize.brentq(gap, lo, hi, xtol=1e-10))
    T = 1.0 / h0
    xmax = max(1.0, float(np.abs(x - x.mean()).max()))
    npan = max(16, int(math.ceil(T * xmax * 4 / math.pi)))
    gx, gw = _gauss(16)
    edges = np.linspace(0.0, T, npan + 1)
    half = 0.5 * np.diff(edges)[:, None]
    t = (0.5 * (edges[:-1] + edges[1:])[:, None] + half * gx).ravel()
    w = (half * gw).ravel()
    xc = x - x.mean()
    ecf2 = np.empty(t.size)
    step = max(1, (1 << 20) // n)
    for lo_ in range(0, t.size, step):
        arg = np.outer(t[lo_ : lo_ + step], xc)
        ecf2[lo_ : lo_ + step] = np.cos(arg).mean(axis=1) ** 2 + np.sin(arg).mean(axis=1) ** 2
    amp = t * kernel.ft(h0 * t) * error.inverse_cf(t)
    return float(np.dot(amp * amp * ecf2, w) / math.pi)
