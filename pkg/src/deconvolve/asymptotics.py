"""Convergence rates and asymptotic bias and variance constants.

The constants describe ``F(x | h)`` for a target whose characteristic
function behaves like ``(a + ib) t^-beta`` and an error law with
``f^Ft(t) ~ z^-1 t^-alpha``:

* at ``x = 0`` the bias is ``B1 h^beta``,
* the variance is ``n^-1 h^(1 - 2 alpha) V(x)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate, special

from .distributions import ErrorModel, NoError, TargetModel
from .errors import PoleError, QuadratureError
from .kernels import Kernel
from .transforms import QuadratureSpec, _gauss, sine_integral

__all__ = [
    "TailProfile",
    "RateBundle",
    "rates",
    "bias_b1",
    "bias_b2",
    "variance_v",
    "variance_inner",
    "fx_density",
    "exact_bias",
]


@dataclass(frozen=True)
class TailProfile:
    """Tail constants of the error and target characteristic functions.

    Parameters
    ----------
    alpha : float
        Error tail exponent, ``f^Ft(t) ~ z^-1 t^-alpha``.
    z : float
        Reciprocal of the error tail constant.
    beta : float
        Target tail exponent.
    a, b : float
        ``f_W^Ft(t) ~ (a + ib) t^-beta``.
    """

    alpha: float
    z: float = 1.0
    beta: float = 1.0
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be nonnegative")
        if not (math.isfinite(self.a) and math.isfinite(self.b) and math.isfinite(self.z)):
            raise ValueError("a, b and z must be finite")

    @classmethod
    def from_models(cls, error: ErrorModel, target: TargetModel) -> "TailProfile":
        a, b = target.tail_coefficients()
        return cls(error.tail_exponent, 1.0 / error.tail_constant, target.tail_beta, a, b)


@dataclass(frozen=True)
class RateBundle:
    """Optimal mean-squared-error rates and bandwidth orders.

    ``rho1`` is the rate at the origin, ``rho3`` off the origin, ``rho2`` the
    integrated rate and ``rho4`` the absolute-moment rate (when ``q`` is
    supplied).
    """

    rho1: float
    rho2: float
    rho3: float
    rho4: Optional[float]
    h1: float
    h2: float
    h3: float
    ell: float


def rates(alpha: float, beta: float, n: float, C: float = 1.0, q: Optional[float] = None) -> RateBundle:
    """Rates ``rho_j = (ell/n)^((2 beta + j - 1)/(2 alpha + 2 beta + j - 2))``.

    Bandwidths are ``h_j = C (ell/n)^(1/(2 alpha + 2 beta + j - 2))`` with
    ``ell = log n`` when ``alpha = 1/2`` and 1 otherwise. For ``alpha < 1/2``
    all rates are ``1/n`` and all bandwidths 0.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    rho4 = None
    if q is not None:
        rho4 = n ** (-(2 * beta + 2 * q) / (2 * alpha + 2 * beta - 1))
    if alpha < 0.5:
        return RateBundle(1.0 / n, 1.0 / n, 1.0 / n, rho4, 0.0, 0.0, 0.0, 1.0)
    ell = math.log(n) if alpha == 0.5 else 1.0
    base = ell / n
    rho = [base ** ((2 * beta + j - 1) / (2 * alpha + 2 * beta + j - 2)) for j in (1, 2, 3)]
    hs = [C * base ** (1.0 / (2 * alpha + 2 * beta + j - 2)) for j in (1, 2, 3)]
    return RateBundle(*rho, rho4, *hs, ell)


def bias_b1(kernel: Kernel, profile: TailProfile, convention: str = "derived") -> float:
    """Bias constant at the origin, ``E F(0|h) - F(0) ~ B1 h^beta``.

    With ``convention="derived"``

        B1 = -(b/pi) sum_{j=0}^s C(s, j) (-1)^j / (r j - beta),

    obtained by substituting the target tail into the exact bias integral
    ``(1/pi) int Im f_W^Ft(t) (1 - K^Ft(ht)) / t dt``. It agrees with the
    numerically computed bias (see :func:`exact_bias`). ``convention="printed"``
    evaluates the alternative form that drops the ``j = 0`` term and uses
    ``2 pi`` in place of ``pi``.

    Raises
    ------
    PoleError
        If ``r j = beta`` for a term of the sum.
    """
    r, s, beta = kernel.r, kernel.s, profile.beta
    if convention == "derived":
        start, scale = 0, 1.0 / math.pi
    elif convention == "printed":
        start, scale = 1, 0.5 / math.pi
    else:
        raise ValueError(f"unknown convention '{convention}'")
    total = 0.0
    for j in range(start, s + 1):
        if r * j == beta:
            raise PoleError(f"r j = beta at j = {j}")
        total += special.comb(s, j, exact=True) * (-1) ** j / (r * j - beta)
    return -profile.b * scale * total


def bias_b2(h: float, x: float, profile: TailProfile) -> float:
    """Oscillating term ``-(a cos(x/h) + b sin(x/h)) / (2 pi x)``.

    This is the leading off-origin bias term for a sharply truncated
    Fourier kernel. For the kernels of this package, whose transforms vanish
    to order ``s >= 1`` at the cut-off, the actual off-origin bias is of
    smaller order than ``h^(beta+1)``.
    """
    if x == 0:
        raise ValueError("bias_b2 is defined for x != 0; use bias_b1 at the origin")
    return -(profile.a * math.cos(x / h) + profile.b * math.sin(x / h)) / (2.0 * math.pi * x)


def variance_inner(u, kernel: Kernel, alpha: float, spec: QuadratureSpec = QuadratureSpec()):
    """``J(u) = int_0^1 sin(tu)/t (1 - t^r)^s t^alpha dt``."""

    def g(t):
        return kernel.ft(t) * t**alpha

    return sine_integral(g, u, 1.0, spec)


def variance_v(
    x: float,
    profile: TailProfile,
    kernel: Kernel,
    fx: float,
    convention: str = "derived",
    rel_tol: float = 1e-3,
    spec: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Variance constant ``V(x)`` of ``F(x|h)``.

    ``V = c pi^-2 z^2 f_X(x) int_0^inf J(u)^2 du`` with ``c = 2`` under the
    derived convention: ``J`` is odd, so the full-line integral that arises
    from the variance is twice the half-line one. ``convention="printed"``
    uses ``c = 1``. The outer integral is doubled in range until the last
    block adds less than ``rel_tol`` of the total; the remaining tail is
    extrapolated geometrically.

    Raises
    ------
    QuadratureError
        If the outer integral does not settle.
    """
    if fx < 0:
        raise ValueError("fx must be nonnegative")
    if convention not in ("derived", "printed"):
        raise ValueError(f"unknown convention '{convention}'")
    if fx == 0:
        return 0.0
    factor = 2.0 if convention == "derived" else 1.0
    gx, gw = _gauss(16)

    def block(lo, hi):
        npan = int(math.ceil((hi - lo) / (0.25 * math.pi)))
        edges = np.linspace(lo, hi, npan + 1)
        half = 0.5 * np.diff(edges)[:, None]
        u = (0.5 * (edges[:-1] + edges[1:])[:, None] + half * gx).ravel()
        w = (half * gw).ravel()
        j = variance_inner(u, kernel, profile.alpha, spec)
        return float(np.dot(j * j, w))

    U = 32.0
    total = block(0.0, U)
    last = total
    for _ in range(12):
        b = block(U, 2 * U)
        total += b
        U *= 2
        if b <= rel_tol * total:
            ratio = b / last if last > 0 else 0.0
            if 0 < ratio < 1:
                total += b * ratio / (1.0 - ratio)
            break
        last = b
    else:
        raise QuadratureError("outer integral of V(x) did not settle", (total - b, total))
    return factor * profile.z**2 * fx * total / math.pi**2


def fx_density(target: TargetModel, error: ErrorModel, x) -> float:
    """Density of ``X = W + delta`` by numeric convolution."""
    x = np.asarray(x, dtype=float)
    if isinstance(error, NoError):
        return target.pdf(x)
    out = np.empty(x.size)
    for i, xi in enumerate(x.ravel()):
        f = lambda y: target.pdf(xi - y) * error.pdf(y)
        lo, _ = integrate.quad(f, -np.inf, 0.0, limit=400, epsabs=1e-13, epsrel=1e-11)
        hi, _ = integrate.quad(f, 0.0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-11)
        out[i] = lo + hi
    return out.reshape(x.shape) if x.ndim else float(out[0])


def exact_bias(target: TargetModel, kernel: Kernel, h: float, x: float) -> float:
    """Exact bias ``E F(x|h) - F_W(x)`` from the target characteristic function.

    Uses ``bias = (1/pi) int_0^inf Im[e^{-itx} f_W^Ft(t)] (1 - K^Ft(ht)) / t dt``,
    which does not depend on the error law.
    """

    def f(t):
        return np.imag(np.exp(-1j * t * x) * target.cf(t)) * (1.0 - kernel.ft(h * t)) / t

    T = 1.0 / h
    gx, gw = _gauss(32)
    npan = max(64, int(math.ceil(T * max(1.0, abs(x)))))
    edges = np.linspace(0.0, T, npan + 1)
    half = 0.5 * np.diff(edges)[:, None]
    t = (0.5 * (edges[:-1] + edges[1:])[:, None] + half * gx).ravel()
    head = float(np.dot(f(t), (half * gw).ravel()))
    # beyond 1/h the kernel vanishes; integrate the oscillatory tail in blocks
    tail = 0.0
    lo = T
    width = math.pi / max(1.0, abs(x))
    for _ in range(200000):
        val, _ = integrate.quad(f, lo, lo + 64 * width, limit=400, epsabs=1e-15, epsrel=1e-12)
        tail += val
        lo += 64 * width
        if abs(val) < 1e-14 and lo > 10 * T:
            break
    return (head + tail) / math.pi
