"""Oscillatory Fourier-inversion quadrature.

The weight functions behind the estimators are

    L1(u | h) = 1/2 + (1/pi) int_0^T sin(tu)/t  K^Ft(ht) / f^Ft(t) dt,
    L(v)      = (1/pi) int_0^1 cos(wv) K^Ft(w) / f^Ft(w/h) dw,

with ``T = 1/h`` for ``h > 0``. Both are sine or cosine transforms of a
smooth amplitude, so the engine uses Gauss-Legendre panels whose width is
tied to the period of the oscillation, and accepts a result once doubling
the number of panels changes it by less than the tolerance.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .distributions import ErrorModel, NoError, smoothness_class
from .errors import QuadratureError, UnsupportedBandwidthError
from .kernels import Kernel

__all__ = [
    "QuadratureSpec",
    "WeightContext",
    "sine_integral",
    "cosine_integral",
    "l1_weight",
    "l1_derivative",
    "l_weight",
    "WeightTable",
]

_CHUNK = 1 << 22  # max matrix entries per block


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and resolution of the oscillatory quadrature.

    Parameters
    ----------
    rel_tol, abs_tol : float
        A result is accepted when refinement changes it by less than
        ``max(abs_tol, rel_tol * int |integrand|)``.
    panels_per_period : int
        Panels per half period ``pi/|u|`` of the oscillation.
    gauss_points_per_panel : int
        Gauss-Legendre order inside each panel.
    t_max_zero_bandwidth : float
        Truncation point of the frequency integral when ``h = 0``.
    max_refinements : int
        Number of panel doublings tried before giving up.
    """

    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    panels_per_period: int = 4
    gauss_points_per_panel: int = 16
    t_max_zero_bandwidth: float = 1e6
    max_refinements: int = 4

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.panels_per_period < 2:
            raise ValueError("panels_per_period must be at least 2")
        if self.gauss_points_per_panel < 2:
            raise ValueError("gauss_points_per_panel must be at least 2")
        if not self.t_max_zero_bandwidth > 0:
            raise ValueError("t_max_zero_bandwidth must be positive")


@lru_cache(maxsize=16)
def _gauss(m: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(m)


def _panel_nodes(a: float, b: float, npan: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gauss(m)
    edges = np.linspace(a, b, npan + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


def _transform(g: Callable, u, T: float, spec: QuadratureSpec, kind: str, a: float = 0.0):
    """Vectorised ``int_a^T osc(t u) g(t) dt`` with ``osc`` sine-over-t or cosine."""
    u = np.asarray(u, dtype=float)
    flat = u.ravel()
    out = np.zeros(flat.shape)
    if T <= a:
        return out.reshape(u.shape) if u.ndim else float(out[0])
    length = T - a
    au = np.abs(flat)
    base = np.maximum(8.0, np.ceil(length * au * spec.panels_per_period / math.pi))
    bucket = 2 ** np.ceil(np.log2(base)).astype(int)
    m = spec.gauss_points_per_panel
    cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def nodes(npan):
        if npan not in cache:
            t, w = _panel_nodes(a, T, npan, m)
            cache[npan] = (t, g(t) * w)
        return cache[npan]

    def apply(npan, uu):
        t, gw = nodes(npan)
        val = np.empty(uu.size)
        mass = np.empty(uu.size)
        step = max(1, _CHUNK // t.size)
        for lo in range(0, uu.size, step):
            arg = np.outer(uu[lo : lo + step], t)
            if kind == "sin":
                mat = np.sin(arg) / t
            else:
                mat = np.cos(arg)
            val[lo : lo + step] = mat @ gw
            mass[lo : lo + step] = np.abs(mat) @ np.abs(gw)
        return val, mass

    for b in np.unique(bucket):
        idx = np.flatnonzero(bucket == b)
        if kind == "sin":
            zero = flat[idx] == 0.0
            idx = idx[~zero]
            if idx.size == 0:
                continue
        prev, _ = apply(int(b), flat[idx])
        npan = int(b)
        pending = idx
        for _ in range(spec.max_refinements):
            npan *= 2
            cur, mass = apply(npan, flat[pending])
            ok = np.abs(cur - prev) <= np.maximum(spec.abs_tol, spec.rel_tol * mass)
            out[pending[ok]] = cur[ok]
            pending, prev = pending[~ok], cur[~ok]
            if pending.size == 0:
                break
        if pending.size:
            raise QuadratureError(
                f"oscillatory quadrature did not converge for u = {flat[pending[0]]:g}",
                (float(prev[0]), float(cur[~ok][0])),
            )
    return out.reshape(u.shape) if u.ndim else float(out[0])


def sine_integral(g: Callable, u, T: float, spec: QuadratureSpec = QuadratureSpec()):
    """Return ``int_0^T sin(tu)/t g(t) dt``.

    Parameters
    ----------
    g : callable
        Vectorised amplitude, bounded on ``[0, T]``.
    u : float or array_like
        Frequencies; the result has the same shape.
    T : float
        Upper limit.
    spec : QuadratureSpec

    Raises
    ------
    QuadratureError
        If refinement fails to settle within ``spec.max_refinements``.
    """
    return _transform(g, u, T, spec, "sin")


def cosine_integral(g: Callable, u, T: float, spec: QuadratureSpec = QuadratureSpec()):
    """Return ``int_0^T cos(tu) g(t) dt``."""
    return _transform(g, u, T, spec, "cos")


@dataclass(frozen=True)
class WeightContext:
    """Kernel, error law, bandwidth and quadrature settings of an estimator.

    ``h = 0`` is accepted for the degenerate error, for error laws that pass
    the root-n smoothness test, and (with a warning) for tail exponents in
    ``[1/2, 1)`` where the inversion integral still converges.
    """

    kernel: Kernel
    error: ErrorModel
    h: float
    spec: QuadratureSpec = QuadratureSpec()

    def __post_init__(self):
        if not (self.h >= 0 and math.isfinite(self.h)):
            raise ValueError(f"bandwidth must be a finite nonnegative number, got {self.h}")
        object.__setattr__(self, "h", float(self.h))
        if self.h == 0 and not isinstance(self.error, NoError):
            if smoothness_class(self.error).feasible:
                return
            if self.error.tail_exponent < 1.0:
                warnings.warn(
                    "h = 0 with error tail exponent in [1/2, 1): the estimator exists "
                    "but is not root-n consistent",
                    RuntimeWarning,
                    stacklevel=3,
                )
                return
            raise UnsupportedBandwidthError(
                f"h = 0 is not admissible for {self.error.spec}: the inversion integral diverges"
            )

    @property
    def upper(self) -> float:
        """Upper limit of the frequency integral."""
        return 1.0 / self.h if self.h > 0 else self.spec.t_max_zero_bandwidth

    def amplitude(self, t):
        """``K^Ft(ht) / f^Ft(t)``."""
        t = np.asarray(t, dtype=float)
        if self.h == 0:
            return self.error.inverse_cf(t)
        return self.kernel.ft(self.h * t) * self.error.inverse_cf(t)

    def zero_bandwidth_tail_bound(self, u) -> np.ndarray:
        """Crude bound on the part of ``L1(u|0)`` lost by truncating at ``t_max``."""
        u = np.abs(np.asarray(u, dtype=float))
        T = self.spec.t_max_zero_bandwidth
        lead = self.error.tail_exponent - 1.0
        with np.errstate(divide="ignore"):
            return 2.0 * T**lead / (math.pi * self.error.tail_constant * u)


_FAR = 2e5


def _far_sine(ctx: WeightContext, u: np.ndarray) -> np.ndarray:
    """``int_0^T sin(tu)/t g(t) dt`` for ``T|u|`` beyond ``_FAR``.

    With ``g(0) = 1`` and ``m(t) = (g(t) - 1)/t`` (so ``m(0) = 0`` for even
    ``g``), two integrations by parts give
    ``Si(Tu) - cos(Tu) m(T)/u + sin(Tu) m'(T)/u^2 + O(u^-3)``.
    """
    T = ctx.upper
    d = 1e-6 * T
    gT, gd = ctx.amplitude(np.array([T, T - d]))
    mT = (gT - 1.0) / T
    dm = (mT - (gd - 1.0) / (T - d)) / d
    return special.sici(T * u)[0] - np.cos(T * u) * mT / u + np.sin(T * u) * dm / u**2


def l1_weight(ctx: WeightContext, u):
    """Distribution-function weight ``L1(u | h)``; exactly 1/2 at ``u = 0``."""
    u = np.asarray(u, dtype=float)
    if ctx.h > 0:
        far = np.abs(u) * ctx.upper > _FAR
        if far.any():
            val = np.empty(u.shape)
            val[far] = 0.5 + _far_sine(ctx, u[far]) / math.pi
            near = ~far
            val[near] = 0.5 + sine_integral(ctx.amplitude, u[near], ctx.upper, ctx.spec) / math.pi
            return val if np.ndim(val) else float(val)
        val = 0.5 + sine_integral(ctx.amplitude, u, ctx.upper, ctx.spec) / math.pi
    elif isinstance(ctx.error, NoError):
        val = 0.5 + special.sici(ctx.upper * u)[0] / math.pi
    else:
        val = 0.5 + _zero_bandwidth_sine(ctx, u) / math.pi
    return val if np.ndim(val) else float(val)


def l1_derivative(ctx: WeightContext, u):
    """Derivative of ``L1`` in ``u``, equal to ``L(u/h) / h``."""
    if ctx.h == 0:
        raise UnsupportedBandwidthError("the density weight needs h > 0")
    return cosine_integral(ctx.amplitude, u, ctx.upper, ctx.spec) / math.pi


def l_weight(ctx: WeightContext, v):
    """Density weight ``L(v)``.

    Written in the unscaled variable ``w = h t`` so the integral runs over
    ``[0, 1]``: ``L(v) = (1/pi) int_0^1 cos(wv) K^Ft(w) / f^Ft(w/h) dw``.
    """
    if ctx.h == 0:
        raise UnsupportedBandwidthError("the density weight needs h > 0")
    h = ctx.h

    def amp(w):
        return ctx.kernel.ft(w) * ctx.error.inverse_cf(w / h)

    return cosine_integral(amp, v, 1.0, ctx.spec) / math.pi


# ---------------------------------------------------------------------------
# h = 0 for a smooth error law
# ---------------------------------------------------------------------------

_IBP_TERMS = 14
_TAIL_TERMS = 16


def _ibp_antiderivative(exps, coefs, u: float, t: float) -> complex:
    """Antiderivative of ``e^{iut} f(t)`` with ``f = sum coefs t^exps``.

    Uses ``int e^{iut} f = e^{iut} sum_j (-1)^j f^(j)(t) / (iu)^(j+1)``,
    accurate when ``|u| t`` is large. Its imaginary part integrates
    ``sin(ut) f`` and its real part ``cos(ut) f``.
    """
    total = 0.0 + 0.0j
    fall = np.ones_like(exps)
    iu = 1j * u
    for j in range(_IBP_TERMS):
        deriv = np.sum(coefs * fall * t ** (exps - j))
        total += (-1) ** j * deriv / iu ** (j + 1)
        fall = fall * (exps - j)
    return complex(np.exp(1j * u * t) * total)


def _ibp_sine(exps, coefs, u: float, t: float) -> float:
    return _ibp_antiderivative(exps, coefs, u, t).imag


def _zero_bandwidth_sine(ctx: WeightContext, u: np.ndarray):
    T = ctx.upper
    exps, coefs = ctx.error.inverse_cf_tail(_TAIL_TERMS)
    exps = exps - 1.0  # amplitude over t
    flat = np.asarray(u, dtype=float).ravel()
    out = np.zeros(flat.shape)
    for i, ui in enumerate(flat):
        if ui == 0.0:
            continue
        t1 = max(4.0, 200.0 / abs(ui))
        if t1 >= T:
            out[i] = sine_integral(ctx.amplitude, ui, T, ctx.spec)
            continue
        head = sine_integral(ctx.amplitude, ui, t1, ctx.spec)
        out[i] = head + _ibp_sine(exps, coefs, ui, T) - _ibp_sine(exps, coefs, ui, t1)
    return out.reshape(np.shape(u)) if np.ndim(u) else float(out[0])


# ---------------------------------------------------------------------------
# interpolation table for bulk evaluation
# ---------------------------------------------------------------------------


class WeightTable:
    """Cubic Hermite table of ``L1(.|h)`` for repeated evaluation.

    Nodes are spaced ``pi h / 64`` apart and carry both ``L1`` and its exact
    derivative, so the interpolant is accurate far below the statistical
    noise of any estimate built on it. Arguments outside ``[lo, hi]`` fall
    back to direct quadrature.

    Parameters
    ----------
    ctx : WeightContext
        Must have ``h > 0``.
    lo, hi : float
        Range covered by the table.
    spacing : float, optional
        Node spacing; defaults to ``pi h / 64``.
    """

    def __init__(self, ctx: WeightContext, lo: float, hi: float, spacing: float | None = None):
        if ctx.h <= 0:
            raise UnsupportedBandwidthError("tables need h > 0")
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.ctx = ctx
        step = spacing if spacing is not None else math.pi * ctx.h / 64.0
        count = int(math.ceil((hi - lo) / step)) + 1
        self.nodes = lo + step * np.arange(count)
        self.lo, self.hi = float(self.nodes[0]), float(self.nodes[-1])
        self._step = step
        y = l1_weight(ctx, self.nodes)
        # slopes scaled to the unit interval of each cell
        d = l1_derivative(ctx, self.nodes) * step
        y0, y1, d0, d1 = y[:-1], y[1:], d[:-1], d[1:]
        self._coef = (
            y0,
            d0,
            3.0 * (y1 - y0) - 2.0 * d0 - d1,
            2.0 * (y0 - y1) + d0 + d1,
        )

    def _hermite(self, u):
        s = (u - self.lo) / self._step
        i = np.minimum(s.astype(np.intp), self.nodes.size - 2)
        t = s - i
        c0, c1, c2, c3 = (c.take(i) for c in self._coef)
        return c0 + t * (c1 + t * (c2 + t * c3))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u >= self.lo) & (u <= self.hi)
        if inside.all():
            return self._hermite(u)
        out = np.empty(u.shape)
        out[inside] = self._hermite(u[inside])
        out[~inside] = l1_weight(self.ctx, u[~inside])
        return out
