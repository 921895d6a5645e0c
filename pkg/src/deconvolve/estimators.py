"""Deconvolution estimators of the distribution, density, quantiles and moments.

All estimators act on a :class:`DeconvFit`, which binds the contaminated
sample to a :class:`~deconvolve.transforms.WeightContext`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from .distributions import ErrorModel, NoError, smoothness_class
from .errors import (
    DegenerateDistributionError,
    DivergentIntegralError,
    NonIntegrableTailError,
    SpanExhaustedError,
    UnsupportedBandwidthError,
    UnsupportedMomentError,
)
from .kernels import Kernel
from .transforms import (
    QuadratureSpec,
    WeightContext,
    WeightTable,
    _gauss,
    _ibp_antiderivative,
    l1_weight,
    l_weight,
)

__all__ = [
    "DeconvFit",
    "CdfCurve",
    "cdf_at",
    "density_at",
    "evaluate_curve",
    "monotonize",
    "standard_span",
    "adaptive_curve",
    "quantile",
    "poly_moment",
    "abs_moment",
    "resample",
]

_BLOCK = 1 << 20


@dataclass(frozen=True, eq=False)
class DeconvFit:
    """A contaminated sample bound to an error law, kernel and bandwidth.

    Parameters
    ----------
    data : array_like
        Observations ``X_j = W_j + delta_j``.
    ctx : WeightContext
    """

    data: np.ndarray
    ctx: WeightContext

    def __post_init__(self):
        data = np.array(self.data, dtype=float).ravel()
        if data.size < 1:
            raise ValueError("need at least one observation")
        if not np.all(np.isfinite(data)):
            raise ValueError("data must be finite")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def create(
        cls,
        data,
        error: ErrorModel,
        h: float,
        kernel: Kernel = Kernel(4, 2),
        spec: QuadratureSpec = QuadratureSpec(),
    ) -> "DeconvFit":
        return cls(data, WeightContext(kernel, error, h, spec))

    @property
    def n(self) -> int:
        return self.data.size

    @property
    def h(self) -> float:
        return self.ctx.h


@dataclass(frozen=True, eq=False)
class CdfCurve:
    """Distribution-function estimate tabulated on a grid."""

    grid: np.ndarray
    values: np.ndarray
    monotonized: bool = False

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.shape != values.shape or grid.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if grid.size > 1 and not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


def _mean_weights(fit: DeconvFit, x, weight) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.empty(flat.size)
    rows = max(1, _BLOCK // fit.n)
    for lo in range(0, flat.size, rows):
        u = flat[lo : lo + rows, None] - fit.data[None, :]
        out[lo : lo + rows] = weight(u).mean(axis=1)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def cdf_at(fit: DeconvFit, x, table: Optional[WeightTable] = None):
    """Raw estimate ``n^-1 sum_j L1(x - X_j | h)``; not clamped to [0, 1].

    Parameters
    ----------
    fit : DeconvFit
    x : float or array_like
    table : WeightTable, optional
        Precomputed weights for the same context, used for bulk evaluation.
    """
    if table is not None and table.ctx != fit.ctx:
        raise ValueError("table was built for a different context")
    weight = table if table is not None else (lambda u: l1_weight(fit.ctx, u))
    return _mean_weights(fit, x, weight)


def density_at(fit: DeconvFit, x):
    """Density estimate ``(nh)^-1 sum_j L((x - X_j)/h)``."""
    h = fit.ctx.h
    if h == 0:
        raise UnsupportedBandwidthError("the density estimator needs h > 0")
    return _mean_weights(fit, x, lambda u: l_weight(fit.ctx, u / h) / h)


def evaluate_curve(fit: DeconvFit, grid, table: Optional[WeightTable] = None) -> CdfCurve:
    """Tabulate the raw estimate on a strictly increasing grid."""
    grid = np.asarray(grid, dtype=float)
    return CdfCurve(grid, cdf_at(fit, grid, table))


def monotonize(curve: CdfCurve) -> CdfCurve:
    """Running maximum over the grid ordering."""
    return CdfCurve(curve.grid, np.maximum.accumulate(curve.values), True)


def standard_span(fit: DeconvFit) -> tuple[float, float]:
    """Default evaluation span ``[min X - 10(h+1), max X + 10(h+1)]``."""
    pad = 10.0 * (fit.h + 1.0)
    return float(fit.data.min() - pad), float(fit.data.max() + pad)


def adaptive_curve(
    fit: DeconvFit,
    grid_points: int = 1025,
    span: Optional[tuple[float, float]] = None,
    table: Optional[WeightTable] = None,
    tol: float = 1e-4,
    max_depth: int = 8,
) -> CdfCurve:
    """Raw curve on a uniform grid refined where it is far from linear.

    An interval is split while the estimate at its midpoint differs from
    the chord by more than ``tol``, up to ``max_depth`` halvings.
    """
    lo, hi = span if span is not None else standard_span(fit)
    grid = np.linspace(lo, hi, grid_points)
    values = cdf_at(fit, grid, table)
    left = np.arange(grid.size - 1)
    for _ in range(max_depth):
        if left.size == 0:
            break
        mids = 0.5 * (grid[left] + grid[left + 1])
        fm = cdf_at(fit, mids, table)
        bad = np.abs(fm - 0.5 * (values[left] + values[left + 1])) > tol
        grid = np.concatenate([grid, mids[bad]])
        values = np.concatenate([values, fm[bad]])
        order = np.argsort(grid, kind="stable")
        grid, values = grid[order], values[order]
        pos = np.searchsorted(grid, mids[bad])
        left = np.concatenate([pos - 1, pos])
    return CdfCurve(grid, values)


def quantile(
    fit: DeconvFit,
    u,
    grid_points: int = 1025,
    span: Optional[tuple[float, float]] = None,
    table: Optional[WeightTable] = None,
    curve: Optional[CdfCurve] = None,
):
    """Quantile estimate ``sup{y : F_mon(y) <= u}``.

    The raw curve is tabulated on the adaptive grid, monotonized, and the
    crossing is located by bisection to ``1e-6`` times the span.

    Raises
    ------
    ValueError
        If ``u`` lies outside ``(0, 1)``.
    SpanExhaustedError
        If the monotone curve does not cross ``u`` inside the span.
    """
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr <= 0) | (u_arr >= 1)):
        raise ValueError("quantile level must lie in (0, 1)")
    if curve is None:
        curve = adaptive_curve(fit, grid_points, span, table)
    mon = np.maximum.accumulate(curve.values)
    g = curve.grid
    tol = 1e-6 * (g[-1] - g[0])
    out = np.empty(u_arr.size)
    for k, level in enumerate(u_arr.ravel()):
        i = int(np.searchsorted(mon, level, side="right")) - 1
        if i < 0 or i >= g.size - 1:
            raise SpanExhaustedError(f"monotone estimate never crosses {level:g} inside the span")
        lo, hi = g[i], g[i + 1]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if cdf_at(fit, mid, table) <= level:
                lo = mid
            else:
                hi = mid
        out[k] = lo
    return out.reshape(u_arr.shape) if u_arr.ndim else float(out[0])


def resample(
    fit: DeconvFit,
    m: int,
    rng: np.random.Generator,
    grid_points: int = 1025,
    table: Optional[WeightTable] = None,
) -> np.ndarray:
    """Draw ``m`` values by inverting the clamped monotone curve.

    Raises
    ------
    DegenerateDistributionError
        If the clamped curve is flat over the whole span.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    if m == 0:
        return np.empty(0)
    curve = adaptive_curve(fit, grid_points, table=table)
    f = np.clip(np.maximum.accumulate(curve.values), 0.0, 1.0)
    if not f[-1] > f[0]:
        raise DegenerateDistributionError("estimated distribution is flat on the span")
    g = curve.grid
    level = f[0] + (f[-1] - f[0]) * rng.random(m)
    i = np.clip(np.searchsorted(f, level, side="right") - 1, 0, g.size - 2)
    rise = f[i + 1] - f[i]
    frac = np.where(rise > 0, (level - f[i]) / np.where(rise > 0, rise, 1.0), 0.0)
    return g[i] + np.clip(frac, 0.0, 1.0) * (g[i + 1] - g[i])


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------


def poly_moment(data, error: ErrorModel, r: int) -> float:
    """Moment estimate from the recursion that strips the error moments.

    ``mu_r = mean(X^r) - sum_{j=2}^r C(r, j) E(delta^j) mu_{r-j}`` with odd
    error moments equal to zero and ``mu_0 = 1``.
    """
    if int(r) != r or r < 1:
        raise UnsupportedMomentError(f"r must be a positive integer, got {r}")
    r = int(r)
    x = np.asarray(data, dtype=float).ravel()
    mu = [1.0]
    for k in range(1, r + 1):
        val = float(np.mean(x**k))
        for j in range(2, k + 1, 2):
            val -= special.comb(k, j, exact=True) * error.even_moment(j // 2) * mu[k - j]
        mu.append(val)
    return mu[r]


_SERIES_TERMS = 32


def _re_cf_series(fit: DeconvFit, terms: int = _SERIES_TERMS) -> np.ndarray:
    """Coefficients ``a_j`` of ``t^(2j)`` in ``K^Ft(ht) (1/f^Ft(t)) mean cos(tX)``."""
    x = fit.data
    j = np.arange(terms)
    ecf = np.array([(-1) ** k * np.mean(x ** (2 * k)) / math.factorial(2 * k) for k in j])
    inv = fit.ctx.error.inverse_cf_taylor(terms - 1)
    ker = np.zeros(terms)
    h = fit.ctx.h
    if h == 0:
        ker[0] = 1.0
    else:
        exps, coefs = fit.ctx.kernel.series()
        for e, c in zip(exps, coefs):
            if e // 2 < terms:
                ker[e // 2] += c * h**e
    return np.convolve(np.convolve(ecf, inv)[:terms], ker)[:terms]


def _panel_rule(edges: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = _gauss(m)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


def _mean_cos(data: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.empty(t.size)
    step = max(1, _BLOCK // data.size)
    for lo in range(0, t.size, step):
        out[lo : lo + step] = np.cos(np.outer(t[lo : lo + step], data)).mean(axis=1)
    return out


def abs_moment(fit: DeconvFit, q: float) -> float:
    """Absolute moment ``int |u|^q dF(u | h)`` of the deconvolution estimate.

    The estimate is the signed measure with characteristic function
    ``phi(t) = K^Ft(ht) / f^Ft(t) * ecf(t)``. For ``2k < q < 2k+2``

        nu_q = -(2/pi) Gamma(q+1) sin(pi q/2)
               int_0^inf [Re phi(t) - P_k(t)] t^(-q-1) dt,

    where ``P_k`` is the Taylor polynomial of ``Re phi`` of degree ``2k``.
    The integral is split at a small ``t0`` (series), handled by panels up
    to ``1/h`` and closed analytically beyond. Even integer ``q`` returns
    the corresponding moment of the measure directly.

    Raises
    ------
    NonIntegrableTailError
        If the kernel tail decays too slowly for the moment to exist.
    UnsupportedMomentError
        If the kernel order is too low, ``r <= q + 1``.
    DivergentIntegralError
        For ``h = 0`` when the smoothness criterion fails at this ``q``.
    """
    if not q > 0:
        raise UnsupportedMomentError("q must be positive")
    ctx = fit.ctx
    h = ctx.h
    if h == 0 and isinstance(ctx.error, NoError):
        return float(np.mean(np.abs(fit.data) ** q))
    if h > 0:
        if q >= ctx.kernel.s + 1:
            raise NonIntegrableTailError(
                f"kernel tail decays like |u|^-{ctx.kernel.s + 1}; moment of order {q:g} diverges"
            )
        if ctx.kernel.r <= q + 1:
            raise UnsupportedMomentError(f"kernel order r = {ctx.kernel.r} needs r > q + 1")
    elif not smoothness_class(ctx.error, q).feasible:
        raise DivergentIntegralError(f"h = 0 moment of order {q:g} diverges for {ctx.error.spec}")

    a = _re_cf_series(fit)
    if float(q).is_integer() and int(q) % 2 == 0:
        j = int(q) // 2
        return float((-1) ** j * math.factorial(2 * j) * a[j])

    k = int(q // 2)
    xmax = max(1.0, float(np.abs(fit.data).max()))
    t0 = min(0.25 / xmax, 0.25)
    j = np.arange(a.size)
    p = 2.0 * j - q
    head = float(np.sum((a * t0**p / p)[k + 1 :]))
    if h > 0:
        body = _abs_moment_body(fit, a[: k + 1], q, t0)
    else:
        body = _abs_moment_body_zero(fit, a[: k + 1], q, t0)
    total = head + body
    return float(-2.0 / math.pi * special.gamma(q + 1) * math.sin(0.5 * math.pi * q) * total)


def _abs_moment_body(fit: DeconvFit, a_low: np.ndarray, q: float, t0: float) -> float:
    """``int_t0^inf (Re phi - P_k) t^(-q-1) dt`` for ``h > 0``."""
    ctx, spec = fit.ctx, fit.ctx.spec
    T = 1.0 / ctx.h
    p = 2.0 * np.arange(a_low.size) - q
    # beyond 1/h only -P_k remains: -int_T^inf a_j t^(p-1) = a_j T^p / p
    tail = float(np.sum(a_low * T**p / p))
    if T <= t0:
        return tail - float(np.sum(a_low * (T**p - t0**p) / p))
    xmax = max(1.0, float(np.abs(fit.data).max()))
    width = min(math.pi / (xmax * spec.panels_per_period), t0)
    npan = int(math.ceil((T - t0) / width))
    prev = None
    for _ in range(spec.max_refinements + 1):
        # geometric panels near t0 resolve the t^(-q-1) weight
        geo = t0 * 2.0 ** np.arange(0, 8)
        edges = np.unique(np.concatenate([np.linspace(t0, T, npan + 1), geo[geo < T]]))
        t, w = _panel_rule(edges, spec.gauss_points_per_panel)
        poly = np.polynomial.polynomial.polyval(t * t, a_low)
        f = (ctx.amplitude(t) * _mean_cos(fit.data, t) - poly) * t ** (-q - 1.0)
        cur = float(np.dot(f, w))
        if prev is not None and abs(cur - prev) <= max(
            spec.abs_tol, spec.rel_tol * float(np.dot(np.abs(f), w))
        ):
            break
        prev = cur
        npan *= 2
    return cur + tail


def _abs_moment_body_zero(fit: DeconvFit, a_low: np.ndarray, q: float, t0: float) -> float:
    """Same integral for ``h = 0``, one oscillatory integral per observation."""
    ctx, spec = fit.ctx, fit.ctx.spec
    T = spec.t_max_zero_bandwidth
    exps, coefs = ctx.error.inverse_cf_tail(16)
    exps = exps - q - 1.0
    m = spec.gauss_points_per_panel
    acc = 0.0
    for xj in fit.data:
        ax = abs(xj)
        t1 = min(T, max(4.0, 200.0 / ax) if ax > 0 else T)
        nosc = int(math.ceil((t1 - t0) * ax * spec.panels_per_period / math.pi)) + 1
        geo = np.geomspace(t0, t1, max(2, int(math.ceil(math.log2(t1 / t0))) + 1))
        edges = np.unique(np.concatenate([np.linspace(t0, t1, nosc + 1), geo]))
        t, w = _panel_rule(edges, m)
        val = float(np.dot(ctx.amplitude(t) * np.cos(ax * t) * t ** (-q - 1.0), w))
        if t1 < T:
            val += (
                _ibp_antiderivative(exps, coefs, ax, T) - _ibp_antiderivative(exps, coefs, ax, t1)
            ).real
        acc += val
    p = 2.0 * np.arange(a_low.size) - q
    poly = float(np.sum(a_low * (T**p - t0**p) / p))
    return acc / fit.n - poly
