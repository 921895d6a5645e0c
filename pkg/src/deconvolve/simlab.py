"""Seeded Monte Carlo experiments for the deconvolution estimators.

Every replication draws its target and error samples from its own stream,
``PCG64(SeedSequence(seed, spawn_key=(run, role)))`` with role 0 for ``W``
and role 1 for ``delta``. Per-run estimates are stored in a dense array and
reduced in a fixed order, so results do not depend on the number of worker
processes or on the order in which replications finish.
"""

from __future__ import annotations

import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .asymptotics import rates
from .bandwidth import MisePlan, select_bandwidth
from .distributions import ErrorModel, TargetModel
from .errors import DeconvolutionError
from .estimators import DeconvFit, abs_moment, adaptive_curve, cdf_at, quantile, standard_span
from .kernels import Kernel
from .transforms import QuadratureSpec, WeightContext, WeightTable, _gauss

__all__ = [
    "ESTIMANDS",
    "ExperimentConfig",
    "McSummary",
    "RateReport",
    "stream",
    "draw_sample",
    "run_mse_experiment",
    "run_ise_experiment",
    "run_rate_study",
    "ise_simpson",
    "ise_parseval",
    "DEFAULT_H_GRID",
]

ESTIMANDS = ("cdf", "quantile", "absmoment", "ise")
DEFAULT_H_GRID = tuple(round(0.2 * k, 10) for k in range(1, 11))
ISE_GRID_POINTS = 2049

_ARG_NAMES = {"cdf": "x", "quantile": "u", "absmoment": "q", "ise": "quantity"}


def stream(seed: int, run: int, role: int) -> np.random.Generator:
    """Independent generator for one replication and one role."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(run, role))))


def draw_sample(target: TargetModel, error: ErrorModel, n: int, seed: int, run: int) -> np.ndarray:
    """Contaminated sample ``X = W + delta`` of replication ``run``."""
    w = target.sample(n, stream(seed, run, 0))
    d = error.sample(n, stream(seed, run, 1))
    return w + d


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Description of a Monte Carlo experiment.

    Parameters
    ----------
    target, error : models of ``W`` and ``delta``
    n : int
        Sample size per replication.
    h_grid : sequence of float
        Positive, strictly increasing bandwidths. Ignored for ``"ise"``,
        whose bandwidth is selected from each sample.
    estimand : {"cdf", "quantile", "absmoment", "ise"}
    args : sequence of float
        Evaluation points ``x``, quantile levels ``u`` or moment orders ``q``.
    runs : int
    seed : int
    kernel : Kernel
    spec : QuadratureSpec
    workers : int
        Number of processes; results do not depend on it.
    ise_method : {"simpson", "parseval"}
        Quadrature for the integrated squared error.
    """

    target: TargetModel
    error: ErrorModel
    n: int
    h_grid: Sequence[float] = DEFAULT_H_GRID
    estimand: str = "cdf"
    args: Sequence[float] = ()
    runs: int = 500
    seed: int = 0
    kernel: Kernel = Kernel(4, 2)
    spec: QuadratureSpec = QuadratureSpec()
    workers: int = 1
    ise_method: str = "simpson"

    def __post_init__(self):
        if self.estimand not in ESTIMANDS:
            raise ValueError(f"unknown estimand '{self.estimand}'")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        h = np.asarray(self.h_grid, dtype=float)
        if self.estimand != "ise":
            if h.size == 0 or np.any(h <= 0) or np.any(np.diff(h) <= 0):
                raise ValueError("h_grid must be positive and strictly increasing")
        object.__setattr__(self, "h_grid", tuple(float(v) for v in h))
        args = tuple(float(a) for a in self.args)
        if self.estimand == "ise":
            if self.kernel.kappa2 == 0:
                raise ValueError("the ISE experiment selects h with a kernel of r = 2")
            if self.ise_method not in ("simpson", "parseval"):
                raise ValueError(f"unknown ise_method '{self.ise_method}'")
        elif not args:
            raise ValueError(f"estimand '{self.estimand}' needs arguments")
        if self.estimand == "quantile" and any(not 0 < a < 1 for a in args):
            raise ValueError("quantile levels must lie in (0, 1)")
        if self.estimand == "absmoment" and any(a <= 0 for a in args):
            raise ValueError("moment orders must be positive")
        object.__setattr__(self, "args", args)

    def truth(self) -> np.ndarray:
        if self.estimand == "cdf":
            return np.asarray(self.target.cdf(np.asarray(self.args)), dtype=float)
        if self.estimand == "quantile":
            return np.array([float(self.target.ppf(u)) for u in self.args])
        if self.estimand == "absmoment":
            return np.array([self.target.abs_moment(q) for q in self.args])
        raise ValueError("the ISE experiment has no fixed truth")


@dataclass(frozen=True, eq=False)
class McSummary:
    """Per-cell Monte Carlo statistics.

    Arrays are indexed by ``(h, argument)``. ``estimates`` holds every
    replication, with ``nan`` where the estimator failed; statistics use the
    successful replications only and ``failures`` counts the others.
    """

    estimand: str
    h_grid: np.ndarray
    args: np.ndarray
    truth: np.ndarray
    estimates: np.ndarray = field(repr=False)
    mean: np.ndarray
    bias: np.ndarray
    variance: np.ndarray
    mse: np.ndarray
    mc_se: np.ndarray
    failures: np.ndarray
    seed: int
    runs: int
    metadata: dict = field(default_factory=dict)
    wall_time: float = field(default=0.0, compare=False)

    @classmethod
    def from_estimates(cls, estimand, h_grid, args, truth, estimates, seed, metadata=None, wall_time=0.0):
        est = np.asarray(estimates, dtype=float)
        truth = np.asarray(truth, dtype=float)
        truth_b = truth if truth.ndim == 2 else truth[None, :]
        ok = np.isfinite(est)
        count = ok.sum(axis=0)
        safe = np.where(ok, est, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = safe.sum(axis=0) / count
            dev = np.where(ok, est - mean, 0.0)
            variance = (dev * dev).sum(axis=0) / count
            err = np.where(ok, est - truth_b, 0.0)
            sq = err * err
            mse = sq.sum(axis=0) / count
            sq_dev = np.where(ok, sq - mse, 0.0)
            mc_se = np.sqrt((sq_dev * sq_dev).sum(axis=0) / count / count)
        bias = mean - truth_b
        return cls(
            estimand,
            np.asarray(h_grid, dtype=float),
            np.asarray(args, dtype=float),
            truth,
            est,
            mean,
            bias,
            variance,
            mse,
            mc_se,
            est.shape[0] - count,
            int(seed),
            est.shape[0],
            dict(metadata or {}),
            wall_time,
        )

    def argmin_h(self) -> np.ndarray:
        """Grid bandwidth with the smallest MSE for each argument."""
        return self.h_grid[np.nanargmin(self.mse, axis=0)]

    def deviations_at_optimum(self) -> np.ndarray:
        """Per-run deviations ``estimate - truth`` at each argument's best ``h``."""
        idx = np.nanargmin(self.mse, axis=0)
        truth_b = np.broadcast_to(self.truth, self.mse.shape)
        cols = np.arange(self.args.size)
        return self.estimates[:, idx, cols] - truth_b[idx, cols]

    def to_csv(self) -> str:
        """CSV with header ``h,<arg>,bias,variance,mse,mc_se``."""
        buf = io.StringIO()
        buf.write(f"h,{_ARG_NAMES[self.estimand]},bias,variance,mse,mc_se\n")
        for i, h in enumerate(self.h_grid):
            for j, a in enumerate(self.args):
                row = (h, a, self.bias[i, j], self.variance[i, j], self.mse[i, j], self.mc_se[i, j])
                buf.write(",".join(_fmt(v) for v in row) + "\n")
        return buf.getvalue()

    def dump_runs(self, fh) -> None:
        """Write a JSON-lines record of every replication."""
        meta = {
            "estimand": self.estimand,
            "seed": self.seed,
            "runs": self.runs,
            "h": self.h_grid.tolist(),
            "args": self.args.tolist(),
            "truth": self.truth.tolist(),
        }
        meta.update({k: v for k, v in self.metadata.items() if _jsonable(v)})
        fh.write(json.dumps({"meta": meta}) + "\n")
        for r in range(self.runs):
            rec = [[None if not math.isfinite(v) else v for v in row] for row in self.estimates[r].tolist()]
            fh.write(json.dumps({"run": r, "estimates": rec}) + "\n")


def _fmt(v: float) -> str:
    return repr(float(v))


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
    except TypeError:
        return False
    return True


# ---------------------------------------------------------------------------
# MSE experiments
# ---------------------------------------------------------------------------


def _table_range(cfg: ExperimentConfig, h: float, xmin: float, xmax: float) -> tuple[float, float]:
    if cfg.estimand == "cdf":
        return min(cfg.args) - xmax, max(cfg.args) - xmin
    pad = 10.0 * (h + 1.0) + 1.0
    return xmin - xmax - pad, xmax - xmin + pad


def _estimate_block(cfg: ExperimentConfig, runs: Sequence[int], xmin: float, xmax: float) -> np.ndarray:
    out = np.full((len(runs), len(cfg.h_grid), len(cfg.args)), np.nan)
    samples = [draw_sample(cfg.target, cfg.error, cfg.n, cfg.seed, r) for r in runs]
    args = np.asarray(cfg.args)
    for i, h in enumerate(cfg.h_grid):
        ctx = WeightContext(cfg.kernel, cfg.error, h, cfg.spec)
        table = None
        if cfg.estimand in ("cdf", "quantile"):
            table = WeightTable(ctx, *_table_range(cfg, h, xmin, xmax))
        for k, x in enumerate(samples):
            fit = DeconvFit(x, ctx)
            if cfg.estimand == "cdf":
                out[k, i] = cdf_at(fit, args, table)
                continue
            curve = adaptive_curve(fit, table=table) if cfg.estimand == "quantile" else None
            for j, a in enumerate(args):
                try:
                    if cfg.estimand == "quantile":
                        out[k, i, j] = quantile(fit, a, table=table, curve=curve)
                    else:
                        out[k, i, j] = abs_moment(fit, a)
                except DeconvolutionError:
                    pass
    return out


def _run_blocks(worker, cfg: ExperimentConfig, *extra) -> np.ndarray:
    runs = list(range(cfg.runs))
    if cfg.workers == 1:
        return worker(cfg, runs, *extra)
    chunks = [c.tolist() for c in np.array_split(np.arange(cfg.runs), cfg.workers) if c.size]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        parts = list(pool.map(worker, [cfg] * len(chunks), chunks, *[[e] * len(chunks) for e in extra]))
    return np.concatenate(parts, axis=0)


def _sample_extent(cfg: ExperimentConfig) -> tuple[float, float]:
    lo, hi = math.inf, -math.inf
    for r in range(cfg.runs):
        x = draw_sample(cfg.target, cfg.error, cfg.n, cfg.seed, r)
        lo, hi = min(lo, float(x.min())), max(hi, float(x.max()))
    return lo, hi


def run_mse_experiment(cfg: ExperimentConfig) -> McSummary:
    """Bias, variance and MSE of an estimand over the bandwidth grid.

    Estimator failures (for example a quantile level the monotone curve
    never reaches) are recorded as ``nan`` and counted, not raised.
    """
    if cfg.estimand == "ise":
        raise ValueError("use run_ise_experiment for the ISE estimand")
    start = time.perf_counter()
    xmin, xmax = _sample_extent(cfg)
    est = _run_blocks(_estimate_block, cfg, xmin, xmax)
    meta = {"n": cfg.n, "kernel": cfg.kernel.spec, "error": cfg.error.spec, "target": cfg.target.spec}
    return McSummary.from_estimates(
        cfg.estimand, cfg.h_grid, cfg.args, cfg.truth(), est, cfg.seed, meta, time.perf_counter() - start
    )


# ---------------------------------------------------------------------------
# integrated squared error
# ---------------------------------------------------------------------------


def ise_simpson(fit: DeconvFit, target: TargetModel, table: Optional[WeightTable] = None,
                points: int = ISE_GRID_POINTS) -> float:
    """``int (F(x|h) - F_W(x))^2 dx`` by Simpson's rule on the standard span."""
    lo, hi = standard_span(fit)
    grid = np.linspace(lo, hi, points)
    diff = cdf_at(fit, grid, table) - target.cdf(grid)
    step = (hi - lo) / (points - 1)
    w = np.ones(points)
    w[1:-1:2], w[2:-1:2] = 4.0, 2.0
    return float(step / 3.0 * np.dot(w, diff * diff))


def ise_parseval(fit: DeconvFit, target: TargetModel, panels_per_unit: float = 8.0) -> float:
    """Integrated squared error in the frequency domain.

    ``F(x|h) - F_W(x)`` has Fourier transform ``(phi_hat - phi_W)(t) / (-it)``,
    so the ISE equals ``(1/pi) int_0^inf |phi_hat - phi_W|^2 / t^2 dt`` with
    ``phi_hat = K^Ft(ht) ecf(t) / f^Ft(t)`` below ``1/h`` and 0 above.
    """
    h = fit.h
    if h <= 0:
        raise ValueError("the frequency-domain ISE needs h > 0")
    T = 1.0 / h
    x = fit.data
    shift = float(np.median(x))
    spread = max(1.0, float(np.abs(x - shift).max()))
    npan = max(32, int(math.ceil(T * spread * panels_per_unit / math.pi)))
    gx, gw = _gauss(16)
    edges = np.linspace(0.0, T, npan + 1)
    half = 0.5 * np.diff(edges)[:, None]
    t = (0.5 * (edges[:-1] + edges[1:])[:, None] + half * gx).ravel()
    w = (half * gw).ravel()
    ecf = np.empty(t.size, dtype=complex)
    step = max(1, (1 << 20) // x.size)
    for lo in range(0, t.size, step):
        ecf[lo : lo + step] = np.exp(1j * np.outer(t[lo : lo + step], x - shift)).mean(axis=1)
    phase = np.exp(1j * t * shift)
    est = fit.ctx.amplitude(t) * ecf * phase
    head = float(np.dot(np.abs(est - target.cf(t)) ** 2 / (t * t), w))
    # above 1/h the estimate vanishes and only |phi_W|^2 / t^2 remains
    tail = 0.0
    lo = T
    for _ in range(64):
        tt, ww = _panel_block(lo, 2.0 * lo, gx, gw)
        part = float(np.dot(np.abs(target.cf(tt)) ** 2 / (tt * tt), ww))
        tail += part
        lo *= 2.0
        if part <= 1e-15 * max(tail, 1e-300) or part < 1e-18:
            break
    return (head + tail) / math.pi


def _panel_block(a: float, b: float, gx, gw, npan: int = 64):
    edges = np.linspace(a, b, npan + 1)
    half = 0.5 * np.diff(edges)[:, None]
    t = (0.5 * (edges[:-1] + edges[1:])[:, None] + half * gx).ravel()
    return t, (half * gw).ravel()


def _reference_bandwidth(cfg: ExperimentConfig) -> tuple[float, float]:
    plan = MisePlan(cfg.error, n=cfg.n, kernel=cfg.kernel, roughness="exact", target=cfg.target)
    res = select_bandwidth(plan)
    return res.h_opt, res.mise_min


def _ise_block(cfg: ExperimentConfig, runs: Sequence[int]) -> np.ndarray:
    out = np.full((len(runs), 1, 2), np.nan)
    for k, r in enumerate(runs):
        x = draw_sample(cfg.target, cfg.error, cfg.n, cfg.seed, r)
        try:
            h = select_bandwidth(MisePlan(cfg.error, kernel=cfg.kernel, roughness="onestep", data=x)).h_opt
            out[k, 0, 1] = h
            fit = DeconvFit(x, WeightContext(cfg.kernel, cfg.error, h, cfg.spec))
            if cfg.ise_method == "parseval":
                out[k, 0, 0] = ise_parseval(fit, cfg.target)
            else:
                lo, hi = standard_span(fit)
                table = WeightTable(fit.ctx, lo - float(x.max()), hi - float(x.min()))
                out[k, 0, 0] = ise_simpson(fit, cfg.target, table)
        except DeconvolutionError:
            pass
    return out


def run_ise_experiment(cfg: ExperimentConfig) -> McSummary:
    """ISE of the estimate at the data-driven bandwidth, and that bandwidth.

    The two arguments of the summary are ``ise`` (truth 0, so its bias is
    the mean ISE) and ``h_hat`` (truth is the bandwidth that minimises the
    MISE expansion with the exact target roughness). The ``h`` column is
    ``nan`` because the bandwidth varies from run to run.
    """
    if cfg.estimand != "ise":
        raise ValueError("run_ise_experiment needs estimand 'ise'")
    start = time.perf_counter()
    h_ref, mise_min = _reference_bandwidth(cfg)
    est = _run_blocks(_ise_block, cfg)
    meta = {
        "n": cfg.n,
        "kernel": cfg.kernel.spec,
        "error": cfg.error.spec,
        "target": cfg.target.spec,
        "ise_method": cfg.ise_method,
        "ise_span": "[min X - 10(h+1), max X + 10(h+1)]",
        "ise_grid_points": ISE_GRID_POINTS,
        "h_reference": h_ref,
        "mise_min": mise_min,
    }
    return McSummary.from_estimates(
        "ise", [np.nan], [0.0, 1.0], [0.0, h_ref], est, cfg.seed, meta, time.perf_counter() - start
    )


# ---------------------------------------------------------------------------
# rate study
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RateReport:
    """Log-log regression of MSE on ``n``.

    ``slope_se`` comes from weighted least squares with the Monte Carlo
    standard errors of ``log MSE`` as weights.
    """

    mode: str
    x: float
    ns: np.ndarray
    h: np.ndarray
    mse: np.ndarray
    mc_se: np.ndarray
    slope: float
    slope_se: float


def _loglog_fit(ns, mse, mc_se) -> tuple[float, float]:
    lx = np.log(np.asarray(ns, dtype=float))
    ly = np.log(mse)
    sd = np.asarray(mc_se) / np.asarray(mse)
    w = 1.0 / (sd * sd)
    X = np.column_stack([np.ones_like(lx), lx])
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    coef = cov @ (X.T @ (w * ly))
    return float(coef[1]), float(math.sqrt(cov[1, 1]))


def run_rate_study(
    target: TargetModel,
    error: ErrorModel,
    ns: Sequence[int] = (250, 500, 1000, 2000, 4000),
    mode: str = "origin",
    x0: float = 1.5,
    runs: int = 400,
    seed: int = 0,
    kernel: Kernel = Kernel(4, 2),
    C: float = 1.0,
    workers: int = 1,
) -> RateReport:
    """Empirical convergence rate of the distribution estimate.

    ``mode="origin"`` evaluates at ``x = 0`` with bandwidth ``h1(n)``;
    ``mode="offset"`` evaluates at ``x0`` with ``h3(n)``.
    """
    if mode not in ("origin", "offset"):
        raise ValueError("mode must be 'origin' or 'offset'")
    alpha, beta = error.tail_exponent, target.tail_beta
    if beta is None or not alpha > 0.5:
        raise ValueError("the rate study needs alpha > 1/2 and a power-tailed target")
    x = 0.0 if mode == "origin" else float(x0)
    hs, mses, ses = [], [], []
    for k, n in enumerate(ns):
        rb = rates(alpha, beta, n, C)
        h = rb.h1 if mode == "origin" else rb.h3
        cfg = ExperimentConfig(target, error, int(n), (h,), "cdf", (x,), runs, seed + k, kernel, workers=workers)
        s = run_mse_experiment(cfg)
        hs.append(h)
        mses.append(float(s.mse[0, 0]))
        ses.append(float(s.mc_se[0, 0]))
    slope, se = _loglog_fit(ns, np.array(mses), np.array(ses))
    return RateReport(mode, x, np.asarray(ns), np.array(hs), np.array(mses), np.array(ses), slope, se)
