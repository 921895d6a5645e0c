import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats

from deconvolve import estimators
from deconvolve.asymptotics import fx_density
from deconvolve.distributions import NoError, StdNormal, SymGamma
from deconvolve.errors import (
    DegenerateDistributionError,
    NonIntegrableTailError,
    SpanExhaustedError,
    UnsupportedBandwidthError,
    UnsupportedMomentError,
)
from deconvolve.estimators import (
    CdfCurve,
    DeconvFit,
    abs_moment,
    adaptive_curve,
    cdf_at,
    density_at,
    evaluate_curve,
    monotonize,
    poly_moment,
    quantile,
    resample,
    standard_span,
)
from deconvolve.kernels import Kernel, kernel_real
from deconvolve.simlab import draw_sample
from deconvolve.transforms import QuadratureSpec, WeightTable


def normal_sample(n, error, seed, run=0):
    return draw_sample(StdNormal(), error, n, seed, run)


class TestCdf:
    def test_ecdf_example(self):
        fit = DeconvFit.create([1.0, 2.0, 3.0], NoError(), 0.0)
        assert abs(cdf_at(fit, 2.5) - 2 / 3) < 1e-3

    def test_far_tails(self):
        data = normal_sample(30, SymGamma(2.0), 3)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        big = 1e6 * (1 + np.abs(data).max())
        assert abs(cdf_at(fit, -big)) < 1e-2
        assert abs(cdf_at(fit, big) - 1) < 1e-2

    def test_ecdf_reduction(self, rng):
        data = rng.normal(size=40)
        fit = DeconvFit.create(data, NoError(), 0.0)
        x = rng.uniform(-3, 3, 100)
        ecdf = (data[None, :] <= x[:, None]).mean(axis=1)
        assert np.abs(cdf_at(fit, x) - ecdf).max() < 1e-3

    def test_ecdf_reduction_long_truncation(self, rng):
        data = rng.normal(size=10)
        fit = DeconvFit.create(data, NoError(), 0.0, spec=QuadratureSpec(t_max_zero_bandwidth=1e12))
        x = rng.uniform(-3, 3, 100)
        ecdf = (data[None, :] <= x[:, None]).mean(axis=1)
        assert np.abs(cdf_at(fit, x) - ecdf).max() < 1e-9

    def test_location_equivariance(self, rng):
        data = rng.normal(size=25)
        x = np.array([-1.2, 0.0, 0.4, 2.2])
        a = cdf_at(DeconvFit.create(data, SymGamma(2.0), 0.5), x)
        b = cdf_at(DeconvFit.create(data + 3.7, SymGamma(2.0), 0.5), x + 3.7)
        assert_allclose(a, b, atol=1e-8)

    def test_not_clamped(self):
        # a tight cluster under strong deconvolution overshoots [0, 1]
        fit = DeconvFit.create([0.0, 0.01], SymGamma(6.0), 0.3)
        vals = cdf_at(fit, np.linspace(-4, 4, 161))
        assert vals.min() < 0 or vals.max() > 1

    def test_table_matches_direct(self, rng):
        data = rng.normal(size=20)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        table = WeightTable(fit.ctx, -12, 12)
        x = rng.uniform(-4, 4, 30)
        assert_allclose(cdf_at(fit, x, table), cdf_at(fit, x), atol=1e-8)

    def test_table_context_mismatch(self):
        fit = DeconvFit.create([0.0], SymGamma(2.0), 0.6)
        other = DeconvFit.create([0.0], SymGamma(2.0), 0.5)
        with pytest.raises(ValueError):
            cdf_at(fit, 0.0, WeightTable(other.ctx, -1, 1))

    @pytest.mark.slow
    def test_mean_over_runs(self):
        h, runs = 0.6, 500
        fit_err = SymGamma(2.0)
        ctx = DeconvFit.create([0.0], fit_err, h).ctx
        table = WeightTable(ctx, -25, 25)
        est = np.array(
            [cdf_at(DeconvFit(normal_sample(100, fit_err, 99, r), ctx), 0.0, table) for r in range(runs)]
        )
        y = np.linspace(-12, 12, 241)
        fx = fx_density(StdNormal(), fit_err, y)
        expected = integrate.simpson(table(-y) * fx, x=y)
        # symmetric W and error make the expectation exactly one half
        assert abs(expected - 0.5) < 1e-5
        se = est.std(ddof=1) / math.sqrt(runs)
        assert abs(est.mean() - expected) < 3 * se


class TestFitValidation:
    def test_empty(self):
        with pytest.raises(ValueError):
            DeconvFit.create([], NoError(), 0.1)

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            DeconvFit.create([0.0, np.nan], NoError(), 0.1)

    def test_data_is_read_only(self):
        fit = DeconvFit.create([1.0, 2.0], NoError(), 0.1)
        with pytest.raises(ValueError):
            fit.data[0] = 5.0


class TestDensity:
    def test_noerror_is_kde(self, rng):
        data = rng.normal(size=15)
        h = 0.4
        fit = DeconvFit.create(data, NoError(), h)
        x = np.array([-1.0, 0.0, 0.3, 2.0])
        kde = kernel_real(Kernel(4, 2), (x[:, None] - data[None, :]) / h).mean(axis=1) / h
        assert_allclose(density_at(fit, x), kde, atol=1e-8)

    def test_zero_bandwidth(self):
        with pytest.raises(UnsupportedBandwidthError):
            density_at(DeconvFit.create([0.0], SymGamma(0.4), 0.0), 0.0)

    def test_mass(self):
        data = normal_sample(20, SymGamma(2.0), 4)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        R = 50 * (1 + np.ptp(data))
        # mass over [-R, R] through the antiderivative
        mass = cdf_at(fit, R) - cdf_at(fit, -R)
        assert abs(mass - 1) < 1e-2
        x = np.linspace(-30, 30, 12001)
        assert abs(integrate.simpson(density_at(fit, x), x=x) - mass) < 1e-2

    def test_derivative_of_cdf(self, rng):
        data = normal_sample(30, SymGamma(2.0), 5)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        x = rng.uniform(-3, 3, 20)
        eps = 1e-4
        num = (cdf_at(fit, x + eps) - cdf_at(fit, x - eps)) / (2 * eps)
        assert_allclose(num, density_at(fit, x), atol=1e-4)


class TestMonotonize:
    def test_unchanged(self):
        c = CdfCurve(np.arange(4.0), np.array([0.0, 0.2, 0.2, 0.9]))
        assert_allclose(monotonize(c).values, c.values)

    def test_hand_example(self):
        c = CdfCurve(np.arange(4.0), np.array([0.1, 0.3, 0.25, 0.4]))
        out = monotonize(c)
        assert_allclose(out.values, [0.1, 0.3, 0.3, 0.4])
        assert out.monotonized

    def test_random_against_loop(self, rng):
        for _ in range(20):
            vals = rng.normal(size=50).cumsum()
            c = monotonize(CdfCurve(np.arange(50.0), vals))
            brute, best = [], -np.inf
            for v in vals:
                best = max(best, v)
                brute.append(best)
            assert_allclose(c.values, brute)
            assert np.all(np.diff(c.values) >= 0) and np.all(c.values >= vals)
            assert_allclose(monotonize(c).values, c.values)

    def test_grid_validation(self):
        with pytest.raises(ValueError):
            CdfCurve([0.0, 0.0], [0.1, 0.2])
        with pytest.raises(ValueError):
            CdfCurve([0.0, 1.0], [0.1])

    def test_evaluate_curve(self):
        fit = DeconvFit.create([0.0, 1.0], SymGamma(2.0), 0.5)
        g = np.array([-1.0, 0.5, 2.0])
        assert_allclose(evaluate_curve(fit, g).values, cdf_at(fit, g))


class TestQuantile:
    def test_ecdf_median(self):
        fit = DeconvFit.create([1.0, 2.0, 3.0], NoError(), 0.0)
        assert abs(quantile(fit, 0.5) - 2.0) < 1e-4

    def test_symmetric_median(self):
        err = SymGamma(2.0)
        data = normal_sample(10**4, err, 12)
        fit = DeconvFit.create(data, err, 0.2)
        lo, hi = standard_span(fit)
        table = WeightTable(fit.ctx, lo - data.max(), hi - data.min())
        assert abs(quantile(fit, 0.5, table=table)) < 0.1

    def test_extreme_level_terminates(self):
        fit = DeconvFit.create([1.0, 2.0, 3.0], NoError(), 0.0)
        try:
            val = quantile(fit, 0.999999)
        except SpanExhaustedError:
            return
        lo, hi = standard_span(fit)
        assert lo <= val <= hi

    @pytest.mark.parametrize("u", [0.0, 1.0, -0.2, 1.5])
    def test_domain(self, u):
        with pytest.raises(ValueError):
            quantile(DeconvFit.create([0.0], NoError(), 0.0), u)

    def test_consistency_with_curve(self):
        data = normal_sample(60, SymGamma(2.0), 6)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        curve = adaptive_curve(fit)
        mon = np.maximum.accumulate(curve.values)
        eps = np.diff(mon).max()
        for u in (0.1, 0.5, 0.9):
            xi = quantile(fit, u, curve=curve)
            fmon = np.interp(xi, curve.grid, mon)
            assert u - eps <= fmon <= u + eps


class TestResample:
    def test_empty(self, rng):
        fit = DeconvFit.create([0.0, 1.0], SymGamma(2.0), 0.5)
        assert resample(fit, 0, rng).size == 0

    def test_deterministic(self):
        fit = DeconvFit.create([0.0, 1.0, 2.5], SymGamma(2.0), 0.5)
        a = resample(fit, 50, np.random.default_rng(1))
        b = resample(fit, 50, np.random.default_rng(1))
        assert np.array_equal(a, b)

    def test_ecdf_draws(self, rng):
        data = rng.normal(size=30)
        fit = DeconvFit.create(data, NoError(), 0.0)
        m = 10**4
        draws = resample(fit, m, np.random.default_rng(2))
        # draws spread over a cell of width ~1e-4 around each atom, so the
        # distance is read between atoms where both functions are flat
        srt = np.sort(data)
        grid = np.concatenate([[srt[0] - 1], 0.5 * (srt[1:] + srt[:-1]), [srt[-1] + 1]])
        ecdf = (data[None, :] <= grid[:, None]).mean(axis=1)
        emp = np.searchsorted(np.sort(draws), grid, side="right") / m
        assert np.abs(emp - ecdf).max() < 2 / math.sqrt(m)

    def test_degenerate(self, rng, monkeypatch):
        fit = DeconvFit.create([0.0], NoError(), 0.0)
        flat = CdfCurve(np.linspace(-1, 1, 5), np.full(5, 1.3))
        monkeypatch.setattr(estimators, "adaptive_curve", lambda *a, **k: flat)
        with pytest.raises(DegenerateDistributionError):
            resample(fit, 10, rng)


class TestPolyMoment:
    def test_mean(self, rng):
        x = rng.normal(size=11)
        assert_allclose(poly_moment(x, SymGamma(2.0), 1), x.mean(), rtol=1e-14)

    def test_second(self, rng):
        x = rng.normal(size=11)
        assert_allclose(poly_moment(x, SymGamma(2.0), 2), np.mean(x**2) - 2.0, rtol=1e-14)

    def test_hand_recursion(self):
        assert poly_moment([1.0, -1.0], SymGamma(2.0), 4) == -11.0

    def test_doubling(self, rng):
        x = rng.normal(size=9)
        for r in range(1, 7):
            assert_allclose(
                poly_moment(np.concatenate([x, x]), SymGamma(3.0), r),
                poly_moment(x, SymGamma(3.0), r),
                rtol=1e-12,
            )

    @pytest.mark.parametrize("r", [0, 1.5, -2])
    def test_bad_order(self, r):
        with pytest.raises(UnsupportedMomentError):
            poly_moment([1.0], SymGamma(2.0), r)


class TestAbsMoment:
    def test_point_masses(self):
        fit = DeconvFit.create([1.0, -2.0], NoError(), 0.0)
        assert_allclose(abs_moment(fit, 1.5), (1 + 2**1.5) / 2, rtol=1e-12)

    def test_matches_poly_moment(self):
        data = normal_sample(40, SymGamma(0.4), 8)
        fit = DeconvFit.create(data, SymGamma(0.4), 1e-3)
        assert abs(abs_moment(fit, 2.0) - poly_moment(data, SymGamma(0.4), 2)) < 1e-4

    def test_brute_force(self):
        data = normal_sample(50, SymGamma(2.0), 5)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        U = 150.0
        table = WeightTable(fit.ctx, -U - 10, U + 10)
        u = np.linspace(0, U, 15001)
        # int |u| dF = int_0^U (1 - F) + int_0^U F(-u) minus boundary terms
        upper = integrate.simpson(1 - cdf_at(fit, u, table), x=u) - U * (1 - cdf_at(fit, U, table))
        lower = integrate.simpson(cdf_at(fit, -u, table), x=u) - U * cdf_at(fit, -U, table)
        assert abs(abs_moment(fit, 1.0) - (upper + lower)) < 1e-4

    def test_continuous_in_q(self):
        data = normal_sample(30, SymGamma(2.0), 9)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        for q in (0.5, 1.0, 2.0):
            assert abs(abs_moment(fit, q - 1e-3) - abs_moment(fit, q + 1e-3)) <= 0.1

    def test_even_order_is_series(self):
        data = normal_sample(30, SymGamma(2.0), 9)
        fit = DeconvFit.create(data, SymGamma(2.0), 0.6)
        a, b, c = (abs_moment(fit, q) for q in (1.999, 2.0, 2.001))
        assert abs(a - b) < 0.01 and abs(c - b) < 0.01

    def test_tail_too_heavy(self):
        fit = DeconvFit.create([0.0, 1.0], SymGamma(2.0), 0.5, kernel=Kernel(8, 2))
        with pytest.raises(NonIntegrableTailError):
            abs_moment(fit, 3.5)

    def test_kernel_order_too_low(self):
        fit = DeconvFit.create([0.0, 1.0], SymGamma(2.0), 0.5, kernel=Kernel(2, 3))
        with pytest.raises(UnsupportedMomentError):
            abs_moment(fit, 1.5)

    def test_nonpositive_order(self):
        with pytest.raises(UnsupportedMomentError):
            abs_moment(DeconvFit.create([0.0], NoError(), 0.0), 0.0)
