import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from deconvolve.distributions import Laplace, NoError, SymGamma
from deconvolve.errors import QuadratureError, UnsupportedBandwidthError
from deconvolve.kernels import Kernel, kernel_real
from deconvolve.transforms import (
    QuadratureSpec,
    WeightContext,
    WeightTable,
    cosine_integral,
    l1_derivative,
    l1_weight,
    l_weight,
    sine_integral,
)

K42 = Kernel(4, 2)


def trapezoid_sine(g, u, T, points):
    t = np.linspace(0.0, T, points)
    f = np.where(t > 0, np.sin(u * t) / np.where(t > 0, t, 1.0), u) * g(t)
    return integrate.trapezoid(f, t)


class TestSineIntegral:
    def test_dirichlet(self):
        val = sine_integral(lambda t: np.ones_like(t), 1.0, 1e5)
        assert abs(val - math.pi / 2) < 1e-3

    def test_zero_frequency(self):
        assert sine_integral(lambda t: 1.0 + t, 0.0, 7.0) == 0.0

    def test_trapezoid_oracle(self):
        g = lambda t: (1 - t**2) ** 2 * (t <= 1)
        ref = trapezoid_sine(g, 0.7, 1.0, 10**5 + 1)
        assert_allclose(sine_integral(g, 0.7, 1.0), ref, atol=1e-8)

    def test_vectorised_matches_scalar(self):
        g = lambda t: np.exp(-t)
        u = np.array([-3.0, 0.0, 0.5, 40.0])
        vec = sine_integral(g, u, 10.0)
        assert_allclose(vec, [sine_integral(g, x, 10.0) for x in u], rtol=1e-12)

    def test_odd_in_u(self):
        g = lambda t: 1.0 / (1.0 + t)
        assert_allclose(sine_integral(g, -2.5, 30.0), -sine_integral(g, 2.5, 30.0), rtol=1e-14)

    def test_cosine_oracle(self):
        g = lambda t: np.exp(-t * t)
        ref = integrate.quad(lambda t: math.cos(3.0 * t) * math.exp(-t * t), 0, 6, epsabs=1e-14)[0]
        assert_allclose(cosine_integral(g, 3.0, 6.0), ref, atol=1e-12)

    def test_failure_carries_estimates(self):
        spec = QuadratureSpec(max_refinements=1)
        rough = lambda t: np.sign(np.sin(1e3 * t))
        with pytest.raises(QuadratureError) as info:
            sine_integral(rough, 1.0, 50.0, spec)
        assert len(info.value.estimates) == 2


class TestQuadratureSpec:
    @pytest.mark.parametrize("kw", [{"rel_tol": 0}, {"abs_tol": -1}, {"panels_per_period": 1}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            QuadratureSpec(**kw)


class TestContext:
    def test_zero_bandwidth_rough_error(self):
        WeightContext(K42, SymGamma(0.4), 0.0)

    def test_zero_bandwidth_smooth_error(self):
        with pytest.raises(UnsupportedBandwidthError):
            WeightContext(K42, SymGamma(2.0), 0.0)

    def test_zero_bandwidth_intermediate_warns(self):
        with pytest.warns(RuntimeWarning):
            WeightContext(K42, SymGamma(0.7), 0.0)

    @pytest.mark.parametrize("h", [-0.1, math.inf, math.nan])
    def test_bad_bandwidth(self, h):
        with pytest.raises(ValueError):
            WeightContext(K42, SymGamma(2.0), h)

    def test_tail_bound_shrinks_with_u(self):
        ctx = WeightContext(K42, SymGamma(0.4), 0.0)
        b = ctx.zero_bandwidth_tail_bound(np.array([1.0, 10.0]))
        assert b[1] < b[0] and b[0] < 1e-3


class TestL1:
    @pytest.mark.parametrize("h", [0.0, 0.3])
    @pytest.mark.parametrize("err", [SymGamma(0.4), NoError()])
    def test_half_at_origin(self, h, err):
        assert l1_weight(WeightContext(K42, err, h), 0.0) == 0.5

    def test_half_at_origin_smooth(self):
        assert l1_weight(WeightContext(K42, SymGamma(6.0), 0.5), 0.0) == 0.5

    def test_noerror_step(self):
        ctx = WeightContext(K42, NoError(), 0.0)
        assert abs(l1_weight(ctx, 3.0) - 1.0) < 1e-3
        u = np.array([-10, -1, -0.1, 0.1, 1, 10.0])
        assert np.abs(l1_weight(ctx, u) - (u > 0)).max() < 1e-3

    def test_far_left(self):
        ctx = WeightContext(K42, SymGamma(2.0), 0.6)
        assert abs(l1_weight(ctx, -1e4)) < 1e-3
        assert abs(l1_weight(ctx, 1e4) - 1.0) < 1e-3

    @pytest.mark.parametrize("err", [SymGamma(0.4), SymGamma(2.0), SymGamma(6.0), Laplace(1.0), NoError()])
    @pytest.mark.parametrize("h", [0.2, 1.0])
    def test_step_limit(self, err, h):
        ctx = WeightContext(K42, err, h)
        u = np.array([-1e4 * h, 1e4 * h])
        assert np.abs(l1_weight(ctx, u) - (u > 0)).max() < 0.01

    def test_trapezoid_oracle(self):
        ctx = WeightContext(K42, SymGamma(2.0), 0.6)
        g = ctx.amplitude
        for u in (0.4, 2.0, -7.5):
            ref = 0.5 + trapezoid_sine(g, u, 1 / 0.6, 2 * 10**5 + 1) / math.pi
            assert_allclose(l1_weight(ctx, u), ref, atol=1e-8)

    def test_refinement_stable(self, rng):
        for h in (0.2, 0.5, 1.0):
            u = rng.uniform(-20, 20, 34)
            a = l1_weight(WeightContext(K42, SymGamma(2.0), h, QuadratureSpec(panels_per_period=4)), u)
            b = l1_weight(WeightContext(K42, SymGamma(2.0), h, QuadratureSpec(panels_per_period=8)), u)
            assert np.abs(a - b).max() < 1e-8

    def test_zero_bandwidth_asymptotic_tail(self):
        # the integration-by-parts tail must agree with plain panels
        spec = QuadratureSpec(t_max_zero_bandwidth=2000.0)
        ctx = WeightContext(K42, SymGamma(0.4), 0.0, spec)
        u = np.array([-2.0, 0.3, 1.0, 5.0])
        direct = 0.5 + sine_integral(ctx.error.inverse_cf, u, 2000.0) / math.pi
        assert_allclose(l1_weight(ctx, u), direct, atol=1e-9)

    def test_location_of_median(self):
        ctx = WeightContext(K42, SymGamma(2.0), 0.5)
        u = np.array([0.7, 3.0])
        # L1(u) + L1(-u) = 1 for symmetric kernel and error
        assert_allclose(l1_weight(ctx, u) + l1_weight(ctx, -u), 1.0, atol=1e-12)


class TestL:
    @pytest.mark.parametrize("h", [0.3, 1.7])
    def test_noerror_is_kernel(self, h):
        ctx = WeightContext(K42, NoError(), h)
        v = np.array([0.0, 0.5, 3.0, 20.0])
        assert_allclose(l_weight(ctx, v), kernel_real(K42, v), atol=1e-8)

    def test_trapezoid_oracle(self):
        h = 0.6
        ctx = WeightContext(K42, SymGamma(2.0), h)
        w = np.linspace(0, 1, 2 * 10**5 + 1)
        f = np.cos(1.3 * w) * (1 - w**4) ** 2 * (1 + (w / h) ** 2) / math.pi
        assert_allclose(l_weight(ctx, 1.3), integrate.trapezoid(f, w), atol=1e-7)

    def test_unit_mass(self):
        # int L over [-V, V] is L1(hV) - L1(-hV)
        ctx = WeightContext(K42, SymGamma(2.0), 0.6)
        V = 1e4
        mass = l1_weight(ctx, 0.6 * V) - l1_weight(ctx, -0.6 * V)
        assert abs(mass - 1.0) < 1e-6

    def test_consistency_with_l1(self, rng):
        h = 0.6
        ctx = WeightContext(K42, SymGamma(2.0), h)
        for _ in range(3):
            a, b = np.sort(rng.uniform(-5, 5, 2))
            v = np.linspace(a, b, 2001)
            integral = integrate.simpson(l_weight(ctx, v / h) / h, x=v)
            diff = l1_weight(ctx, b) - l1_weight(ctx, a)
            assert abs(integral - diff) < 1e-5

    def test_derivative(self):
        ctx = WeightContext(K42, SymGamma(2.0), 0.6)
        u = np.array([-1.0, 0.2, 2.5])
        assert_allclose(l1_derivative(ctx, u), l_weight(ctx, u / 0.6) / 0.6, rtol=1e-10)

    def test_zero_bandwidth_rejected(self):
        ctx = WeightContext(K42, SymGamma(0.4), 0.0)
        with pytest.raises(UnsupportedBandwidthError):
            l_weight(ctx, 1.0)


class TestTable:
    def test_matches_direct(self, rng):
        ctx = WeightContext(K42, SymGamma(2.0), 0.6)
        table = WeightTable(ctx, -15, 15)
        u = rng.uniform(-15, 15, 500)
        assert np.abs(table(u) - l1_weight(ctx, u)).max() < 1e-8

    def test_outside_falls_back(self):
        ctx = WeightContext(K42, SymGamma(2.0), 0.6)
        table = WeightTable(ctx, -1, 1)
        u = np.array([-30.0, 0.5, 40.0])
        assert_allclose(table(u), l1_weight(ctx, u), atol=1e-9)

    def test_needs_positive_bandwidth(self):
        with pytest.raises(UnsupportedBandwidthError):
            WeightTable(WeightContext(K42, NoError(), 0.0), -1, 1)
