import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from iuhtrack.iuh_model import (
    DailySeries,
    DiscreteKernel,
    IuhParams,
    IuhType,
    Quantity,
    classify,
    convolve,
    gamma_kernel,
    idr,
    lag_matrix,
)

START = dt.date(2000, 6, 1)

params_in_box = st.builds(
    IuhParams,
    lam=st.floats(0.0, 0.6),
    k=st.floats(0.01, 6.0),
    theta=st.floats(0.01, 10.0),
)


def rain_series(values):
    return DailySeries(START, np.asarray(values, dtype=float), Quantity.RAINFALL)


def brute_force_convolution(rain, weights):
    out = np.zeros(len(rain))
    for t in range(len(rain)):
        for tau in range(len(weights)):
            if t - tau >= 0:
                out[t] += rain[t - tau] * weights[tau]
    return out


class TestGammaKernel:
    def test_exponential_case(self):
        w = gamma_kernel(IuhParams(1.0, 1.0, 1.0), 14).weights
        assert w[0] == pytest.approx(1 - math.exp(-1), abs=1e-12)
        assert w[1] == pytest.approx(math.exp(-1) - math.exp(-2), abs=1e-12)
        assert w[0] == pytest.approx(0.632121, abs=1e-6)
        assert w[1] == pytest.approx(0.232544, abs=1e-6)

    def test_zero_rescaling_gives_zero_kernel(self):
        w = gamma_kernel(IuhParams(0.0, 2.0, 3.0)).weights
        assert np.all(w == 0.0)

    def test_mass_matches_quadrature(self):
        params = IuhParams(0.5, 2.0, 1.0)
        w = gamma_kernel(params, 14).weights

        def density(t):
            return params.lam * t ** (params.k - 1) * math.exp(-t / params.theta) / (
                special.gamma(params.k) * params.theta**params.k
            )

        oracle, _ = integrate.quad(density, 0.0, 15.0, epsabs=1e-13, epsrel=1e-13)
        assert w.sum() == pytest.approx(oracle, abs=1e-9)
        assert w.sum() == pytest.approx(0.5 * (1 - 16 * math.exp(-15)), abs=1e-9)

    def test_each_weight_matches_quadrature_for_k_below_one(self):
        params = IuhParams(0.4, 0.5, 2.0)
        w = gamma_kernel(params, 14).weights

        def density(t):
            return params.lam * t ** (params.k - 1) * math.exp(-t / params.theta) / (
                special.gamma(params.k) * params.theta**params.k
            )

        for tau in range(15):
            oracle, _ = integrate.quad(density, tau, tau + 1, epsabs=1e-13)
            assert w[tau] == pytest.approx(oracle, abs=1e-9)

    def test_length_is_horizon_plus_one(self):
        assert len(gamma_kernel(IuhParams(0.3, 2.0, 2.0)).weights) == 15
        assert len(gamma_kernel(IuhParams(0.3, 2.0, 2.0), horizon=5).weights) == 6

    @pytest.mark.parametrize(
        "params", [IuhParams(0.3, 0.0, 1.0), IuhParams(0.3, 1.0, 0.0), IuhParams(-0.1, 1.0, 1.0)]
    )
    def test_domain_errors(self, params):
        with pytest.raises(ValueError):
            gamma_kernel(params)

    def test_bad_horizon(self):
        with pytest.raises(ValueError):
            gamma_kernel(IuhParams(0.3, 1.0, 1.0), horizon=0)

    @given(params_in_box)
    @settings(max_examples=200, deadline=None)
    def test_positive_finite_and_mass_bounded(self, params):
        w = gamma_kernel(params).weights
        assert np.all(np.isfinite(w))
        assert np.all(w >= 0)
        assert w.sum() <= params.lam + 1e-12


class TestConvolve:
    def test_impulse_reproduces_kernel(self):
        kernel = gamma_kernel(IuhParams(0.45, 0.7, 3.0))
        rain = np.zeros(92)
        rain[0] = 1.0
        out = convolve(rain_series(rain), kernel)
        expected = np.zeros(92)
        expected[:15] = kernel.weights
        np.testing.assert_array_equal(out.values, expected)
        assert out.start_date == START
        assert out.quantity is Quantity.RUNOFF

    def test_zero_rain(self):
        out = convolve(rain_series(np.zeros(30)), gamma_kernel(IuhParams(0.3, 2.0, 2.0)))
        assert np.all(out.values == 0)

    def test_constant_rain_reaches_steady_state(self):
        kernel = gamma_kernel(IuhParams(0.5, 2.0, 1.0))
        out = convolve(rain_series(np.ones(92)), kernel).values
        oracle = brute_force_convolution(np.ones(92), kernel.weights)
        np.testing.assert_allclose(out, oracle, rtol=1e-12)
        np.testing.assert_allclose(out[14:], kernel.weights.sum(), rtol=1e-12)

    def test_lag_matrix_matches_convolve(self):
        rng = np.random.default_rng(3)
        rain = rng.gamma(0.8, 5.0, 50) * (rng.random(50) < 0.4)
        kernel = gamma_kernel(IuhParams(0.3, 2.5, 1.5))
        np.testing.assert_allclose(
            lag_matrix(rain) @ kernel.weights, convolve(rain_series(rain), kernel).values,
            rtol=1e-12, atol=1e-15,
        )

    @given(params_in_box, st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_linearity(self, params, a, b, seed):
        rng = np.random.default_rng(seed)
        p1, p2 = rng.random(40), rng.random(40)
        kernel = gamma_kernel(params)
        combo = np.convolve(a * p1 + b * p2, kernel.weights)[:40]
        separate = a * convolve(rain_series(p1), kernel).values + b * convolve(
            rain_series(p2), kernel
        ).values
        np.testing.assert_allclose(combo, separate, rtol=1e-12, atol=1e-12)

    @given(params_in_box, st.integers(0, 2**32 - 1))
    @settings(max_examples=100, deadline=None)
    def test_mass_bound(self, params, seed):
        rain = np.random.default_rng(seed).gamma(0.7, 8.0, 92)
        out = convolve(rain_series(rain), gamma_kernel(params)).values
        assert out.sum() <= params.lam * rain.sum() * (1 + 1e-12) + 1e-12


class TestIdr:
    def test_unit_shape(self):
        assert idr(IuhParams(0.3, 1.0, 2.0)) == pytest.approx(-0.5)

    def test_direct_substitution(self):
        assert idr(IuhParams(0.3, 2.0, 10.0)) == pytest.approx(19.9)

    def test_boundary_is_exactly_zero(self):
        assert idr(IuhParams(0.3, 1.05, 1.0)) == 0.0

    def test_zero_theta(self):
        with pytest.raises(ValueError):
            idr(IuhParams(0.3, 1.0, 0.0))


class TestClassify:
    def test_advection(self):
        assert classify(IuhParams(0.3, 2.0, 10.0)) is IuhType.ADVECTION

    def test_diffusion(self):
        assert classify(IuhParams(0.3, 1.0, 2.0)) is IuhType.DIFFUSION

    def test_tie_is_diffusion(self):
        assert classify(IuhParams(0.3, 1.05, 1.0)) is IuhType.DIFFUSION

    @given(params_in_box, st.floats(1e-3, 1e3))
    def test_independent_of_rescaling(self, params, scale):
        scaled = IuhParams(params.lam * scale, params.k, params.theta)
        assert classify(scaled) is classify(params)


class TestTypes:
    def test_series_rejects_nan(self):
        with pytest.raises(ValueError):
            DailySeries(START, np.array([1.0, np.nan]))

    def test_rain_must_be_nonnegative(self):
        with pytest.raises(ValueError):
            DailySeries(START, np.array([1.0, -0.5]), Quantity.RAINFALL)

    def test_runoff_may_be_negative(self):
        s = DailySeries(START, np.array([1.0, -0.5]), Quantity.RUNOFF)
        assert s.end_date == dt.date(2000, 6, 2)

    def test_kernel_length_checked(self):
        with pytest.raises(ValueError):
            DiscreteKernel(np.zeros(10), horizon=14)
