import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, special, stats

from iuhtrack.inference import DEFAULT_BOX, ParamBox
from iuhtrack.iuh_model import IuhParams
from iuhtrack.metrics import (
    cc,
    ecdf,
    nse,
    r2_identity,
    regress_f_test,
    relative_error,
    runoff_coefficient,
    snr_observed,
)

finite_vectors = st.lists(
    st.floats(-100, 100, allow_subnormal=False), min_size=3, max_size=30
).filter(lambda xs: np.ptp(xs) > 1e-3)


class TestRelativeError:
    def test_exact(self):
        p = IuhParams(0.3, 2.0, 4.0)
        assert relative_error(p, p, DEFAULT_BOX) == (0.0, 0.0, 0.0)

    def test_lambda_substitution(self):
        err = relative_error(IuhParams(0.30, 2.0, 4.0), IuhParams(0.24, 2.0, 4.0), DEFAULT_BOX)
        assert err[0] == pytest.approx(0.10)

    def test_maximal(self):
        err = relative_error(IuhParams(0.6, 6.0, 10.0), IuhParams(0.0, 0.0, 0.0), DEFAULT_BOX)
        assert err == pytest.approx((1.0, 1.0, 1.0))

    @given(st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance(self, scale, shift):
        est, truth = IuhParams(0.3, 2.0, 4.0), IuhParams(0.2, 3.0, 1.0)
        moved = ParamBox(
            tuple(scale * v + shift for v in DEFAULT_BOX.lower),
            tuple(scale * v + shift for v in DEFAULT_BOX.upper),
        )
        tr = lambda p: IuhParams.from_array(scale * p.as_array() + shift)  # noqa: E731
        np.testing.assert_allclose(
            relative_error(tr(est), tr(truth), moved), relative_error(est, truth, DEFAULT_BOX),
            rtol=1e-9, atol=1e-12,
        )


class TestCC:
    def test_affine(self):
        a = np.array([1.0, 5.0, 2.0, 7.0])
        assert cc(a, 2 * a + 3) == pytest.approx(1.0)

    def test_negation(self):
        a = np.array([1.0, 5.0, 2.0, 7.0])
        assert cc(a, -a) == pytest.approx(-1.0)

    def test_hand_computed(self):
        assert cc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_constant_is_missing(self):
        assert math.isnan(cc([1, 1, 1], [1, 2, 3]))

    @given(finite_vectors, st.floats(0.01, 100), st.floats(-100, 100))
    def test_positive_affine_invariance(self, xs, scale, shift):
        a = np.array(xs)
        b = np.sin(np.arange(len(xs)))
        base = cc(a, b)
        if math.isnan(base):
            return
        assert cc(scale * a + shift, b) == pytest.approx(base, abs=1e-6)
        assert cc(-a, b) == pytest.approx(-base, abs=1e-9)


class TestNSE:
    def test_perfect(self):
        assert nse([1, 2, 5], [1, 2, 5]) == 1.0

    def test_mean_model_is_zero(self):
        obs = np.array([1.0, 2.0, 6.0])
        assert nse(obs, np.full(3, obs.mean())) == pytest.approx(0.0)

    def test_hand_computed(self):
        assert nse([0, 2], [1, 1]) == pytest.approx(0.0)

    def test_constant_obs_is_missing(self):
        assert math.isnan(nse([2, 2, 2], [1, 2, 3]))

    def test_unbounded_below(self):
        assert nse([0, 1], [100, -100]) < -1000

    @given(finite_vectors)
    def test_at_most_one(self, xs):
        obs = np.array(xs)
        assert nse(obs, obs[::-1]) <= 1.0


class TestSNR:
    def test_residuals_equal_runoff(self):
        r = np.array([1.0, 3.0, 2.0, 6.0])
        assert snr_observed(r, r) == pytest.approx(1.0)

    def test_half_spread(self):
        r = np.array([1.0, 3.0, 2.0, 6.0])
        assert snr_observed(r, 0.5 * (r - r.mean())) == pytest.approx(2.0)

    def test_perfect_fit(self):
        assert snr_observed([1.0, 2.0], [0.0, 0.0]) == math.inf


class TestRunoffCoefficient:
    def test_proportional(self):
        rain = np.array([0.0, 5.0, 12.0, 3.0])
        assert runoff_coefficient(rain, 0.3 * rain) == pytest.approx(0.3)

    def test_zero_runoff(self):
        assert runoff_coefficient([1.0, 2.0], [0.0, 0.0]) == 0.0

    def test_zero_rain(self):
        with pytest.raises(ValueError):
            runoff_coefficient([0.0, 0.0], [1.0, 1.0])


class TestR2Identity:
    def test_identity(self):
        assert r2_identity([1, 2, 3], [1, 2, 3]) == 1.0

    def test_hand_computed(self):
        assert r2_identity([1, 2, 3], [1, 2, 4]) == pytest.approx(1 - 1 / (14 / 3))
        assert r2_identity([1, 2, 3], [1, 2, 4]) == pytest.approx(0.7857, abs=1e-4)

    def test_zero_point(self):
        # x sits at the mean of y, so sum (y - x)^2 = sum (y - ybar)^2
        assert r2_identity([2.0, 2.0, 2.0], [1.0, 3.0, 2.0]) == pytest.approx(0.0)

    @given(finite_vectors)
    def test_at_most_one(self, xs):
        y = np.array(xs)
        assert r2_identity(y[::-1], y) <= 1.0


def f_upper_tail_by_quadrature(f_value, d1, d2):
    """Upper-tail F probability by integrating the density."""
    coef = 1.0 / special.beta(d1 / 2, d2 / 2) * (d1 / d2) ** (d1 / 2)

    def density(x):
        return coef * x ** (d1 / 2 - 1) * (1 + d1 * x / d2) ** (-(d1 + d2) / 2)

    # substitute x = u^2 to remove the x^{-1/2} singularity at 0
    cdf, _ = integrate.quad(lambda u: 2 * u * density(u * u), 0, math.sqrt(f_value),
                            epsabs=1e-13, epsrel=1e-12)
    return 1.0 - cdf


class TestRegression:
    def test_exact_line(self):
        x = np.arange(10.0)
        reg = regress_f_test(x, 2 * x + 1)
        assert reg.slope == pytest.approx(2.0)
        assert reg.intercept == pytest.approx(1.0)
        assert reg.one_tailed_p == pytest.approx(0.0, abs=1e-12)

    def test_orthogonal(self):
        x = np.array([-1.0, 0.0, 1.0, -1.0, 0.0, 1.0])
        y = np.array([1.0, -2.0, 1.0, 1.0, -2.0, 1.0])
        reg = regress_f_test(x, y)
        assert reg.slope == pytest.approx(0.0, abs=1e-12)
        assert reg.f_statistic == pytest.approx(0.0, abs=1e-12)
        assert reg.one_tailed_p == pytest.approx(1.0)

    def test_known_slope_is_significant(self):
        rng = np.random.default_rng(11)
        x = np.linspace(0.0, 10.0, 20)
        y = x + rng.normal(0, 0.1, 20)
        reg = regress_f_test(x, y)
        assert reg.one_tailed_p < 0.01
        # published critical value F(0.01; 1, 18) = 8.29
        assert reg.f_statistic > 8.29
        assert reg.one_tailed_p == pytest.approx(
            f_upper_tail_by_quadrature(reg.f_statistic, 1, 18), abs=1e-9
        )

    def test_p_value_matches_quadrature_and_table(self):
        assert f_upper_tail_by_quadrature(8.29, 1, 18) == pytest.approx(0.01, abs=2e-4)
        x = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0])
        y = np.array([0.3, 0.1, 0.9, 0.4, 1.3, 0.8, 1.1, 1.9])
        reg = regress_f_test(x, y)
        assert reg.one_tailed_p == pytest.approx(
            f_upper_tail_by_quadrature(reg.f_statistic, 1, 6), abs=1e-9
        )

    def test_constant_x(self):
        with pytest.raises(ValueError):
            regress_f_test([1, 1, 1], [1, 2, 3])

    def test_p_monotone_in_signal(self):
        rng = np.random.default_rng(5)
        x = np.linspace(0, 1, 15)
        noise = rng.normal(0, 1, 15)
        ps = [regress_f_test(x, s * x + noise).one_tailed_p for s in (0.5, 1, 2, 4, 8)]
        # fixed noise, growing slope on the same side
        assert all(a >= b for a, b in zip(ps, ps[1:]))
        assert stats.f.sf(8.29, 1, 18) == pytest.approx(0.01, abs=2e-4)


class TestEcdf:
    def test_single(self):
        assert ecdf([4.2]) == [(4.2, 1.0)]

    def test_sorted(self):
        assert ecdf([3, 1, 2]) == pytest.approx([(1, 1 / 3), (2, 2 / 3), (3, 1.0)])

    def test_duplicates_right_continuous(self):
        assert ecdf([1, 1, 2]) == pytest.approx([(1, 2 / 3), (2, 1.0)])

    def test_empty(self):
        with pytest.raises(ValueError):
            ecdf([])
