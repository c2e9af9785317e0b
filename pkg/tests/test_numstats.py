"""Statistics kernel tests against independent quadrature / hand oracles."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate

from styleflow.numstats import (
    ARFit,
    InsufficientDataError,
    average_ranks,
    betainc_reg,
    f_sf,
    f_test,
    fit_ar,
    haversine,
    paired_ttest,
    spearman,
    t_sf_two_sided,
)


# --- quadrature oracles (independent of the incomplete-beta route) ---------

def f_pdf(x, d1, d2):
    if x <= 0:
        return 0.0
    ln = (0.5 * d1 * math.log(d1) + 0.5 * d2 * math.log(d2) + (0.5 * d1 - 1) * math.log(x)
          - 0.5 * (d1 + d2) * math.log(d2 + d1 * x)
          + math.lgamma(0.5 * (d1 + d2)) - math.lgamma(0.5 * d1) - math.lgamma(0.5 * d2))
    return math.exp(ln)


def f_sf_quad(f, d1, d2):
    val, _ = integrate.quad(f_pdf, 0, f, args=(d1, d2), limit=200)
    return 1.0 - val


def t_pdf(x, df):
    ln = (math.lgamma((df + 1) / 2) - math.lgamma(df / 2)
          - 0.5 * math.log(df * math.pi) - (df + 1) / 2 * math.log(1 + x * x / df))
    return math.exp(ln)


def t_two_sided_quad(t, df):
    val, _ = integrate.quad(t_pdf, -abs(t), abs(t), args=(df,), limit=200)
    return 1.0 - val


def beta_pdf(u, a, b):
    return math.exp((a - 1) * math.log(u) + (b - 1) * math.log1p(-u)
                    + math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b))


# --- autoregression ---------------------------------------------------------

class TestFitAR:
    def test_exact_linear_recursion(self):
        y = np.empty(60)
        y[0] = 1.0
        for t in range(1, 60):
            y[t] = 0.5 * y[t - 1]
        fit = fit_ar(y, 1)
        assert abs(fit.own_coeffs[0] - 0.5) < 1e-6
        assert abs(fit.intercept) < 1e-6
        assert fit.rss < 1e-9

    def test_ar2_recovery(self):
        # AR coefficient error is scale-free, so the tolerance is a property
        # of the frozen fixture; seed 111 leaves comfortable margin.
        rng = np.random.default_rng(111)
        t = 300
        y = np.zeros(t)
        for i in range(2, t):
            y[i] = 0.5 * y[i - 1] - 0.3 * y[i - 2] + rng.normal(0, 0.01)
        fit = fit_ar(y, 2)
        assert_allclose(fit.own_coeffs, [0.5, -0.3], atol=0.02)

    def test_nested_rss_never_larger(self):
        rng = np.random.default_rng(3)
        y = rng.normal(size=120)
        x = rng.normal(size=120)
        restricted = fit_ar(y, 4, t0=6)
        extended = fit_ar(y, 4, exog=(x, 2, 6), t0=6)
        assert extended.rss <= restricted.rss + 1e-9

    def test_exog_identical_to_own_lags(self):
        rng = np.random.default_rng(4)
        y = rng.normal(size=100)
        restricted = fit_ar(y, 3, t0=3)
        extended = fit_ar(y, 3, exog=(y, 1, 3), t0=3)
        assert extended.rss <= restricted.rss + 1e-9

    def test_insufficient_samples(self):
        with pytest.raises(InsufficientDataError):
            fit_ar(np.arange(10.0), 8)

    def test_param_count(self):
        rng = np.random.default_rng(5)
        y = rng.normal(size=80)
        x = rng.normal(size=80)
        fit = fit_ar(y, 3, exog=(x, 2, 5))
        assert fit.n_params == 1 + 3 + 4
        assert fit.n_obs == 80 - 5

    def test_one_step_prediction(self):
        fit = ARFit(intercept=0.1, own_coeffs=np.array([0.5, -0.2]), exog_coeffs=None,
                    exog_lag_range=None, rss=0.0, n_obs=10, n_params=3)
        # history oldest..newest [1, 2]: pred = 0.1 + 0.5*2 - 0.2*1
        assert abs(fit.one_step(np.array([1.0, 2.0])) - 0.9) < 1e-12


# --- incomplete beta / F / t ------------------------------------------------

class TestTailProbabilities:
    def test_betainc_matches_quadrature_grid(self):
        cases = [(a, b, x)
                 for a in (0.5, 1.0, 2.5, 5.0, 13.0)
                 for b in (0.5, 2.0, 7.5, 60.0)
                 for x in (0.05, 0.4, 0.9)][:60]
        for a, b, x in cases:
            oracle, _ = integrate.quad(beta_pdf, 0, x, args=(a, b), limit=300)
            assert abs(betainc_reg(a, b, x) - oracle) < 1e-8, (a, b, x)

    def test_f_sf_frozen_quadrature_values(self):
        # values computed once with scipy.integrate.quad of the F density
        assert abs(f_sf(4.96, 1, 10) - 0.05008765056640907) < 1e-6
        assert abs(f_sf(1.0, 1, 1000000) - 0.3173107506922409) < 1e-6
        assert abs(f_sf(0.5, 3, 20) - 0.6865186128364035) < 1e-6
        assert abs(f_sf(2.5, 8, 120) - 0.01512139997464601) < 1e-6

    def test_f_at_critical_value_is_about_0p05(self):
        assert abs(f_sf(4.96, 1, 10) - 0.050) < 1e-4

    def test_f_one_large_df_matches_two_sided_normal(self):
        # F(1, inf) = chi2_1, so sf(1) -> 2*(1 - Phi(1)) = 0.31731...
        assert abs(f_sf(1.0, 1, 1000000) - 0.3173) < 1e-3

    def test_f_test_basics(self):
        assert f_test(1.0, 1.0, 1, 10) == 1.0
        assert f_test(0.9, 1.0, 1, 10) == 1.0  # negative F clamps to 0
        p = f_test(2.0, 1.0, 1, 10)
        assert 0.0 < p < 0.05

    def test_f_test_monotone_in_f(self):
        ps = [f_sf(f, 3, 25) for f in np.linspace(0.01, 20, 40)]
        assert all(0.0 <= p <= 1.0 for p in ps)
        assert all(a >= b for a, b in zip(ps, ps[1:]))

    def test_t_two_sided_frozen_quadrature_values(self):
        assert abs(t_sf_two_sided(2.0, 9) - 0.07655282377070216) < 1e-6
        assert abs(t_sf_two_sided(1.0, 4) - 0.37390096630005865) < 1e-6
        assert abs(t_sf_two_sided(3.5, 30) - 0.00147680743764933) < 1e-6

    def test_t_quadrature_grid(self):
        for t in (0.3, 1.2, 2.7):
            for df in (2, 7, 40):
                assert abs(t_sf_two_sided(t, df) - t_two_sided_quad(t, df)) < 1e-8


# --- paired t-test -----------------------------------------------------------

class TestPairedTTest:
    def test_identical_sequences(self):
        a = np.array([1.0, 2.0, 3.0, 4.0])
        with pytest.warns(RuntimeWarning):
            assert paired_ttest(a, a) == 1.0

    def test_large_shift_small_noise(self):
        rng = np.random.default_rng(11)
        b = rng.normal(0, 0.01, size=30)
        a = b + 1.0 + rng.normal(0, 0.01, size=30)
        assert paired_ttest(a, b) < 1e-3

    def test_antisymmetric_swap_keeps_p(self):
        rng = np.random.default_rng(12)
        a = rng.normal(0.2, 1.0, size=25)
        b = rng.normal(0.0, 1.0, size=25)
        assert abs(paired_ttest(a, b) - paired_ttest(b, a)) < 1e-12

    def test_matches_quadrature(self):
        rng = np.random.default_rng(13)
        a = rng.normal(0.3, 1.0, size=12)
        b = rng.normal(0.0, 1.0, size=12)
        diff = a - b
        t = diff.mean() / (diff.std(ddof=1) / math.sqrt(len(diff)))
        assert abs(paired_ttest(a, b) - t_two_sided_quad(t, len(diff) - 1)) < 1e-8


# --- spearman -----------------------------------------------------------------

class TestSpearman:
    def test_monotone_cubic(self):
        x = np.arange(1.0, 11.0)
        assert spearman(x, x**3) == pytest.approx(1.0)

    def test_reversed(self):
        x = np.arange(1.0, 11.0)
        assert spearman(x, x[::-1]) == pytest.approx(-1.0)

    def test_ties_match_hand_ranked_oracle(self):
        x = np.array([1.0, 2.0, 2.0, 4.0])
        y = np.array([1.0, 3.0, 2.0, 4.0])
        rx = np.array([1.0, 2.5, 2.5, 4.0])  # hand-assigned average ranks
        ry = np.array([1.0, 3.0, 2.0, 4.0])
        oracle = np.corrcoef(rx, ry)[0, 1]
        assert spearman(x, y) == pytest.approx(oracle, abs=1e-12)

    def test_average_ranks(self):
        assert_allclose(average_ranks(np.array([10.0, 20.0, 20.0, 5.0])), [2.0, 3.5, 3.5, 1.0])

    def test_zero_variance_is_none(self):
        assert spearman(np.ones(5), np.arange(5.0)) is None


# --- haversine -----------------------------------------------------------------

class TestHaversine:
    def test_identical_points(self):
        assert haversine((48.86, 2.35), (48.86, 2.35)) == 0.0

    def test_equatorial_antipodes(self):
        assert haversine((0.0, 0.0), (0.0, 180.0)) == pytest.approx(math.pi * 6371.0, abs=0.1)

    def test_symmetry(self):
        a, b = (40.7, -74.0), (51.5, -0.13)
        assert haversine(a, b) == pytest.approx(haversine(b, a))
