import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sdecert.evt import (EstimatorFailure, GpdFit, GpdFitError, ThresholdError, fit_gpd,
                         fit_gpd_pwm, gpd_cdf, gpd_diagnostic_table, gpd_loglik, gpd_ppf,
                         gpd_upper_endpoint, select_threshold)


def test_cdf_examples():
    assert gpd_cdf(0.0, 1.0, 1.0) == pytest.approx(1 - np.exp(-1), rel=1e-14)
    # xi = -0.5, beta = 1: endpoint 2, F(1) = 1 - 0.5^2
    assert gpd_cdf(-0.5, 1.0, 1.0) == pytest.approx(0.75, rel=1e-14)
    assert gpd_cdf(-0.5, 1.0, 2.0) == pytest.approx(1.0)
    # xi = 1: F(x) = 1 - 1/(1 + x)
    assert gpd_cdf(1.0, 1.0, 3.0) == pytest.approx(0.75)


def test_cdf_agrees_with_scipy():
    x = np.linspace(0, 0.15, 40)
    for xi, beta in [(-0.18, 0.033), (0.2, 0.5), (0.0, 2.0)]:
        np.testing.assert_allclose(gpd_cdf(xi, beta, x), stats.genpareto.cdf(x, xi, scale=beta),
                                   rtol=1e-12, atol=1e-15)


def test_cdf_small_xi_limit():
    x = np.linspace(0, 3, 30)
    np.testing.assert_allclose(gpd_cdf(1e-9, 1.0, x), gpd_cdf(0.0, 1.0, x), atol=1e-8)
    np.testing.assert_allclose(gpd_cdf(-1e-9, 1.0, x), gpd_cdf(0.0, 1.0, x), atol=1e-8)


def test_cdf_rejects_bad_input():
    with pytest.raises(ValueError):
        gpd_cdf(0.1, 0.0, 1.0)
    with pytest.raises(ValueError):
        gpd_cdf(0.1, 1.0, -0.5)
    with pytest.raises(ValueError):
        gpd_cdf(-0.5, 1.0, 2.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.01, 5.0))
def test_cdf_monotone_and_bounded(xi, beta):
    top = -beta / xi if xi < 0 else 50 * beta
    x = np.linspace(0, top, 200)
    f = gpd_cdf(xi, beta, x)
    assert f[0] == 0.0
    assert np.all(np.diff(f) >= -1e-15)
    assert np.all((f >= 0) & (f <= 1 + 1e-15))


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.01, 5.0), st.floats(0.001, 0.999))
def test_ppf_inverts_cdf(xi, beta, p):
    assert gpd_cdf(xi, beta, gpd_ppf(xi, beta, p)) == pytest.approx(p, abs=1e-10)


def test_loglik_matches_scipy():
    x = stats.genpareto.rvs(-0.2, scale=0.03, size=200, random_state=1)
    assert gpd_loglik(-0.2, 0.03, x) == pytest.approx(stats.genpareto.logpdf(x, -0.2, scale=0.03).sum())
    assert gpd_loglik(0.0, 0.03, x) == pytest.approx(stats.expon.logpdf(x, scale=0.03).sum())
    assert gpd_loglik(-0.5, 0.01, x) == -np.inf     # data past the endpoint


def test_threshold_is_lower_95_quantile():
    assert select_threshold(np.arange(1, 101), 0.05, n_min=5) == 95.0
    # permutation does not matter
    g = np.random.default_rng(0)
    assert select_threshold(g.permutation(np.arange(1, 101)), 0.05, n_min=5) == 95.0


def test_threshold_all_equal_fails():
    with pytest.raises(ThresholdError):
        select_threshold(np.ones(1000), 0.05)


def test_threshold_too_few_exceedances():
    with pytest.raises(ThresholdError):
        select_threshold(np.arange(100.0), 0.05, n_min=30)


def test_reference_endpoint():
    fit = GpdFit(threshold=1.48, scale=0.0326, shape=-0.1822, n_exceedances=1000, log_likelihood=0.0)
    v_max = gpd_upper_endpoint(fit)
    assert v_max == pytest.approx(1.65893, abs=1e-5)
    assert 1 - 1 / v_max == pytest.approx(0.3972, abs=1e-4)


def test_endpoint_needs_negative_shape():
    with pytest.raises(EstimatorFailure, match="Choose better coupling algorithm or larger T"):
        gpd_upper_endpoint(GpdFit(1.0, 0.05, 0.1, 100, 0.0))
    with pytest.raises(EstimatorFailure):
        gpd_upper_endpoint(GpdFit(1.0, 0.05, 0.0, 100, 0.0))


def test_endpoint_example():
    # xi = -0.5, scale 0.5, threshold 1 -> endpoint 2
    assert gpd_upper_endpoint(GpdFit(1.0, 0.5, -0.5, 100, 0.0)) == pytest.approx(2.0)


def test_fit_matches_scipy_mle():
    x = stats.genpareto.rvs(-0.18, scale=0.033, size=2000, random_state=7)
    fit = fit_gpd(x)
    c, _, scale = stats.genpareto.fit(x, floc=0)
    ll_scipy = stats.genpareto.logpdf(x, c, scale=scale).sum()
    # profile search must reach at least the likelihood scipy's optimizer finds
    assert fit.log_likelihood >= ll_scipy - 1e-6
    assert fit.shape == pytest.approx(c, abs=0.01)
    assert fit.scale == pytest.approx(scale, rel=0.02)


@pytest.mark.parametrize("xi", [-0.4, -0.18, 0.0, 0.25])
def test_fit_recovers_parameters(xi):
    x = stats.genpareto.rvs(xi, scale=0.05, size=20000, random_state=3)
    fit = fit_gpd(x)
    assert fit.shape == pytest.approx(xi, abs=0.03)
    assert fit.scale == pytest.approx(0.05, rel=0.05)


def test_fit_endpoint_not_below_sample_max():
    for seed in range(10):
        x = stats.genpareto.rvs(-0.3, scale=0.1, size=300, random_state=seed)
        fit = fit_gpd(x)
        if fit.shape < 0:
            assert -fit.scale / fit.shape >= x.max() * (1 - 1e-9)


def test_fit_endpoint_consistency_with_sample_size():
    # larger samples pin the endpoint down; both should land near the true 0.25
    big = fit_gpd(stats.genpareto.rvs(-0.4, scale=0.1, size=100_000, random_state=4))
    small = fit_gpd(stats.genpareto.rvs(-0.4, scale=0.1, size=1000, random_state=5))
    assert -big.scale / big.shape == pytest.approx(0.25, rel=0.01)
    assert -small.scale / small.shape == pytest.approx(0.25, rel=0.1)


def test_fit_rejects_degenerate():
    with pytest.raises(GpdFitError):
        fit_gpd(np.full(100, 0.3))
    with pytest.raises(GpdFitError):
        fit_gpd(np.arange(10.0))
    with pytest.raises(GpdFitError):
        fit_gpd(np.r_[np.arange(50.0), -1.0])


def test_pwm_close_to_truth():
    x = stats.genpareto.rvs(-0.2, scale=0.05, size=20000, random_state=9)
    fit = fit_gpd_pwm(x)
    assert fit.shape == pytest.approx(-0.2, abs=0.03)
    assert fit.method == "pwm"


def test_diagnostic_table_shape():
    x = stats.genpareto.rvs(-0.2, scale=0.05, size=500, random_state=2)
    fit = fit_gpd(x)
    tab = gpd_diagnostic_table(x, fit)
    assert tab.shape == (500, 3)
    assert np.all(np.diff(tab[:, 0]) >= 0)
    assert tab[-1, 1] == 1.0
    # fitted and empirical cdfs agree in the Kolmogorov sense
    assert np.max(np.abs(tab[:, 1] - tab[:, 2])) < 1.63 / np.sqrt(500)
