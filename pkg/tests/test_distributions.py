import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special, stats

from dahsim.distributions import (Bernoulli, Beta, BetaBinomial, Categorical, LogNormal, NegativeBinomial, Poisson,
                                  PoissonInverseGaussian, RightCensored, ZeroAdjusted, ZeroInflated, ZeroTruncated)
from dahsim.errors import ParameterError, SupportError

# frozen with the independent oracles below (quadrature, series, beta functions)
PIG_1_1_ZERO = 0.48092170020263214
PIG_2_HALF = [0.23128568172579034, 0.26706570120818235, 0.19870140468522393, 0.1255817351635596]
POISSON_1_ZERO = 0.36787944117144245
BB_10_HALF = [0.04896985270499708, 0.07651539485155792, 0.0949846280915892, 0.10716214451358777,
              0.11415098002534334, 0.11643399962585017]


def pig_quadrature(y, mu, sigma):
    """Poisson mixed over an inverse-Gaussian (mean 1, shape 1/sigma)."""
    f = lambda v: math.exp(stats.poisson.logpmf(y, mu * v) + stats.invgauss.logpdf(v, sigma, scale=1 / sigma))  # noqa: E731
    return integrate.quad(f, 0, np.inf, limit=500, epsabs=1e-14, epsrel=1e-12)[0]


def bb_direct(y, n, mu, sigma):
    a, b = mu / sigma, (1 - mu) / sigma
    return math.comb(n, y) * math.exp(special.betaln(y + a, n - y + b) - special.betaln(a, b))


# --------------------------------------------------------------------------
# pmf / cdf / quantile examples
# --------------------------------------------------------------------------


def test_oracles_reproduce_frozen_values():
    assert pig_quadrature(0, 1, 1) == pytest.approx(PIG_1_1_ZERO, abs=1e-12)
    assert math.exp(1 - math.sqrt(3)) == pytest.approx(PIG_1_1_ZERO, abs=1e-15)
    assert sum((-1) ** k / math.factorial(k) for k in range(30)) == pytest.approx(POISSON_1_ZERO, abs=1e-15)
    assert [bb_direct(k, 10, 0.5, 0.3) for k in range(6)] == pytest.approx(BB_10_HALF, abs=1e-15)


def test_poisson_zero():
    assert Poisson(1.0).pmf(0) == pytest.approx(POISSON_1_ZERO, abs=1e-12)


def test_pig_closed_form_zero():
    assert PoissonInverseGaussian(1.0, 1.0).pmf(0) == pytest.approx(PIG_1_1_ZERO, abs=1e-12)


def test_pig_small_counts():
    assert PoissonInverseGaussian(2.0, 0.5).pmf(np.arange(4)) == pytest.approx(PIG_2_HALF, abs=1e-12)


def test_censored_at_zero_holds_all_mass():
    assert RightCensored(Poisson(1.0), 0).pmf(0) == 1.0


def test_cdf_total_mass():
    assert Poisson(1.0).cdf(200) == pytest.approx(1.0, abs=1e-12)


def test_zero_adjusted_cdf_at_zero():
    assert ZeroAdjusted(Poisson(2.0), 0.3).cdf(0) == pytest.approx(0.3, abs=1e-15)


def test_beta_binomial_symmetric():
    law = BetaBinomial(10, 0.5, 0.3)
    p = law.pmf(np.arange(11))
    assert p[:6] == pytest.approx(BB_10_HALF, abs=1e-12)
    assert p == pytest.approx(p[::-1], abs=1e-14)
    assert law.cdf(4) == pytest.approx(1 - law.cdf(5), abs=1e-12)


def test_quantiles():
    assert Poisson(1.0).quantile(0.3) == 0
    assert BetaBinomial(12, 0.3, 0.2).quantile(1 - 1e-15) == 12
    assert RightCensored(PoissonInverseGaussian(3.0, 2.0), 20).quantile(1 - 1e-15) == 20
    assert ZeroAdjusted(Poisson(5.0), 0.5).quantile(0.4) == 0


def test_quantile_rejects_bad_probability():
    with pytest.raises(ParameterError):
        Poisson(1.0).quantile(1.0)
    with pytest.raises(ParameterError):
        Poisson(1.0).quantile(0.0)


@pytest.mark.parametrize("make", [lambda: Poisson(-1.0), lambda: Poisson(0.0), lambda: ZeroAdjusted(Poisson(1), 1.5),
                                  lambda: BetaBinomial(-1, 0.5, 0.1), lambda: PoissonInverseGaussian(1.0, 0.0),
                                  lambda: ZeroInflated(Poisson(1), -0.1)])
def test_parameter_domain_errors(make):
    with pytest.raises(ParameterError):
        make()


def test_log_likelihood_examples():
    assert Poisson(1.0).log_likelihood([0]) == pytest.approx(-1.0, abs=1e-15)
    with pytest.raises(SupportError) as e:
        ZeroTruncated(Poisson(1.0)).log_likelihood([1, 0, 2])
    assert list(e.value.indices) == [1]


def test_log_likelihood_additive():
    rng = np.random.default_rng(1)
    law = PoissonInverseGaussian(2.0, 0.5)
    y = law.sample(rng, 100)
    each = sum(float(law.logpmf(int(v))) for v in y)
    assert law.log_likelihood(y) == pytest.approx(each, abs=1e-10)


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def test_degenerate_bernoulli():
    assert np.all(Bernoulli(0.0).sample(np.random.default_rng(0), 1000) == 0)


def test_pig_sampler_matches_pmf():
    rng = np.random.default_rng(2024)
    n = 10 ** 6
    draws = PoissonInverseGaussian(2.0, 1.0).sample(rng, n)
    K = 30
    p = PoissonInverseGaussian(2.0, 1.0).pmf(np.arange(K))
    p = np.append(p, 1 - p.sum())
    obs = np.bincount(np.minimum(draws, K), minlength=K + 1)
    assert stats.chisquare(obs, p * n).pvalue > 1e-3


@pytest.mark.parametrize("n,mu,sigma", [(1, 0.05, 0.3), (86, 0.05, 1e-16), (3, 0.01, 0.5), (20, 0.3, 0.2)])
def test_zero_adjusted_beta_binomial_sampler(n, mu, sigma):
    # rows with a base zero near 1 exercise the rejection fallback
    m = 200_000
    draws = ZeroAdjusted(BetaBinomial(np.full(m, n), mu, sigma), 0.6).sample(np.random.default_rng(n))
    p = ZeroAdjusted(BetaBinomial(n, mu, sigma), 0.6).pmf(np.arange(n + 1))
    obs = np.bincount(draws, minlength=n + 1)
    keep = p * m >= 5
    exp = np.r_[p[keep], p[~keep].sum()] * m
    got = np.r_[obs[keep], obs[~keep].sum()]
    used = exp > 0
    assert got[~used].sum() == 0
    assert stats.chisquare(got[used], exp[used] * got.sum() / exp[used].sum()).pvalue > 1e-3


def test_censored_sampler_bound():
    draws = RightCensored(NegativeBinomial(3.0, 1.0), 5).sample(np.random.default_rng(3), 10 ** 6)
    assert draws.max() == 5


def test_inversion_sampler_reference():
    # generic inversion agrees with the family fast path in distribution
    rng = np.random.default_rng(5)
    law = ZeroInflated(PoissonInverseGaussian(3.0, 0.8), 0.2)
    fast = law.sample(rng, 200_000)
    inv = law._invert(rng.random(200_000))
    assert stats.ks_2samp(fast, inv).pvalue > 1e-3


# --------------------------------------------------------------------------
# combinator algebra and sums
# --------------------------------------------------------------------------


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.05, 20), sigma=st.floats(0.01, 5))
def test_zero_adjusted_at_base_zero_is_base(mu, sigma):
    base = PoissonInverseGaussian(mu, sigma)
    y = np.arange(60)
    adj = ZeroAdjusted(base, float(base.pmf(0)))
    assert np.max(np.abs(adj.pmf(y) - base.pmf(y))) < 1e-12


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.05, 20), pi0=st.floats(0, 1))
def test_zero_inflated_and_truncated_identities(mu, pi0):
    base = Poisson(mu)
    y = np.arange(80)
    assert np.max(np.abs(ZeroInflated(base, 0.0).pmf(y) - base.pmf(y))) < 1e-14
    zi = ZeroInflated(base, pi0)
    assert zi.pmf(0) == pytest.approx(pi0 + (1 - pi0) * base.pmf(0), abs=1e-14)
    zt = ZeroTruncated(base)
    assert zt.pmf(0) == 0.0
    if base.pmf(0) < 1 - 1e-8:
        assert zt.pmf(3) == pytest.approx(base.pmf(3) / (1 - base.pmf(0)), rel=1e-10)
        assert ZeroAdjusted(base, pi0).pmf(0) == pytest.approx(pi0, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(mu=st.floats(0.1, 30), sigma=st.floats(0.01, 5), c=st.integers(0, 90))
def test_right_censored_mass_and_mean(mu, sigma, c):
    base = NegativeBinomial(mu, sigma)
    law = RightCensored(base, c)
    p = law.pmf_table(c + 5)
    assert p.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(p[c + 1:] == 0)
    if c > 0:
        assert p[:c] == pytest.approx(base.pmf(np.arange(c)), rel=1e-12, abs=1e-300)
        assert p[c] == pytest.approx(1 - base.cdf(c - 1), abs=1e-12)
    assert law.mean() <= base.mean() + 1e-9


@settings(max_examples=40, deadline=None)
@given(n=st.integers(0, 120), mu=st.floats(0.01, 0.99), sigma=st.floats(1e-12, 10))
def test_beta_binomial_sums_and_mean(n, mu, sigma):
    p = BetaBinomial(n, mu, sigma).pmf(np.arange(n + 1))
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.dot(p, np.arange(n + 1)) == pytest.approx(n * mu, abs=1e-8 * max(n, 1))


@settings(max_examples=30, deadline=None)
@given(mu=st.floats(0.05, 30), sigma=st.floats(0.01, 8))
def test_cdf_nondecreasing_and_unbounded_tail(mu, sigma):
    law = PoissonInverseGaussian(mu, sigma)
    K = int(law.quantile(1 - 1e-12))
    cdf = law.cdf(np.arange(K + 1))
    assert np.all(np.diff(cdf) >= -1e-15)
    assert cdf[-1] >= 1 - 1e-10


def test_categorical_and_bernoulli_finite_supports():
    cat = Categorical([0.1, 0.2, 0.7])
    assert cat.pmf(np.arange(3)).sum() == pytest.approx(1.0, abs=1e-15)
    assert cat.pmf(3) == 0.0
    assert Bernoulli(0.3).pmf(np.arange(2)).sum() == pytest.approx(1.0, abs=1e-15)


def test_pig_tends_to_poisson():
    y = np.arange(80)
    for mu in (0.5, 2.0, 10.0):
        diff = PoissonInverseGaussian(mu, 1e-6).pmf(y) - Poisson(mu).pmf(y)
        assert np.max(np.abs(diff)) < 1e-4


# log pmf of NB(mu=3) from 50-digit loggamma arithmetic: sigma=1e-9 at y=0,10,40; sigma=0.005 and 2 at y=20
NB_SMALL_SIGMA = [-2.9999999955, -7.118289666894419, -69.37614750353302]
NB_MID_SIGMA = -22.71831884766866
NB_LARGE_SIGMA = -6.13244910022021


def test_negative_binomial_small_dispersion_is_stable():
    assert NegativeBinomial(3.0, 1e-9).logpmf([0, 10, 40]) == pytest.approx(NB_SMALL_SIGMA, abs=1e-12)
    assert NegativeBinomial(3.0, 0.005).logpmf(20) == pytest.approx(NB_MID_SIGMA, abs=1e-12)
    assert NegativeBinomial(3.0, 2.0).logpmf(20) == pytest.approx(NB_LARGE_SIGMA, abs=1e-12)
    y = np.arange(40)
    assert NegativeBinomial(3.0, 1e-14).logpmf(y) == pytest.approx(stats.poisson.logpmf(y, 3.0), rel=1e-12)


def test_beta_binomial_binomial_limit_exact():
    y = np.arange(11)
    law = BetaBinomial(10, 0.3, 1e-12)
    assert law.pmf(y) == pytest.approx(stats.binom.pmf(y, 10, 0.3), abs=1e-14)


def test_censored_thin_tail_is_accurate():
    # the censored mass is far below double-precision resolution of 1 - cdf
    for mu in (2.0, 5.0, 10.0):
        got = RightCensored(Poisson(mu), 85).logpmf(85)
        assert got == pytest.approx(stats.poisson.logsf(84, mu), abs=1e-9)


@pytest.mark.parametrize("law", [LogNormal(1.0, 0.7), Beta(0.3, 4.0)])
def test_continuous_density_integrates_to_one(law):
    lo, hi = (0, np.inf) if isinstance(law, LogNormal) else (0, 1)
    total = integrate.quad(lambda x: float(law.pdf(x)), lo, hi, limit=200)[0]
    assert total == pytest.approx(1.0, abs=1e-8)
