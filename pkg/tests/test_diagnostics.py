import warnings

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from dahsim.canonical import canonical_covariates, canonical_model
from dahsim.competitors import fit_competitor
from dahsim.diagnostics import (EmpiricalResampler, QQCheckResult, discrepancy_table, integrated_discrepancy,
                                probability_grid, randomized_quantile_residuals, resampling_qq_check,
                                worm_coverage, worm_plot_data)
from dahsim.distributions import LogNormal, Poisson, PoissonInverseGaussian


def _qq(x, y, lo=None, hi=None):
    x, y = np.asarray(x, float), np.asarray(y, float)
    return QQCheckResult(probability_grid(x.size), x, y, y if lo is None else lo, y if hi is None else hi, 1000)


@pytest.fixture(scope="module")
def cohort_like():
    rng = np.random.default_rng(2024)
    cov = canonical_covariates(200, rng)
    sim = canonical_model().simulate(cov, rng)
    return sim.dah.to_numpy(), cov


# --------------------------------------------------------------------------
# residuals and worm plots
# --------------------------------------------------------------------------


def test_continuous_residual_at_median_is_zero():
    law = LogNormal(np.array([1.0]), np.array([0.4]))
    r = randomized_quantile_residuals(law, np.array([np.e]), np.random.default_rng(0))
    assert r.residuals[0] == pytest.approx(0.0, abs=1e-12)


def test_true_model_residuals_are_normal():
    rng = np.random.default_rng(1)
    law = PoissonInverseGaussian(np.full(2000, 2.55), 4.37)
    y = law.sample(rng)
    r = randomized_quantile_residuals(law, y, rng)
    assert stats.kstest(r.residuals, "norm").pvalue > 0.01


def test_misspecified_residuals_fail():
    rng = np.random.default_rng(2)
    y = PoissonInverseGaussian(2.0, 2.0).sample(rng, 2000)
    r = randomized_quantile_residuals(Poisson(np.full(2000, y.mean())), y, rng)
    assert stats.kstest(r.residuals, "norm").pvalue < 1e-3


def test_degenerate_interval_is_flagged():
    with pytest.warns(UserWarning, match="zero-width"):
        r = randomized_quantile_residuals(Poisson(np.array([1.0, 1.0])), np.array([1, 400]),
                                          np.random.default_rng(0))
    assert r.degenerate.tolist() == [False, True]


def test_worm_examples():
    z = stats.norm.ppf((np.arange(1, 101) - 0.5) / 100)
    t = worm_plot_data(z)
    assert np.max(np.abs(t.deviation)) < 1e-12
    assert np.all(t.lo < 0) and np.all(t.hi > 0)
    shifted = worm_plot_data(z + 1.0)
    assert np.all(shifted.deviation > shifted.hi)
    with pytest.raises(ValueError):
        worm_plot_data(np.zeros(5))


def test_worm_band_coverage():
    # the expected coverage over seeds is the target; 1000 seeds pin it to about 0.003
    cover = np.array([worm_coverage(worm_plot_data(np.random.default_rng(s).normal(size=200)))
                      for s in range(1000)])
    se = cover.std(ddof=1) / np.sqrt(cover.size)
    assert cover.mean() >= 0.95 - 3 * se
    assert cover.mean() == pytest.approx(0.95, abs=0.01)


# --------------------------------------------------------------------------
# resampling QQ check
# --------------------------------------------------------------------------


def test_probability_grid_open_interval():
    p = probability_grid()
    assert p.size == 250 and p[0] == 1 / 251 and p[-1] == 250 / 251


def test_discrepancy_examples():
    x = np.linspace(0, 86, 250)
    assert integrated_discrepancy(_qq(x, x)) == 0.0
    assert integrated_discrepancy(_qq(x, x + 1.0)) == pytest.approx(86.0, abs=1e-10)


def test_empirical_resampler_is_self_consistent(cohort_like):
    dah, _ = cohort_like
    qq = resampling_qq_check(EmpiricalResampler(dah, 90), dah, B=1000, rng=np.random.default_rng(3))
    # both axes are bootstrap quantiles of the same sample; noise is largest in the sparse lower tail
    gap = np.abs(qq.y_mean - qq.x_mean)
    assert gap.mean() < 0.2
    assert gap[qq.p >= 0.1].max() < 0.5
    assert qq.coverage(0.5) == 1.0


def test_qq_structure_and_narrow_upper_envelope(cohort_like):
    dah, cov = cohort_like
    qq = resampling_qq_check(canonical_model(), dah, cov, B=500, rng=np.random.default_rng(4))
    assert np.all(np.diff(qq.x_mean) >= 0) and np.all(np.diff(qq.y_mean) >= 0)
    assert np.all(qq.y_lo <= qq.y_mean) and np.all(qq.y_mean <= qq.y_hi)
    w = qq.width()
    p = qq.p
    assert w[np.argmin(np.abs(p - 0.9))] < w[np.argmin(np.abs(p - 0.2))]
    assert qq.coverage(0.5) >= qq.coverage()


def test_grid_refinement(cohort_like):
    dah, cov = cohort_like
    model = canonical_model()
    a = integrated_discrepancy(resampling_qq_check(model, dah, cov, B=2000, grid=250, rng=np.random.default_rng(5)))
    b = integrated_discrepancy(resampling_qq_check(model, dah, cov, B=2000, grid=500, rng=np.random.default_rng(5)))
    assert abs(a - b) / a < 0.02


def test_flipped_poisson_misfit_leaves_envelope(cohort_like):
    dah, _ = cohort_like
    spec, _ = fit_competitor("zifpoisson", dah)
    qq = resampling_qq_check(spec, dah, len(dah), B=500, rng=np.random.default_rng(6))
    out = ~qq.inside()
    # a run of consecutive grid points outside the envelope
    runs = np.diff(np.flatnonzero(np.diff(np.r_[0, out.astype(int), 0])))[::2]
    assert runs.max() >= 10


def test_small_b_warns(cohort_like):
    dah, _ = cohort_like
    with pytest.warns(UserWarning, match="unstable"):
        resampling_qq_check(EmpiricalResampler(dah), dah, B=50, rng=np.random.default_rng(0))


def test_qq_reproducible(cohort_like):
    dah, cov = cohort_like
    a = resampling_qq_check(canonical_model(), dah, cov, B=200, rng=np.random.default_rng(8))
    b = resampling_qq_check(canonical_model(), dah, cov, B=200, rng=np.random.default_rng(8))
    pd.testing.assert_frame_equal(a.to_frame(), b.to_frame())


def test_discrepancy_table_sorted():
    x = np.linspace(0, 86, 250)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tab = discrepancy_table({("a", 0): _qq(x, x + 2), ("b", 4): _qq(x, x)})
    assert tab.model.tolist() == ["b", "a"]
    assert tab.area.tolist() == pytest.approx([0.0, 172.0])
