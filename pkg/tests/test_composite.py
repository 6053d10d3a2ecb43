import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from dahsim import distributions as D
from dahsim.canonical import canonical_covariates, canonical_model
from dahsim.composite import (CompositeModel, FitConfig, PatientComponents, component_log_likelihoods,
                              composite_log_likelihood, dah_from_components, fit_composite, sample_from_pmf)
from dahsim.errors import DataError
from dahsim.regression import ComponentSpec

# 198 * log(1 - pi) + 2 * log(pi), pi = expit(-4.595)
DEATH_LL_200 = -11.200306885190434


def _spec(family, coefs):
    spec = ComponentSpec.null(family)
    return spec.with_coef({p: {"(Intercept)": v} for p, v in coefs.items()})


def simple_model(death=-40.0, ext_nu=40.0, ext_mu=1.0, ext_sigma=0.0, care_nu=40.0, care_mu=-2.0,
                 care_sigma=-1.0, u=90, ptilde=4, **kw):
    return CompositeModel(u, ptilde, _spec("BI", {"mu": death}),
                          _spec("ZICPIG", {"mu": ext_mu, "sigma": ext_sigma, "nu": ext_nu}),
                          _spec("ZABB", {"mu": care_mu, "sigma": care_sigma, "nu": care_nu}), **kw)


def test_frozen_death_contribution():
    pi = 1 / (1 + math.exp(4.595))
    assert 198 * math.log1p(-pi) + 2 * math.log(pi) == pytest.approx(DEATH_LL_200, abs=1e-12)


# --------------------------------------------------------------------------
# deterministic decomposition
# --------------------------------------------------------------------------


def test_dah_from_components_examples():
    assert dah_from_components(90, 0, 4, 0) == 86
    assert dah_from_components(90, 1, 30, 20) == 0
    assert dah_from_components(90, 0, 10, 15) == 65
    with pytest.raises(DataError) as e:
        dah_from_components(90, [0, 0, 0], [4, 60, 5], [0, 40, 0])
    assert e.value.ids == (1,)


@given(u=st.integers(1, 120), data=st.data())
def test_dah_bounds(u, data):
    yI = data.draw(st.integers(0, u))
    yS = data.draw(st.integers(0, u - yI))
    dead = data.draw(st.integers(0, 1))
    d = dah_from_components(u, dead, yI, yS)
    assert 0 <= d <= u - yI
    assert d == (0 if dead else u - yI - yS)


def test_model_validation():
    with pytest.raises(ValueError):
        simple_model(u=0)
    with pytest.raises(ValueError):
        simple_model(ptilde=91)
    with pytest.raises(ValueError):
        simple_model(care_orientation="maybe")
    with pytest.raises(ValueError):
        simple_model(protocol=(0.5, 0.5))


# --------------------------------------------------------------------------
# simulation examples
# --------------------------------------------------------------------------


def test_simulate_patient_examples():
    rng = np.random.default_rng(0)
    x = pd.DataFrame(index=range(1))
    p = simple_model().simulate_patient(x, rng)
    assert p == PatientComponents(dead=0, P=4, E=0, yE=0, yI=4, C=0, yC=0, yS=0, dah=86)
    assert simple_model(death=40.0).simulate_patient(x, rng).dah == 0
    # extended stay pushed past the window: censored at u - ptilde
    p = simple_model(ext_nu=-40.0, ext_mu=math.log(1e5), ext_sigma=-5.0).simulate_patient(x, rng)
    assert (p.yE, p.yI, p.dah, p.C) == (86, 90, 0, 0)


def test_simulate_invariants_canonical():
    rng = np.random.default_rng(1)
    model = canonical_model()
    sim = model.simulate(canonical_covariates(20_000, rng), rng)
    assert np.all(sim.dah == np.where(sim.dead == 1, 0, 90 - sim.yI - sim.yS))
    assert np.all(sim.yI == np.where(sim.E == 1, 4 + sim.yE, sim.P))
    assert np.all(sim.yI + sim.yS <= 90)
    cens = sim.yE == 86
    assert np.all(sim.loc[cens, "C"] == 0) and np.all(sim.loc[cens & (sim.dead == 0), "dah"] == 0)
    assert sim.dah.max() <= 86


def test_simulate_is_reproducible():
    cov = canonical_covariates(500, np.random.default_rng(2))
    a = canonical_model().simulate(cov, np.random.default_rng(7))
    b = canonical_model().simulate(cov, np.random.default_rng(7))
    pd.testing.assert_frame_equal(a, b)


def test_exact_pmf_matches_simulation():
    rng = np.random.default_rng(3)
    cov = canonical_covariates(300, rng)
    model = canonical_model()
    pmf = model.dah_pmf(cov).mean(axis=0)
    assert pmf.sum() == pytest.approx(1.0, abs=1e-10)
    n = 400_000
    idx = rng.integers(0, len(cov), n)
    sim = model.simulate(cov.iloc[idx].reset_index(drop=True), rng).dah.to_numpy()
    obs = np.bincount(sim, minlength=91)
    keep = pmf * n >= 5
    exp = np.r_[pmf[keep], pmf[~keep].sum()] * n
    got = np.r_[obs[keep], obs[~keep].sum()]
    used = exp > 0
    assert stats.chisquare(got[used], exp[used] * got.sum() / exp[used].sum()).pvalue > 1e-3


def test_sample_from_pmf():
    rng = np.random.default_rng(4)
    pmf = np.array([0.2, 0.0, 0.5, 0.3])
    draws = sample_from_pmf(pmf, rng, 100_000)
    assert not np.any(draws == 1)
    assert np.bincount(draws, minlength=4) / 1e5 == pytest.approx(pmf, abs=0.01)
    rows = sample_from_pmf(np.array([[0, 1.0, 0], [1.0, 0, 0]]), rng)
    assert rows.tolist() == [1, 0]


def test_zero_decomposition_matches_counts():
    rng = np.random.default_rng(5)
    model = simple_model(death=special.logit(0.02), ext_nu=special.logit(0.3), ext_mu=math.log(20), ext_sigma=0.5,
                         care_nu=special.logit(0.7), care_mu=-1.0, care_sigma=0.0)
    cov = pd.DataFrame(index=range(10 ** 6))
    sim = model.simulate(cov, rng)
    dec = model.zero_decomposition(pd.DataFrame(index=range(1)))
    n = len(sim)
    for key, mask in (("zero", sim.dah == 0), ("death", sim.dead == 1),
                      ("censored", (sim.dead == 0) & (sim.yI >= 90)),
                      ("care_fill", (sim.dead == 0) & (sim.yI < 90) & (sim.dah == 0))):
        p = dec[key]
        assert abs(mask.mean() - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12
    assert dec["zero"] == pytest.approx(dec["death"] + dec["censored"] + dec["care_fill"], abs=1e-12)


def test_care_mean_increases_with_extended_stay():
    rng = np.random.default_rng(6)
    model = canonical_model()
    cov = canonical_covariates(10 ** 6, rng)
    sim = model.simulate(cov, rng)
    ok = (sim.E == 1) & (sim.yI < 90) & (sim.C == 1)
    bins = pd.cut(sim.loc[ok, "yE"], [0, 2, 5, 10, 20, 40], include_lowest=True)
    frac = (sim.loc[ok, "yC"] / (90 - sim.loc[ok, "yI"])).groupby(bins, observed=True).mean()
    assert np.all(np.diff(frac.to_numpy()) > 0)


# --------------------------------------------------------------------------
# likelihood
# --------------------------------------------------------------------------


def _records(model, n, seed):
    rng = np.random.default_rng(seed)
    cov = canonical_covariates(n, rng)
    return model.simulate(cov, rng), cov


def test_death_contribution_observed_counts():
    model = canonical_model()
    rec = pd.DataFrame({"dead": np.r_[np.ones(2), np.zeros(198)].astype(int), "yE": 0, "yI": 4, "yS": 0})
    cov = canonical_covariates(200, np.random.default_rng(0))
    ll = component_log_likelihoods(model, rec, cov)
    assert ll["death"] == pytest.approx(DEATH_LL_200, abs=1e-10)


def test_composite_is_sum_of_components():
    model = canonical_model()
    rec, cov = _records(model, 400, 8)
    parts = component_log_likelihoods(model, rec, cov)
    assert composite_log_likelihood(model, rec, cov) == pytest.approx(sum(parts.values()), abs=1e-10)


def test_single_record_pmf_product():
    model = simple_model(death=special.logit(0.05), ext_nu=special.logit(0.2), ext_mu=math.log(3), ext_sigma=0.3,
                         care_nu=special.logit(0.6), care_mu=-1.5, care_sigma=-0.5)
    rec = pd.DataFrame({"dead": [0], "yE": [2], "yI": [6], "yS": [3]})
    cov = pd.DataFrame(index=range(1))
    got = composite_log_likelihood(model, rec, cov)
    ext = D.ZeroInflated(D.RightCensored(D.PoissonInverseGaussian(3.0, math.exp(0.3)), 86), 0.2)
    care = D.ZeroAdjusted(D.BetaBinomial(84, special.expit(-1.5), math.exp(-0.5)), 0.6)
    want = math.log(0.95) + float(ext.logpmf(2)) + float(care.logpmf(3))
    assert got == pytest.approx(want, abs=1e-10)


def test_missing_component_data():
    rec = pd.DataFrame({"dead": [0, 0], "yE": [0, np.nan], "yI": [4, 4], "yS": [0, 0]})
    with pytest.raises(DataError) as e:
        composite_log_likelihood(canonical_model(), rec, pd.DataFrame(index=range(2)))
    assert e.value.ids == (1,)


# --------------------------------------------------------------------------
# fitting
# --------------------------------------------------------------------------


def _trial_shaped(seed):
    rng = np.random.default_rng(seed)
    n = 200
    dead = np.zeros(n, dtype=int)
    dead[:2] = 1
    yE = np.where(rng.random(n) < 0.4, rng.poisson(4, n), 0)
    yI = np.where(yE > 0, 4 + yE, 4)
    yS = np.where(rng.random(n) < 0.25, rng.integers(1, 10, n), 0)
    return pd.DataFrame({"dead": dead, "yE": yE, "yI": yI, "yS": yS})


def test_fit_trial_shaped_death_and_protocol():
    rec = _trial_shaped(0)
    fit = fit_composite(rec, pd.DataFrame(index=range(200)),
                        FitConfig(extended_family="ZACNBI", extended_terms={}, care_terms={}))
    assert fit.fits["death"].coef("mu")["(Intercept)"] == pytest.approx(-4.595, abs=1e-3)
    assert fit.model.protocol is None
    assert any(f.startswith("protocol") for f in fit.flags)


def test_fit_no_readmissions_degenerates():
    rec = _trial_shaped(1)
    rec["yS"] = 0
    fit = fit_composite(rec, pd.DataFrame(index=range(200)), FitConfig(extended_family="ZACNBI"))
    assert any(f.startswith("care") for f in fit.flags)
    sim = fit.model.simulate(pd.DataFrame(index=range(5000)), np.random.default_rng(0))
    assert sim.yS.sum() == 0


def test_fit_observed_early_discharge_gives_protocol_law():
    rec = _trial_shaped(2)
    rec.loc[10:19, "yI"] = 3
    rec.loc[10:19, "yE"] = 0
    fit = fit_composite(rec, pd.DataFrame(index=range(200)), FitConfig(extended_family="ZACNBI"))
    p = np.asarray(fit.model.protocol)
    assert p.shape == (5,) and p[3] > 0 and p[:3].sum() == 0


def test_componentwise_maximum_is_joint_maximum():
    model = simple_model(death=special.logit(0.05), ext_nu=special.logit(0.3), ext_mu=math.log(5), ext_sigma=0.0,
                         care_nu=special.logit(0.7), care_mu=-1.5, care_sigma=-1.0)
    rec = model.simulate(pd.DataFrame(index=range(3000)), np.random.default_rng(9))
    cov = pd.DataFrame(index=range(3000))
    fit = fit_composite(rec, cov)
    base = composite_log_likelihood(fit.model, rec, cov)
    for comp in ("death", "extended", "care"):
        spec = getattr(fit.model, comp)
        for p in spec.params:
            for step in (-0.02, 0.02):
                coef = {p.name: {c: v + step for c, v in p.coef.items()}}
                moved = fit.model.replace(**{comp: spec.with_coef(coef)})
                assert composite_log_likelihood(moved, rec, cov) < base


@settings(max_examples=20, deadline=None)
@given(p=st.floats(0.01, 0.9), seed=st.integers(0, 1000))
def test_orientation_flag_is_a_relabelling(p, seed):
    a = simple_model(care_nu=special.logit(p), care_orientation="zero")
    b = simple_model(care_nu=special.logit(1 - p), care_orientation="care")
    cov = pd.DataFrame(index=range(1))
    assert np.max(np.abs(a.dah_pmf(cov) - b.dah_pmf(cov))) < 1e-12
