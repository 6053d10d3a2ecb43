"""Reference scenario: a fixed set of component coefficients.

``canonical_model`` carries the full covariate structure. The covariate
generator is illustrative only: the marginal frequencies below are chosen to
look like a small cardiac-surgery cohort and are not estimates.

``scenario_model`` is the two-arm trial-design scenario: the same model with
every treatment term removed and a single treatment coefficient placed on a
designated parameter (by default the mean extended stay).
"""

import numpy as np
import pandas as pd

from .competitors import KINDS, fit_competitor
from .composite import CompositeModel
from .design import COUNTRIES, encode_covariates, term_columns
from .regression import ComponentSpec

U = 90
PTILDE = 4

DEATH = {"mu": {"(Intercept)": -4.595}}

EXTENDED = {
    "mu": {"(Intercept)": 0.935, "age": 0.939, "treatment": -1.236, "bmi": -0.629, "sex": 1.166,
           "country_Australia": 1.136, "country_New Zealand": 0.192, "bmi:treatment": 1.733},
    "sigma": {"(Intercept)": 1.475, "treatment": -1.417, "bmi": -1.088, "sex": 1.134,
              "country_Australia": 0.225, "country_New Zealand": -1.530, "bmi:treatment": 2.311},
    "nu": {"(Intercept)": -36.040},
}

CARE = {
    "nu": {"(Intercept)": 2.762, "country_Australia": -0.412, "country_New Zealand": -1.120, "yE0": -1.427},
    "mu": {"(Intercept)": -2.917, "yE": 0.070},
    "sigma": {"(Intercept)": -36.075, "treatment": -1.831, "yE0": 34.785},
}

EXTENDED_TERMS = {
    "mu": ("age", "treatment", "bmi", "sex", "country", "bmi:treatment"),
    "sigma": ("treatment", "bmi", "sex", "country", "bmi:treatment"),
    "nu": (),
}
CARE_TERMS = {"nu": ("country", "yE0"), "mu": ("yE",), "sigma": ("treatment", "yE0")}

# illustrative covariate frequencies
P_FEMALE = 0.25
P_HIGH_BMI = 0.5
P_OVER_50 = 0.85
COUNTRY_P = (0.6, 0.25, 0.15)


def _component(family, terms, coefs, name):
    spec = ComponentSpec.null(family, name=name)
    for p, t in terms.items():
        spec = spec.with_terms(p, t)
    return spec.with_coef(coefs)


def canonical_model(u=U, ptilde=PTILDE, care_orientation="zero"):
    """Full-covariate model with the reference coefficients."""
    return CompositeModel(
        u=u, ptilde=ptilde,
        death=_component("BI", {}, DEATH, "death"),
        extended=_component("ZICPIG", EXTENDED_TERMS, EXTENDED, "extended"),
        care=_component("ZABB", CARE_TERMS, CARE, "care"),
        care_orientation=care_orientation,
    )


def canonical_covariates(n, rng, treatment=None):
    """Raw covariate frame; ``treatment`` None means 1:1 random allocation."""
    if treatment is None:
        trt = rng.permutation(np.arange(n) % 2)
    else:
        trt = np.full(n, int(treatment))
    return pd.DataFrame({
        "sex": rng.binomial(1, P_FEMALE, n),
        "treatment": trt,
        "bmi": rng.binomial(1, P_HIGH_BMI, n),
        "age": rng.binomial(1, P_OVER_50, n),
        "country": rng.choice(np.array(COUNTRIES), size=n, p=COUNTRY_P),
    })


def reference_coefficients(coefs, keep=()):
    """Drop every covariate coefficient except those in ``keep``."""
    return {p: {c: v for c, v in cs.items() if c == "(Intercept)" or c in keep} for p, cs in coefs.items()}


def _strip_treatment(coefs):
    return {p: {c: v for c, v in cs.items() if "treatment" not in c.split(":")} for p, cs in coefs.items()}


def _terms_from(coefs, base_terms):
    out = {}
    for p, cs in coefs.items():
        cols = set(cs)
        out[p] = tuple(t for t in base_terms.get(p, ()) if all(c in cols for c in term_columns(t)))
    return out


def scenario_model(effect=0.0, component="extended", param="mu", control="population", u=U, ptilde=PTILDE):
    """Two-arm model whose only treatment coefficient is ``effect``.

    ``control="population"`` keeps the baseline covariate effects and drops
    every treatment term; arm laws are then averaged over a covariate
    population (see :func:`scenario_population`). ``control="reference"``
    also drops the baseline covariates, leaving the intercepts (UK, male, low
    BMI, age <= 50). Stay-dependent care predictors (``yE``, ``yE0``) are kept
    in both cases since they belong to the generative structure.
    """
    if control == "population":
        death, ext, care = (_strip_treatment(c) for c in (DEATH, EXTENDED, CARE))
    elif control == "reference":
        death = reference_coefficients(DEATH)
        ext = reference_coefficients(EXTENDED)
        care = reference_coefficients(CARE, ("yE", "yE0"))
    else:
        raise ValueError("control must be 'population' or 'reference'")
    coefs = {"death": death, "extended": ext, "care": care}
    terms = {"death": _terms_from(death, {}), "extended": _terms_from(ext, EXTENDED_TERMS),
             "care": _terms_from(care, CARE_TERMS)}
    terms[component][param] = terms[component][param] + ("treatment",)
    coefs[component][param]["treatment"] = float(effect)
    return CompositeModel(
        u=u, ptilde=ptilde,
        death=_component("BI", terms["death"], coefs["death"], "death"),
        extended=_component("ZICPIG", terms["extended"], coefs["extended"], "extended"),
        care=_component("ZABB", terms["care"], coefs["care"], "care"),
    )


def scenario_population(n=4000, seed=20240):
    """Fixed covariate population over which arm laws are averaged."""
    cov = encode_covariates(canonical_covariates(n, np.random.default_rng(seed)))
    return cov.drop(columns="treatment")


def arm_covariates(n_control, n_treated):
    return pd.DataFrame({"treatment": np.r_[np.zeros(n_control), np.ones(n_treated)]})


def control_sample(n, rng, population=None, effect=0.0):
    """DAH draws from the control arm of the scenario, covariates resampled from the population."""
    pop = scenario_population() if population is None else population
    cov = pop.iloc[rng.integers(0, len(pop), n)].reset_index(drop=True)
    cov["treatment"] = 0.0
    return scenario_model(effect).sample_dah(cov, rng)


def competitor_generators(n=20_000, rng=None, shifts=(0, PTILDE), kinds=KINDS, population=None):
    """Intercept-only comparators fitted to a large control-arm sample.

    These are the comparator data-generating processes for trial design:
    each one mimics the control arm through its own distributional form.
    """
    rng = rng or np.random.default_rng(0)
    dah = control_sample(n, rng, population)
    return {(k, s): fit_competitor(k, dah, None, u=U, shift=s, rng=rng)[0] for s in shifts for k in kinds}
