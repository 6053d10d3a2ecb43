"""Simulate a cohort from the canonical composite model and refit it.

Run: python3 demos/01_simulate_and_fit.py [n] [seed]
"""

import sys

import numpy as np

from dahsim import canonical as canon
from dahsim.composite import FitConfig, fit_composite

n = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0

rng = np.random.default_rng(seed)
cov = canon.canonical_covariates(n, rng)
sim = canon.canonical_model().simulate(cov, rng)
print(f"{n} patients: P(dah=0) = {np.mean(sim.dah == 0):.3f}, median dah = {sim.dah.median():g}, "
      f"max dah = {sim.dah.max()}")
print(sim[["dead", "yE", "yI", "yC", "yS", "dah"]].describe().round(2).T[["mean", "50%", "max"]])

cfg = FitConfig(extended_terms=dict(canon.EXTENDED_TERMS), care_terms=dict(canon.CARE_TERMS))
fit = fit_composite(sim, cov, cfg, rng)
truth = {"death": canon.DEATH, "extended": canon.EXTENDED, "care": canon.CARE}
for name, f in fit.fits.items():
    tab = f.table.copy()
    tab["true"] = [truth[name].get(p, {}).get(c, np.nan) for p, c in zip(tab.parameter, tab.column)]
    print(f"\n{name} (logLik {f.loglik:.1f}, GAIC {f.gaic:.1f})")
    print(tab[["parameter", "column", "true", "estimate", "se", "p_value", "boundary"]].round(3).to_string(index=False))
for flag in fit.flags:
    print("note:", flag)
