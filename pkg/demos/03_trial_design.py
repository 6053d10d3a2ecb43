"""Calibrate a 2-day median effect, then compute power and the minimum sample size.

Run: python3 demos/03_trial_design.py [reps]
"""

import sys

import numpy as np

from dahsim import canonical as canon
from dahsim.trial import ScenarioPair, calibrate_effect, min_sample_size, power_curve

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 2000

pop = canon.scenario_population()
cal = calibrate_effect(canon.scenario_model, 2.0, np.linspace(-3.0, 0.0, 301), 200_000,
                       np.random.default_rng(0), pop)
print(f"coefficients giving a 2-day median difference: [{cal.band[0]:.2f}, {cal.band[1]:.2f}], "
      f"midpoint {cal.midpoint:.3f}")

pair = ScenarioPair(canon.scenario_model(0.0), canon.scenario_model(cal.midpoint), population=pop)
null, alt = power_curve(pair, reps=reps, seed=0)
table = alt.to_frame()[["n", "rate", "mc_se"]].rename(columns={"rate": "power"})
table["size"] = null.rate
print(table.round(4).to_string(index=False))
ss = min_sample_size(alt)
print(f"\nsmallest n with power >= 0.9: {ss.n} (power {ss.power:.3f} +- {ss.mc_se:.3f}); "
      f"previous grid point {ss.below}")
