"""Two-arm trial design by simulation: rank test, effect calibration, power.

Arms are summarised by their exact DAH pmfs (averaged over an optional
covariate population), so each simulated trial is a pair of multinomial
count vectors on 0..u and the rank test works directly on counts.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import pandas as pd
from scipy import stats

from .composite import CompositeModel, sample_from_pmf
from .errors import CalibrationError, TargetUnattainedError
from .rng import stream

log = logging.getLogger(__name__)

EXACT_MAX_N = 20


# --------------------------------------------------------------------------
# Mann-Whitney-Wilcoxon
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MWWResult:
    statistic: float
    pvalue: float
    method: str


def _midranks(values):
    return stats.rankdata(values, method="average")


def _exact_u_distribution(m, n):
    """Counts of U = 0..m*n over all C(m+n, m) rank assignments."""
    # f[i][j][u]: arrangements of i x's and j y's with statistic u
    f = np.zeros((m + 1, n + 1, m * n + 1), dtype=object)
    for j in range(n + 1):
        f[0, j, 0] = 1
    for i in range(1, m + 1):
        f[i, 0, 0] = 1
        for j in range(1, n + 1):
            # the largest value is an x (beats all j y's) or a y
            f[i, j, j:] += f[i - 1, j, : m * n + 1 - j]
            f[i, j, :] += f[i, j - 1, :]
    return f[m, n].astype(float)


def mww_test(x, y, alternative="two-sided", method="auto"):
    """Rank-sum test; U counts pairs with x > y (ties count one half).

    ``method="auto"`` uses exact enumeration for ``len(x) + len(y) <= 20``
    without ties, else the normal approximation with tie-corrected variance
    and a 0.5 continuity correction.
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    m, n = x.size, y.size
    if m == 0 or n == 0:
        raise ValueError("both samples must be non-empty")
    if alternative != "two-sided":
        raise ValueError("only the two-sided alternative is implemented")
    both = np.concatenate([x, y])
    r = _midranks(both)
    U = float(r[:m].sum() - m * (m + 1) / 2)
    ties = np.unique(both, return_counts=True)[1]
    exact = method == "exact" or (method == "auto" and m + n <= EXACT_MAX_N and np.all(ties == 1))
    if exact:
        if np.any(ties > 1):
            raise ValueError("exact enumeration needs untied data")
        counts = _exact_u_distribution(m, n)
        pmf = counts / counts.sum()
        k = int(round(U))
        p = 2 * min(pmf[: k + 1].sum(), pmf[k:].sum())
        return MWWResult(U, float(min(1.0, p)), "exact")
    return MWWResult(U, float(_normal_p(U, m, n, np.sum(ties ** 3 - ties))), "normal")


def _normal_p(U, m, n, tie_term):
    N = m + n
    var = m * n / 12.0 * ((N + 1) - tie_term / (N * (N - 1)))
    dev = np.abs(U - m * n / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.maximum(dev - 0.5, 0.0) / np.sqrt(var)
        p = np.where(var > 0, 2 * stats.norm.sf(z), 1.0)
    return np.minimum(p, 1.0)


def mww_from_counts(cx, cy):
    """Vectorised test on count vectors over ordered categories.

    ``cx`` and ``cy`` have shape (reps, K). Returns (U, p) arrays.
    """
    cx, cy = np.asarray(cx, dtype=float), np.asarray(cy, dtype=float)
    m, n = cx.sum(axis=1), cy.sum(axis=1)
    below_y = np.cumsum(cy, axis=1) - cy
    U = np.sum(cx * (below_y + 0.5 * cy), axis=1)
    t = cx + cy
    return U, _normal_p(U, m, n, np.sum(t ** 3 - t, axis=1))


def permutation_pvalue(x, y, reps, rng):
    """Monte Carlo permutation p-value of the two-sided rank-sum test."""
    x, y = np.asarray(x), np.asarray(y)
    both = np.concatenate([x, y])
    r = _midranks(both)
    m = x.size
    centre = m * (both.size + 1) / 2
    obs = abs(r[:m].sum() - centre)
    hits, done = 0, 0
    while done < reps:
        b = min(2000, reps - done)
        perm = np.argsort(rng.random((b, both.size)), axis=1)[:, :m]
        hits += int(np.sum(np.abs(r[perm].sum(axis=1) - centre) >= obs - 1e-9))
        done += b
    return hits / reps


def exact_pvalue_bruteforce(x, y):
    """Enumerate every split of the pooled sample (small samples only)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    both = np.concatenate([x, y])
    r = _midranks(both)
    m, N = x.size, both.size
    centre = m * (N + 1) / 2
    obs = abs(r[:m].sum() - centre)
    stats_ = [abs(r[list(c)].sum() - centre) for c in combinations(range(N), m)]
    return float(np.mean(np.asarray(stats_) >= obs - 1e-9))


# --------------------------------------------------------------------------
# scenarios
# --------------------------------------------------------------------------


def _with_treatment(cov, t):
    cov = cov.copy()
    cov["treatment"] = float(t)
    return cov


@dataclass(frozen=True)
class ScenarioPair:
    """Null and alternative models differing only in the treatment coefficient.

    ``population`` is an optional covariate frame; arm laws average the
    per-patient pmfs over it with treatment set to 0 or 1.
    """

    null: object
    alternative: object
    allocation: float = 0.5
    population: pd.DataFrame = None
    label: str = "dnc"

    def model(self, scenario):
        return self.null if scenario == "null" else self.alternative

    def arm_pmfs(self, scenario):
        return arm_pmfs(self.model(scenario), self.population)

    def arm_sizes(self, n):
        n_t = int(round(n * self.allocation))
        return n - n_t, n_t


def arm_pmf(model, population=None, treatment=0):
    """Population-averaged DAH pmf of one arm."""
    pop = population if population is not None else pd.DataFrame(index=range(1))
    return np.asarray(model.dah_pmf(_with_treatment(pop, treatment))).mean(axis=0)


def arm_pmfs(model, population=None):
    return arm_pmf(model, population, 0), arm_pmf(model, population, 1)


def median_difference(pmf_c, pmf_t, sim_n, rng):
    """Simulated median(treated) - median(control) with common uniforms."""
    u = rng.random(sim_n)
    med = [np.median(np.searchsorted(np.cumsum(p) / p.sum(), u, side="right")) for p in (pmf_c, pmf_t)]
    return float(med[1] - med[0])


def population_median(pmf):
    cdf = np.cumsum(pmf) / np.sum(pmf)
    return int(np.searchsorted(cdf, 0.5, side="left"))


@dataclass(frozen=True)
class CalibrationResult:
    band: tuple
    midpoint: float
    ladder: pd.DataFrame
    target: float

    @property
    def width(self):
        return self.band[1] - self.band[0]


def calibrate_effect(make_model, target=2.0, grid=None, sim_n=200_000, rng=None, population=None):
    """Coefficient band whose simulated median difference equals ``target``.

    ``make_model(beta)`` returns a model with treatment coefficient ``beta``.
    The same uniforms are reused at every grid point, so the ladder is a step
    function of beta. The band is the contiguous run of grid points at the
    target closest to zero; its midpoint is returned. If ``grid`` is None a
    grid on [-4, 4] is used and the side is detected from the sign of the
    median shift.
    """
    rng = rng or np.random.default_rng()
    seed = int(rng.integers(2 ** 63))
    grid = np.linspace(-4.0, 4.0, 801) if grid is None else np.asarray(grid, dtype=float)
    # the treatment coefficient never touches the control arm, so its law is computed once
    pmf_c = arm_pmfs(make_model(grid[0]), population)[0]
    diffs = np.array([median_difference(pmf_c, arm_pmf(make_model(b), population, 1), sim_n,
                                        np.random.default_rng(seed)) for b in grid])
    ladder = pd.DataFrame({"coefficient": grid, "median_difference": diffs})
    hit = np.isclose(diffs, target)
    if not hit.any():
        raise CalibrationError(f"median difference {target} not reached on [{grid.min()}, {grid.max()}]; "
                               f"observed steps {sorted(set(diffs.tolist()))}", ladder)
    # direction: the run nearest to zero on the side that attains the target
    idx = np.flatnonzero(hit)
    start = idx[np.argmin(np.abs(grid[idx]))]
    lo = hi = start
    while lo - 1 >= 0 and hit[lo - 1]:
        lo -= 1
    while hi + 1 < grid.size and hit[hi + 1]:
        hi += 1
    band = (float(min(grid[lo], grid[hi])), float(max(grid[lo], grid[hi])))
    return CalibrationResult(band, 0.5 * (band[0] + band[1]), ladder, float(target))


# --------------------------------------------------------------------------
# power
# --------------------------------------------------------------------------


def default_n_grid():
    return list(range(100, 500, 50)) + list(range(500, 2001, 100))


@dataclass(frozen=True)
class DesignStudyResult:
    n: np.ndarray
    rejections: np.ndarray
    reps: int
    alpha: float
    scenario: str
    model: str = "dnc"
    seed: int = 0

    @property
    def rate(self):
        return self.rejections / self.reps

    @property
    def mc_se(self):
        r = self.rate
        return np.sqrt(r * (1 - r) / self.reps)

    def to_frame(self):
        return pd.DataFrame({"model": self.model, "scenario": self.scenario, "n": self.n, "rate": self.rate,
                             "mc_se": self.mc_se, "reps": self.reps, "alpha": self.alpha, "seed": self.seed})


def rejections_at(pmfs, n, reps, alpha, seed, scenario, label, allocation=0.5):
    """Rejection count of the two-sided rank test over ``reps`` trials of size n."""
    pmf_c, pmf_t = pmfs
    n_t = int(round(n * allocation))
    n_c = n - n_t
    cx = np.empty((reps, pmf_c.size))
    cy = np.empty((reps, pmf_t.size))
    for r in range(reps):
        g = stream(seed, "power-replicates", _scenario_key(label, scenario), n, r)
        cx[r] = g.multinomial(n_c, pmf_c / pmf_c.sum())
        cy[r] = g.multinomial(n_t, pmf_t / pmf_t.sum())
    _, p = mww_from_counts(cy, cx)
    return int(np.sum(p < alpha))


def _scenario_key(label, scenario):
    from .rng import name_key

    return name_key(f"{label}/{scenario}")


def _job(args):
    return rejections_at(*args)


def power_curve(scenarios, n_grid=None, reps=10_000, alpha=0.05, seed=0, threads=1):
    """Rejection rates under the null and the alternative at every n."""
    if reps < 100:
        raise ValueError("reps must be at least 100")
    n_grid = np.asarray(n_grid if n_grid is not None else default_n_grid(), dtype=int)
    out = {}
    for scen in ("null", "alternative"):
        pmfs = scenarios.arm_pmfs(scen)
        jobs = [(pmfs, int(n), reps, alpha, seed, scen, scenarios.label, scenarios.allocation) for n in n_grid]
        if threads > 1:
            with ProcessPoolExecutor(threads) as ex:
                rej = list(ex.map(_job, jobs))
        else:
            rej = [_job(j) for j in jobs]
        out[scen] = DesignStudyResult(n_grid, np.asarray(rej), reps, alpha, scen, scenarios.label, seed)
    return out["null"], out["alternative"]


@dataclass(frozen=True)
class SampleSize:
    n: int
    power: float
    mc_se: float
    below: tuple  # (n, power) of the grid point before, or None


def min_sample_size(result, target_power=0.9):
    rate = result.rate
    ok = np.flatnonzero(rate >= target_power)
    if ok.size == 0:
        raise TargetUnattainedError(f"power {target_power} not reached; max {rate.max():.4f} at "
                                    f"n={int(result.n[np.argmax(rate)])}", float(rate.max()))
    i = int(ok[0])
    below = (int(result.n[i - 1]), float(rate[i - 1])) if i > 0 else None
    return SampleSize(int(result.n[i]), float(rate[i]), float(result.mc_se[i]), below)


def power_monotone(result, k=3.0):
    """True if no later grid point drops more than k MC SEs below an earlier one."""
    r, se = result.rate, result.mc_se
    for i in range(r.size):
        for j in range(i + 1, r.size):
            if r[j] < r[i] - k * math.hypot(se[i], se[j]):
                return False
    return True
