"""Residual diagnostics and the resampling quantile-quantile predictive check."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .composite import _prepare, sample_from_pmf

log = logging.getLogger(__name__)

GRID = 250


@dataclass(frozen=True)
class ResidualSet:
    residuals: np.ndarray
    index: np.ndarray
    component: str = ""
    degenerate: np.ndarray = None  # observations whose cdf interval had zero width

    def __len__(self):
        return self.residuals.size


def randomized_quantile_residuals(law, y, rng, component=""):
    """Normal scores of uniform draws on each observation's cdf interval.

    ``law`` is a (batched) law from :mod:`dahsim.distributions`. Continuous
    laws (with ``logpdf``) give exact normal scores of the cdf.
    """
    y = np.asarray(y)
    idx = np.arange(y.size)
    if hasattr(law, "logpdf") and not hasattr(law, "log_table"):
        u = np.asarray(law.cdf(y.astype(float)), dtype=float)
        degenerate = np.zeros(y.size, dtype=bool)
    else:
        hi = np.asarray(law.cdf(y), dtype=float)
        lo = np.where(y > law.lo, np.asarray(law.cdf(y - 1), dtype=float), 0.0)
        degenerate = ~(hi > lo)
        if degenerate.any():
            warnings.warn(f"{int(degenerate.sum())} observations have a zero-width cdf interval", stacklevel=2)
        u = lo + (hi - lo) * rng.random(y.size)
    u = np.clip(u, 1e-16, 1 - 1e-16)
    return ResidualSet(stats.norm.ppf(u), idx, component, degenerate)


def ppoints(n):
    a = 3.0 / 8.0 if n <= 10 else 0.5
    return (np.arange(1, n + 1) - a) / (n + 1 - 2 * a)


def worm_plot_data(residuals):
    """Detrended normal QQ points with an approximate pointwise 95% band."""
    r = residuals.residuals if isinstance(residuals, ResidualSet) else np.asarray(residuals, dtype=float)
    n = r.size
    if n < 10:
        raise ValueError("worm plot needs at least 10 residuals")
    p = ppoints(n)
    z = stats.norm.ppf(p)
    half = 1.96 * np.sqrt(p * (1 - p) / n) / stats.norm.pdf(z)
    dev = np.sort(r) - z
    return pd.DataFrame({"z": z, "deviation": dev, "lo": -half, "hi": half})


def worm_coverage(table):
    return float(np.mean((table["deviation"] >= table["lo"]) & (table["deviation"] <= table["hi"])))


@dataclass(frozen=True)
class QQCheckResult:
    p: np.ndarray
    x_mean: np.ndarray
    y_mean: np.ndarray
    y_lo: np.ndarray
    y_hi: np.ndarray
    B: int

    def inside(self, tol=0.0):
        """Grid points where the identity line lies inside the envelope.

        ``tol`` widens the envelope on both sides. Envelope ends are integer
        quantiles while ``x_mean`` is an average, so ``tol=0.5`` (half a day)
        stops a collapsed envelope such as [85, 85] rejecting 84.97.
        """
        return (self.y_lo - tol <= self.x_mean) & (self.x_mean <= self.y_hi + tol)

    def coverage(self, tol=0.0):
        return float(np.mean(self.inside(tol)))

    def width(self):
        return self.y_hi - self.y_lo

    def to_frame(self):
        return pd.DataFrame({"p": self.p, "x_mean": self.x_mean, "y_mean": self.y_mean,
                             "y_lo": self.y_lo, "y_hi": self.y_hi})


class EmpiricalResampler:
    """A 'model' that redraws from the observed DAH values."""

    def __init__(self, dah, u=None):
        dah = np.asarray(dah, dtype=np.int64)
        self.pmf = np.bincount(dah, minlength=(u or dah.max()) + 1) / dah.size

    def dah_pmf(self, covariates):
        n = covariates if isinstance(covariates, int) else len(covariates)
        return np.broadcast_to(self.pmf, (n, self.pmf.size))


def probability_grid(k=GRID):
    return np.arange(1, k + 1) / (k + 1)


def _type1(sorted_rows, p):
    n = sorted_rows.shape[1]
    pos = np.clip(np.ceil(n * p - 1e-12).astype(int) - 1, 0, n - 1)
    return sorted_rows[:, pos]


def resampling_qq_check(model, dah, covariates=None, B=5000, grid=GRID, rng=None, batch=500):
    """Bootstrap (dah, x) pairs; simulate from ``model`` at the resampled x.

    ``model`` needs ``dah_pmf(covariates)``. Quantiles are type 1 (smallest
    value whose empirical cdf reaches p) on both axes.
    """
    if B < 100:
        warnings.warn(f"B={B} < 100: envelope is unstable", stacklevel=2)
    rng = rng or np.random.default_rng()
    dah = np.asarray(dah)
    n = dah.size
    cov = _prepare(covariates if covariates is not None else n)
    pmf = np.asarray(model.dah_pmf(cov))
    cum = np.cumsum(pmf, axis=1)
    cum /= cum[:, -1:]
    p = probability_grid(grid)
    xs, ys = [], []
    for start in range(0, B, batch):
        b = min(batch, B - start)
        idx = rng.integers(0, n, size=(b, n))
        obs = np.sort(dah[idx], axis=1)
        u = rng.random((b, n))
        sim = np.empty((b, n), dtype=np.int64)
        for r in range(b):
            c = cum[idx[r]]
            sim[r] = np.minimum(np.sum(c <= u[r][:, None], axis=1), pmf.shape[1] - 1)
        sim.sort(axis=1)
        xs.append(_type1(obs, p))
        ys.append(_type1(sim, p))
    x = np.vstack(xs).astype(float)
    y = np.vstack(ys).astype(float)
    lo, hi = np.percentile(y, [2.5, 97.5], axis=0)
    mean = y.mean(axis=0)
    # integer quantiles can collapse the envelope to one value the mean misses
    # by a few hundredths; widen it so lo <= mean <= hi always holds
    return QQCheckResult(p, x.mean(axis=0), mean, np.minimum(lo, mean), np.maximum(hi, mean), B)


def integrated_discrepancy(qq):
    """Area between the mean QQ curve and the identity line, in days."""
    x, y = np.asarray(qq.x_mean), np.asarray(qq.y_mean)
    order = np.argsort(x, kind="stable")
    return float(np.trapezoid(np.abs(y - x)[order], x[order]))


def discrepancy_table(results):
    """``results`` maps (model, shift) to QQCheckResult."""
    rows = [(m, s, integrated_discrepancy(q), q.coverage(), q.coverage(0.5)) for (m, s), q in results.items()]
    return pd.DataFrame(rows, columns=["model", "shift", "area", "coverage", "coverage_half_day"]).sort_values(
        "area", kind="stable")


def simulate_from(model, covariates, rng):
    """Draw one DAH per covariate row from any model exposing ``dah_pmf``."""
    return sample_from_pmf(np.asarray(model.dah_pmf(covariates)), rng)
