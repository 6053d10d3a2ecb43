"""Single-distribution DAH models used as comparators.

Every comparator is a hurdle: a logistic component for ``dah == 0`` (death
or no return home) and a positive part on ``1..W`` with ``W = u - shift``.
``shift`` is 0 for the plain models and the minimum protocol stay for the
shifted variants.

Positive parts, by kind:

* ``zabb``: zero-truncated beta-binomial with denominator ``W``.
* ``zab``: beta on ``dah / W``; exact 1s are shrunk by ``(y (N-1) + 0.5) / N``.
  Draws are rounded to whole days.
* ``flognormal``: log-normal on ``y_H + 0.5`` where ``y_H = W - dah`` are the
  non-home days; a draw ``x`` maps back to ``y_H = floor(x)``.
* ``zifpoisson``: zero-inflated Poisson on ``y_H``, censored at ``W - 1``;
  the inflation absorbs the spike of stays ending at the earliest discharge.
* ``fnb``: negative binomial on ``y_H`` with ``log(W)`` offset on the mean.

Positive-part draws are clipped to ``1..W``, so the zero component alone
controls ``P(dah = 0)``.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import stats

from .composite import _prepare, sample_from_pmf
from .errors import DataError
from .regression import ComponentSpec, fit_component

log = logging.getLogger(__name__)

KINDS = ("zabb", "zab", "flognormal", "zifpoisson", "fnb")
LABELS = {
    "zabb": "zero-adjusted beta-binomial",
    "zab": "zero-adjusted beta",
    "flognormal": "flipped log-normal",
    "zifpoisson": "flipped Poisson",
    "fnb": "flipped negative binomial",
}
_FAMILY = {"zabb": "BBTR", "zab": "BE", "flognormal": "LOGNO", "zifpoisson": "ZICPO", "fnb": "NBI"}
DEGENERATE_ETA = 40.0


@dataclass(frozen=True)
class CompetitorSpec:
    kind: str
    u: int
    shift: int
    zero: ComponentSpec
    positive: ComponentSpec = None
    flags: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown competitor {self.kind!r}; choose from {KINDS}")
        if not 0 <= self.shift < self.u:
            raise ValueError("shift must lie in [0, u)")

    @property
    def window(self):
        return self.u - self.shift

    @property
    def label(self):
        return LABELS[self.kind] + (f" (shift {self.shift})" if self.shift else "")

    def replace(self, **kw):
        return replace(self, **kw)

    def zero_prob(self, cov):
        return np.broadcast_to(self.zero.theta(cov, for_sampling=True)["mu"], (len(cov),))

    def positive_pmf(self, cov):
        """Law of dah on 0..W given a positive outcome (column 0 is zero)."""
        W, m = self.window, len(cov)
        out = np.zeros((m, W + 1))
        if self.positive is None:
            return out
        aux = _aux(self.kind, W, m)
        theta = self.positive.theta(cov, aux, for_sampling=True)
        k = np.arange(1, W + 1)
        if self.kind == "zabb":
            law = self.positive.family.law(theta, aux)
            out[:, 1:] = law.pmf_table(W)[:, 1:]
        elif self.kind == "zab":
            mu, phi = theta["mu"][:, None], theta["sigma"][:, None]
            edges = np.r_[-np.inf, (k[:-1] + 0.5) / W, np.inf]
            cdf = stats.beta.cdf(np.clip(edges, 0, 1)[None, :], mu * phi, (1 - mu) * phi)
            out[:, 1:] = np.diff(cdf, axis=1)
        else:
            yh = W - k  # non-home days for dah = k; dah = 1 absorbs the upper tail
            if self.kind == "flognormal":
                mu, sd = theta["mu"][:, None], theta["sigma"][:, None]
                lo = stats.lognorm.cdf(yh[None, :], s=sd, scale=np.exp(mu))
                hi = stats.lognorm.cdf(yh[None, :] + 1.0, s=sd, scale=np.exp(mu))
                cell = hi - lo
                cell[:, 0] = 1.0 - lo[:, 0]
            else:
                law = self.positive.family.law(theta, aux)
                tab = law.pmf_table(W - 1)
                cell = tab[:, yh]
                cell[:, 0] = 1.0 - np.sum(tab[:, : W - 1], axis=1)
            out[:, 1:] = np.clip(cell, 0.0, None)
        out /= out.sum(axis=1, keepdims=True)
        return out

    def dah_pmf(self, covariates):
        cov = _prepare(covariates)
        if len(cov) == 0:
            return np.empty((0, self.window + 1))
        key = cov.to_numpy(dtype=float)
        _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        sub = cov.iloc[first].reset_index(drop=True)
        pi = self.zero_prob(sub)
        pmf = (1 - pi)[:, None] * self.positive_pmf(sub)
        pmf[:, 0] += pi
        return pmf[inv.ravel()]

    def sample_dah(self, covariates, rng):
        return sample_from_pmf(self.dah_pmf(covariates), rng)

    def simulate(self, covariates, rng):
        """Direct simulation through the zero component and the positive law."""
        cov = _prepare(covariates)
        m, W = len(cov), self.window
        zero = rng.random(m) < self.zero_prob(cov)
        if self.positive is None:
            return np.zeros(m, dtype=np.int64)
        aux = _aux(self.kind, W, m)
        draw = self.positive.law(cov, aux, for_sampling=True).sample(rng, (m,))
        if self.kind == "zabb":
            dah = draw
        elif self.kind == "zab":
            dah = np.rint(draw * W)
        elif self.kind == "flognormal":
            dah = W - np.floor(draw)
        else:
            dah = W - draw
        dah = np.clip(dah, 1, W).astype(np.int64)
        return np.where(zero, 0, dah)


def _aux(kind, W, m):
    if kind == "zabb":
        return {"n": np.full(m, W)}
    if kind == "fnb":
        return {"offset_mu": np.full(m, np.log(W))}
    if kind == "zifpoisson":
        return {"c": np.full(m, W - 1)}
    return {}


def positive_response(kind, dah, W):
    """Transformed positive outcomes the positive part is fitted to."""
    dah = np.minimum(np.asarray(dah), W)
    if kind == "zabb":
        return dah.astype(np.int64)
    if kind == "zab":
        y = dah / W
        N = y.size
        return np.where(y >= 1.0, (y * (N - 1) + 0.5) / N, y)
    yh = W - dah
    if kind == "flognormal":
        return yh + 0.5
    return yh.astype(np.int64)


def fit_competitor(kind, dah, covariates=None, u=90, shift=0, zero_terms=(), positive_terms=None,
                   k=2.0, rng=None):
    """Fit the zero component on 1(dah == 0) and the positive part on dah > 0.

    ``positive_terms`` maps positive-part parameter names to predictor terms.
    Positive values above ``u - shift`` are clipped to the window (flagged).
    """
    if kind not in KINDS:
        raise ValueError(f"unknown competitor {kind!r}; choose from {KINDS}")
    dah = np.asarray(dah)
    if dah.ndim != 1 or dah.size == 0:
        raise DataError("dah must be a non-empty vector")
    if np.any((dah < 0) | (dah > u)) or np.any(dah != np.round(dah)):
        bad = np.flatnonzero((dah < 0) | (dah > u) | (dah != np.round(dah)))
        raise DataError(f"dah values outside 0..{u} at indices {bad[:10].tolist()}", bad.tolist())
    cov = _prepare(covariates if covariates is not None else dah.size)
    W = u - shift
    flags = []
    zero = (dah == 0).astype(np.int64)
    zspec = ComponentSpec.null("BI", name="zero").with_terms("mu", tuple(zero_terms))
    if zero.sum() == 0 or zero.sum() == zero.size:
        eta = -DEGENERATE_ETA if zero.sum() == 0 else DEGENERATE_ETA
        flags.append("zero: " + ("no zeros" if eta < 0 else "all zeros") + "; zero probability fixed")
        zspec = ComponentSpec.null("BI", name="zero").with_coef({"mu": {"(Intercept)": eta}})
        zfit = None
    else:
        zfit = fit_component(zspec, cov, zero, k=k, rng=rng)
        zspec = zfit.spec

    pos = dah > 0
    if np.any(dah[pos] > W):
        flags.append(f"positive: {int(np.sum(dah[pos] > W))} values above the window {W} clipped")
    pfit, pspec = None, None
    if pos.any():
        spec = ComponentSpec.null(_FAMILY[kind], name="positive")
        for p, t in (positive_terms or {}).items():
            spec = spec.with_terms(p, t)
        y = positive_response(kind, dah[pos], W)
        cov_p = cov.loc[pos].reset_index(drop=True)
        pfit = fit_component(spec, cov_p, y, k=k, aux=_aux(kind, W, int(pos.sum())), rng=rng)
        pspec = pfit.spec
    model = CompetitorSpec(kind, u, shift, zspec, pspec, tuple(flags))
    return model, {"zero": zfit, "positive": pfit}


def fit_all(dah, covariates=None, u=90, shifts=(0, 4), rng=None, **kw):
    """Every comparator at every shift; failures are logged and skipped."""
    out = {}
    for shift in shifts:
        for kind in KINDS:
            try:
                out[(kind, shift)] = fit_competitor(kind, dah, covariates, u=u, shift=shift, rng=rng, **kw)[0]
            except Exception as e:  # noqa: BLE001 - report and carry on with the others
                log.warning("competitor %s (shift %d) failed: %s", kind, shift, e)
    return out


def with_location_effect(spec, effect):
    """Add a treatment coefficient to the positive part's location."""
    if spec.positive is None:
        raise ValueError("competitor has no positive part")
    mu = spec.positive.param("mu")
    terms = mu.terms if "treatment" in mu.terms else mu.terms + ("treatment",)
    coef = dict(mu.coef)
    coef["treatment"] = float(effect)
    positive = spec.positive.with_terms("mu", terms).with_coef({"mu": coef})
    return replace(spec, positive=positive)


def competitor_table(specs):
    rows = []
    for (kind, shift), s in specs.items():
        for comp, cs in (("zero", s.zero), ("positive", s.positive)):
            if cs is None:
                continue
            for p in cs.params:
                for c, v in p.coef.items():
                    rows.append((kind, shift, comp, p.name, c, v))
    return pd.DataFrame(rows, columns=["model", "shift", "component", "parameter", "column", "estimate"])
