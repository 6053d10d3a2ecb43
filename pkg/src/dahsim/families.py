"""Map regression parameters onto laws from :mod:`dahsim.distributions`.

Parameter names follow the location / scale / clump-at-zero convention:
``mu``, ``sigma`` and ``nu``. For zero-adjusted and zero-inflated families
``nu`` is the probability mass at zero (hurdle) or of a structural zero
(mixture), never its complement.

Per-observation auxiliary data travel in a dict ``aux``:

* ``"c"``: right-censoring bound (count families with ``censored=True``)
* ``"n"``: binomial denominator (beta-binomial)
* ``"offset_<param>"``: additive offset on the linear predictor
"""

import numpy as np
from scipy import special

from . import distributions as D
from .links import get_link


def _logit_clip(p):
    return float(special.logit(np.clip(p, 1e-4, 1 - 1e-4)))


class Family:
    name = ""
    params = ()
    default_links = {}
    discrete = True

    def law(self, theta, aux):
        raise NotImplementedError

    def start(self, y, aux):
        """Intercept starting values on the link scale (null model)."""
        raise NotImplementedError

    def link(self, param):
        return get_link(self.default_links[param])

    def __repr__(self):
        return self.name

    def __eq__(self, other):
        return isinstance(other, Family) and self.name == other.name

    def __hash__(self):
        return hash(self.name)


class BernoulliFamily(Family):
    name = "BI"
    params = ("mu",)
    default_links = {"mu": "logit"}

    def law(self, theta, aux):
        return D.Bernoulli(theta["mu"])

    def start(self, y, aux):
        return {"mu": _logit_clip(np.mean(y))}


_BASES = {"PO": ("mu",), "NBI": ("mu", "sigma"), "PIG": ("mu", "sigma")}


class CountFamily(Family):
    """Poisson / negative binomial / PIG with optional censoring and zero mass.

    ``CountFamily("PIG", zero="inflated", censored=True)`` is the ZICPIG law
    used for the extended initial stay.
    """

    def __init__(self, base="PIG", zero=None, censored=False, truncated=False):
        if base not in _BASES:
            raise ValueError(f"unknown count base {base!r}")
        if zero not in (None, "inflated", "adjusted"):
            raise ValueError(f"unknown zero structure {zero!r}")
        self.base, self.zero, self.censored, self.truncated = base, zero, censored, truncated
        self.params = _BASES[base] + (("nu",) if zero else ())
        self.default_links = {"mu": "log", "sigma": "log", "nu": "logit"}
        prefix = {"inflated": "ZI", "adjusted": "ZA", None: ""}[zero]
        self.name = prefix + ("C" if censored else "") + ("TR" if truncated else "") + base

    def law(self, theta, aux):
        mu = theta["mu"]
        if self.base == "PO":
            law = D.Poisson(mu)
        elif self.base == "NBI":
            law = D.NegativeBinomial(mu, theta["sigma"])
        else:
            law = D.PoissonInverseGaussian(mu, theta["sigma"])
        if self.censored:
            law = D.RightCensored(law, aux["c"])
        if self.truncated:
            law = D.ZeroTruncated(law)
        if self.zero == "inflated":
            law = D.ZeroInflated(law, theta["nu"])
        elif self.zero == "adjusted":
            law = D.ZeroAdjusted(law, theta["nu"])
        return law

    def start(self, y, aux):
        y = np.asarray(y, dtype=float)
        pos = y[y > 0] if (self.zero or self.truncated) and np.any(y > 0) else y
        m = max(pos.mean(), 0.1)
        out = {"mu": float(np.log(m))}
        if "sigma" in self.params:
            v = pos.var() if pos.size > 1 else m
            out["sigma"] = float(np.log(np.clip((v - m) / m ** 2, 0.05, 20.0)))
        if "nu" in self.params:
            frac0 = np.mean(y == 0)
            out["nu"] = _logit_clip(frac0 if self.zero == "adjusted" else 0.5 * frac0)
        return out


class BetaBinomialFamily(Family):
    """Beta-binomial on 0..n (``aux["n"]``), optionally zero-adjusted/inflated."""

    def __init__(self, zero=None, truncated=False):
        if zero not in (None, "inflated", "adjusted"):
            raise ValueError(f"unknown zero structure {zero!r}")
        self.zero, self.truncated = zero, truncated
        self.params = ("mu", "sigma") + (("nu",) if zero else ())
        self.default_links = {"mu": "logit", "sigma": "log", "nu": "logit"}
        self.name = {"inflated": "ZIBB", "adjusted": "ZABB", None: "BB"}[zero] + ("tr" if truncated else "")

    def law(self, theta, aux):
        law = D.BetaBinomial(aux["n"], theta["mu"], theta["sigma"])
        if self.truncated:
            law = D.ZeroTruncated(law)
        if self.zero == "inflated":
            law = D.ZeroInflated(law, theta["nu"])
        elif self.zero == "adjusted":
            law = D.ZeroAdjusted(law, theta["nu"])
        return law

    def start(self, y, aux):
        y = np.asarray(y, dtype=float)
        n = np.broadcast_to(np.asarray(aux["n"], dtype=float), y.shape)
        pos = (y > 0) & (n > 0) if (self.zero or self.truncated) else n > 0
        frac = np.sum(y[pos]) / max(np.sum(n[pos]), 1.0)
        out = {"mu": _logit_clip(frac), "sigma": float(np.log(0.1))}
        if "nu" in self.params:
            frac0 = np.mean(y == 0)
            out["nu"] = _logit_clip(frac0 if self.zero == "adjusted" else 0.5 * frac0)
        return out


class LogNormalFamily(Family):
    name = "LOGNO"
    params = ("mu", "sigma")
    default_links = {"mu": "identity", "sigma": "log"}
    discrete = False

    def law(self, theta, aux):
        return D.LogNormal(theta["mu"], theta["sigma"])

    def start(self, y, aux):
        ly = np.log(np.asarray(y, dtype=float))
        return {"mu": float(ly.mean()), "sigma": float(np.log(max(ly.std(), 1e-3)))}


class BetaFamily(Family):
    """Mean/precision beta; ``sigma`` here is the precision phi."""

    name = "BE"
    params = ("mu", "sigma")
    default_links = {"mu": "logit", "sigma": "log"}
    discrete = False

    def law(self, theta, aux):
        return D.Beta(theta["mu"], theta["sigma"])

    def start(self, y, aux):
        y = np.asarray(y, dtype=float)
        m, v = y.mean(), y.var()
        phi = np.clip(m * (1 - m) / max(v, 1e-8) - 1, 0.1, 1e4)
        return {"mu": _logit_clip(m), "sigma": float(np.log(phi))}


FAMILIES = {
    "BI": BernoulliFamily,
    "PO": lambda: CountFamily("PO"),
    "NBI": lambda: CountFamily("NBI"),
    "PIG": lambda: CountFamily("PIG"),
    "ZICPIG": lambda: CountFamily("PIG", zero="inflated", censored=True),
    "ZACPIG": lambda: CountFamily("PIG", zero="adjusted", censored=True),
    "ZICNBI": lambda: CountFamily("NBI", zero="inflated", censored=True),
    "ZACNBI": lambda: CountFamily("NBI", zero="adjusted", censored=True),
    "ZICPO": lambda: CountFamily("PO", zero="inflated", censored=True),
    "ZABB": lambda: BetaBinomialFamily("adjusted"),
    "ZIBB": lambda: BetaBinomialFamily("inflated"),
    "BB": BetaBinomialFamily,
    "BBTR": lambda: BetaBinomialFamily(truncated=True),
    "LOGNO": LogNormalFamily,
    "BE": BetaFamily,
}


def get_family(name):
    if isinstance(name, Family):
        return name
    try:
        return FAMILIES[name]()
    except KeyError:
        raise ValueError(f"unknown family {name!r}; choose from {sorted(FAMILIES)}") from None
