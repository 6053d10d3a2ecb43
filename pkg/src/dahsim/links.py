import numpy as np
from scipy import special

LOGIT_CLAMP = 35.0
PROB_FLOOR = 1e-15


class Link:
    name = ""

    def apply(self, x):
        raise NotImplementedError

    def inverse(self, eta):
        raise NotImplementedError

    def inverse_for_sampling(self, eta):
        return self.inverse(eta)

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other)

    def __hash__(self):
        return hash(self.name)


class Logit(Link):
    """(0, 1) <-> real line."""

    name = "logit"

    def apply(self, x):
        return special.logit(x)

    def inverse(self, eta):
        return special.expit(eta)

    def inverse_for_sampling(self, eta):
        # Linear predictors near +-36 appear in fitted models by design; they
        # are treated as exact 0/1 rather than 1e-16-sized probabilities.
        p = special.expit(np.clip(eta, -LOGIT_CLAMP, LOGIT_CLAMP))
        p = np.where(p < PROB_FLOOR, 0.0, p)
        return np.where(p > 1.0 - PROB_FLOOR, 1.0, p)


class Log(Link):
    name = "log"

    def apply(self, x):
        return np.log(x)

    def inverse(self, eta):
        return np.exp(eta)


class Identity(Link):
    name = "identity"

    def apply(self, x):
        return np.asarray(x, dtype=float)

    def inverse(self, eta):
        return np.asarray(eta, dtype=float)


LINKS = {"logit": Logit(), "log": Log(), "identity": Identity()}


def get_link(link):
    if isinstance(link, Link):
        return link
    try:
        return LINKS[link]
    except KeyError:
        raise ValueError(f"unknown link {link!r}") from None
