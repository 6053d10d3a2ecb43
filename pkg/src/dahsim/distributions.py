"""Univariate count laws and the censoring / zero-mass combinators.

Every law is vectorised over a batch of parameter values: constructing
``PoissonInverseGaussian(mu=arr, sigma=2.0)`` gives one law per entry of
``arr`` and all evaluation methods broadcast ``y`` against that batch.

Laws are immutable once built and can be shared between workers; sampling
always takes an explicit ``numpy.random.Generator``.
"""

import copy

import numpy as np
from scipy import special, stats

from .errors import ParameterError, SupportError

TAIL_EPS = 1e-12
SD_CAP = 50.0
BINOMIAL_LIMIT = 1e-8
PRODUCT_FORM_MAX_N = 2000
SF_DIRECT = 1e-8  # below this the censored mass is summed from the tail
TAIL_TERMS = 60
PRODUCT_FORM_SIGMA = 0.01
REJECT_ROUNDS = 20


def _arr(x):
    return np.asarray(x, dtype=float)


def as_counts(y):
    """Validate integer-valued data and return an int64 array."""
    y = np.asarray(y)
    if y.dtype.kind in "iub":
        return y.astype(np.int64)
    yf = y.astype(float)
    bad = ~(np.isfinite(yf) & (yf == np.round(yf)))
    if np.any(bad):
        raise SupportError("count data must be integer valued", np.flatnonzero(bad))
    return yf.astype(np.int64)


def _gather(table, y):
    """Pick ``table[..., y]`` with ``y`` broadcast against the batch axes."""
    y = np.asarray(y)
    shape = np.broadcast_shapes(table.shape[:-1], y.shape)
    t = np.broadcast_to(table, shape + table.shape[-1:])
    idx = np.broadcast_to(y, shape)[..., None]
    return np.take_along_axis(t, idx, axis=-1)[..., 0]


class DiscreteLaw:
    """Base class for integer-valued laws with support starting at ``lo``.

    Subclasses provide ``_log_table(K)`` (log-pmf on 0..K for every batch
    member) and optionally a closed form ``_logpmf_direct``.
    """

    lo = 0
    shape = ()

    @property
    def hi(self):
        return np.inf

    # -- to be provided by subclasses ------------------------------------
    _table_params = ()

    def _log_table(self, K):
        # evaluate the direct form on a grid with every batched parameter given a trailing axis
        k = np.arange(K + 1).reshape((1,) * len(self.shape) + (-1,))
        saved = {a: getattr(self, a) for a in self._table_params}
        for a, v in saved.items():
            setattr(self, a, np.asarray(v)[..., None])
        try:
            return self._logpmf_direct(k)
        finally:
            for a, v in saved.items():
                setattr(self, a, v)

    def _logpmf_direct(self, y):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def var(self):
        raise NotImplementedError

    # -- generic machinery -----------------------------------------------
    def _cap(self):
        """Upper index beyond which tail mass is ignored."""
        hi = np.max(self.hi)
        if np.isfinite(hi):
            return int(hi)
        m = np.max(self.mean() + SD_CAP * np.sqrt(self.var()))
        return int(np.ceil(m)) + 1

    def log_table(self, K):
        """log pmf on 0..K, shape ``self.shape + (K + 1,)``."""
        return np.broadcast_to(self._log_table(int(K)), self.shape + (int(K) + 1,))

    def pmf_table(self, K):
        return np.exp(self.log_table(K))

    def _in_support(self, y):
        return (y >= self.lo) & (y <= self.hi)

    def logpmf(self, y):
        y = as_counts(y)
        ok = self._in_support(y)
        yc = np.where(ok, y, self.lo)
        if type(self)._logpmf_direct is not DiscreteLaw._logpmf_direct:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = self._logpmf_direct(yc)
        else:
            K = int(np.max(yc, initial=self.lo))
            out = _gather(self.log_table(K), yc)
        out = np.where(ok, out, -np.inf)
        return out[()] if out.ndim == 0 else out

    def pmf(self, y):
        return np.exp(self.logpmf(y))

    def cdf(self, y):
        y = as_counts(y)
        hi = np.max(self.hi)
        K = int(min(max(int(np.max(y, initial=0)), 0), hi if np.isfinite(hi) else np.inf))
        cum = np.cumsum(self.pmf_table(K), axis=-1)
        yc = np.clip(y, 0, K)
        out = _gather(cum, yc)
        out = np.where(y < self.lo, 0.0, out)
        out = np.where(y >= self.hi, 1.0, np.minimum(out, 1.0))
        return out[()] if out.ndim == 0 else out

    def sf(self, y):
        return 1.0 - self.cdf(y)

    def _cum_table(self):
        """Cumulative table on 0..K, with K grown until the tail mass is negligible."""
        K = self._cap()
        cum = np.cumsum(self.pmf_table(K), axis=-1)
        while not np.isfinite(np.max(self.hi)) and np.min(cum[..., -1]) < 1 - TAIL_EPS and K < 10 ** 6:
            K *= 2
            cum = np.cumsum(self.pmf_table(K), axis=-1)
        return K, cum

    def _invert(self, u):
        K, cum = self._cum_table()
        u = np.asarray(u, dtype=float)
        if cum.ndim == 1:
            y = np.searchsorted(cum, u, side="left")
        else:
            shape = np.broadcast_shapes(cum.shape[:-1], u.shape)
            cum = np.broadcast_to(cum, shape + cum.shape[-1:])
            y = np.sum(cum < np.broadcast_to(u, shape)[..., None], axis=-1)
        return np.minimum(y, np.minimum(K, self.hi)).astype(np.int64)

    def quantile(self, p):
        """Smallest ``y`` with ``cdf(y) >= p``."""
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)):
            raise ParameterError("quantile probability must lie in (0, 1)")
        out = self._invert(p)
        return out[()] if out.ndim == 0 else out

    def _subset(self, mask):
        """The batch restricted to ``mask`` (flattened to one dimension)."""
        out = copy.copy(self)
        for k, v in vars(self).items():
            if isinstance(v, DiscreteLaw):
                setattr(out, k, v._subset(mask))
            elif isinstance(v, np.ndarray) and v.ndim:
                setattr(out, k, np.broadcast_to(v, self.shape)[mask])
        out.shape = (int(np.count_nonzero(mask)),)
        return out

    def sample(self, rng, size=None):
        """Inversion sampler; subclasses may override with a faster path."""
        shape = self.shape if size is None else tuple(np.atleast_1d(size))
        u = 1.0 - rng.random(shape)
        return self._invert(u)

    def log_likelihood(self, data):
        """Sum of log pmf over ``data``; data outside the support raise."""
        y = as_counts(data)
        bad = ~np.broadcast_to(self._in_support(y), np.broadcast_shapes(y.shape, self.shape))
        if np.any(bad):
            idx = np.flatnonzero(bad)
            raise SupportError(f"{idx.size} observation(s) outside support, first at index {idx[0]}", idx)
        return float(np.sum(self.logpmf(y)))


# --------------------------------------------------------------------------
# families
# --------------------------------------------------------------------------


class Poisson(DiscreteLaw):
    _table_params = ("mu",)

    def __init__(self, mu):
        self.mu = _arr(mu)
        if np.any(~(self.mu > 0)):
            raise ParameterError("Poisson mu must be > 0")
        self.shape = self.mu.shape

    def _logpmf_direct(self, y):
        return stats.poisson.logpmf(y, self.mu)

    def mean(self):
        return self.mu

    def var(self):
        return self.mu

    def sample(self, rng, size=None):
        return rng.poisson(np.broadcast_to(self.mu, size or self.shape)).astype(np.int64)


class NegativeBinomial(DiscreteLaw):
    """Mean/dispersion negative binomial: var = mu + sigma * mu**2."""

    _table_params = ("mu", "sigma")

    def __init__(self, mu, sigma):
        self.mu, self.sigma = np.broadcast_arrays(_arr(mu), _arr(sigma))
        if np.any(~(self.mu > 0)) or np.any(~(self.sigma > 0)):
            raise ParameterError("NegativeBinomial needs mu > 0 and sigma > 0")
        self.shape = self.mu.shape

    def _logpmf_direct(self, y):
        y, mu, s = np.broadcast_arrays(np.asarray(y), self.mu, self.sigma)
        k = 1.0 / s
        tail = y * np.log(mu) - special.gammaln(y + 1) - (y + k) * np.log1p(mu * s)
        out = special.gammaln(y + k) - special.gammaln(k) - y * np.log(k) + tail
        # small sigma: gammaln(y + k) - gammaln(k) cancels badly, so sum log(1 + j s) instead
        near = (s < PRODUCT_FORM_SIGMA) & (y <= PRODUCT_FORM_MAX_N)
        if near.any():
            yn, sn = y[near].astype(np.int64), s[near]
            J = int(yn.max(initial=0))
            cum = np.zeros((yn.size, J + 1))
            cum[:, 1:] = np.cumsum(np.log1p(np.arange(J)[None, :] * sn[:, None]), axis=1)
            out = np.array(out, dtype=float)
            out[near] = cum[np.arange(yn.size), np.maximum(yn, 0)] + tail[near]
        return out

    def mean(self):
        return self.mu

    def var(self):
        return self.mu + self.sigma * self.mu ** 2

    def sample(self, rng, size=None):
        shape = size or self.shape
        k = np.broadcast_to(1.0 / self.sigma, shape)
        lam = rng.gamma(k, np.broadcast_to(self.mu, shape) / k)
        return rng.poisson(lam).astype(np.int64)


class PoissonInverseGaussian(DiscreteLaw):
    """Poisson mixed over an inverse-Gaussian with mean 1 and variance sigma.

    Mean ``mu``, variance ``mu + sigma * mu**2``.  The pmf uses the forward
    recursion (d = 1 + 2*sigma*mu)::

        p(0) = exp((1 - sqrt(d)) / sigma)
        p(1) = mu / sqrt(d) * p(0)
        p(y) = 2*sigma*mu/d * (1 - 3/(2y)) * p(y-1) + mu**2/(d*y*(y-1)) * p(y-2)

    rewritten for the ratios r(y) = p(y)/p(y-1) = a(y) + b(y)/r(y-1) and
    accumulated in log space, so nothing overflows for large y.
    """

    def __init__(self, mu, sigma):
        self.mu, self.sigma = np.broadcast_arrays(_arr(mu), _arr(sigma))
        if np.any(~(self.mu > 0)) or np.any(~(self.sigma > 0)):
            raise ParameterError("PoissonInverseGaussian needs mu > 0 and sigma > 0")
        self.shape = self.mu.shape

    def _log_table(self, K):
        if self.mu.ndim == 1 and self.mu.size > 32:
            pairs = np.column_stack([self.mu, self.sigma])
            uniq, inv = np.unique(pairs, axis=0, return_inverse=True)
            if uniq.shape[0] < self.mu.size:
                sub = PoissonInverseGaussian(uniq[:, 0], uniq[:, 1])
                return sub._recursion(K)[inv.ravel()]
        return self._recursion(K)

    def _recursion(self, K):
        mu, s = self.mu, self.sigma
        d = 1.0 + 2.0 * s * mu
        sd = np.sqrt(d)
        out = np.empty(self.shape + (K + 1,))
        # (1 - sqrt(d)) / s written to avoid cancellation for small s
        out[..., 0] = -2.0 * mu / (1.0 + sd)
        if K >= 1:
            r = mu / sd
            out[..., 1] = out[..., 0] + np.log(r)
            a0 = 2.0 * s * mu / d
            b0 = mu * mu / d
            for y in range(2, K + 1):
                r = a0 * (1.0 - 1.5 / y) + b0 / (y * (y - 1.0)) / r
                out[..., y] = out[..., y - 1] + np.log(r)
        return out

    def mean(self):
        return self.mu

    def var(self):
        return self.mu + self.sigma * self.mu ** 2

    def sample(self, rng, size=None):
        shape = size or self.shape
        nu = rng.wald(1.0, np.broadcast_to(1.0 / self.sigma, shape))
        return rng.poisson(np.broadcast_to(self.mu, shape) * nu).astype(np.int64)


class BetaBinomial(DiscreteLaw):
    """Beta-binomial on 0..n with mean n*mu.

    Shapes are ``a = mu/sigma`` and ``b = (1-mu)/sigma``; for
    ``sigma < 1e-8`` (or mu at 0 or 1) the binomial limit is used exactly.
    """

    def __init__(self, n, mu, sigma):
        n = _arr(n)
        self.n, self.mu, self.sigma = np.broadcast_arrays(n, _arr(mu), _arr(sigma))
        if np.any(self.n < 0) or np.any(self.n != np.round(self.n)):
            raise ParameterError("BetaBinomial n must be a non-negative integer")
        if np.any(~((self.mu >= 0) & (self.mu <= 1))) or np.any(~(self.sigma > 0)):
            raise ParameterError("BetaBinomial needs mu in [0, 1] and sigma > 0")
        self.n = self.n.astype(np.int64)
        self.shape = self.mu.shape
        self._binom = (self.sigma < BINOMIAL_LIMIT) | (self.mu <= 0) | (self.mu >= 1)

    @property
    def hi(self):
        return self.n

    def _logpmf_direct(self, y):
        y = np.asarray(y)
        n, mu, sigma = np.broadcast_arrays(self.n, self.mu, self.sigma)
        out = self._logpmf_betaln(y, n, mu)
        # large shapes (small sigma) make betaln differences cancel; use the product form there
        near = np.broadcast_to((sigma < PRODUCT_FORM_SIGMA) & (n <= PRODUCT_FORM_MAX_N), out.shape)
        if near.any():
            out = np.array(out, dtype=float)
            args = [np.broadcast_to(v, out.shape)[near] for v in (y, n, mu, sigma)]
            out[near] = self._logpmf_product(*args)
        return out

    @staticmethod
    def _logpmf_product(y, n, mu, sigma):
        # sum_{j<y} log(mu + j s) + sum_{j<n-y} log(1 - mu + j s) - sum_{j<n} log(1 + j s);
        # smooth as s -> 0 (binomial limit) and free of large-argument cancellation
        N = int(n.max()) if n.size else 0
        j = np.arange(N, dtype=float)
        s = np.where(sigma < BINOMIAL_LIMIT, 0.0, sigma)[:, None]
        js = j * s
        terms = np.empty((3, y.size, N + 1))
        terms[:, :, 0] = 0.0
        terms[0, :, 1:] = mu[:, None] + js
        terms[1, :, 1:] = (1.0 - mu)[:, None] + js
        terms[2, :, 1:] = 1.0 + js
        with np.errstate(divide="ignore", invalid="ignore"):
            np.log(terms[:, :, 1:], out=terms[:, :, 1:])
            np.cumsum(terms, axis=2, out=terms)
            ok = (y >= 0) & (y <= n)
            yy = np.where(ok, y, 0).astype(np.int64)
            r = np.arange(y.size)
            lc = special.gammaln(n + 1) - special.gammaln(yy + 1) - special.gammaln(n - yy + 1)
            # log(0) factors only enter when y (resp. n-y) reaches them
            out = lc + terms[0, r, yy] + terms[1, r, n - yy] - terms[2, r, n]
        return np.where(ok, out, -np.inf)

    def _logpmf_betaln(self, y, n, mu):
        binom = self._binom
        s = np.where(binom, 1.0, self.sigma)
        m = np.where(binom, 0.5, mu)
        a, b = m / s, (1.0 - m) / s
        with np.errstate(divide="ignore", invalid="ignore"):
            yy = np.minimum(y, n)
            lc = special.gammaln(n + 1) - special.gammaln(yy + 1) - special.gammaln(n - yy + 1)
            bb = lc + special.betaln(yy + a, n - yy + b) - special.betaln(a, b)
            bi = stats.binom.logpmf(yy, n, mu)
        out = np.where(binom, bi, bb)
        return np.where(y > n, -np.inf, out)

    def _log_table(self, K):
        k = np.arange(K + 1)
        n, mu, sigma, binom = (np.broadcast_to(v, self.shape).ravel()
                               for v in (self.n, self.mu, self.sigma, self._binom))
        saved = self.n, self.mu, self.sigma, self._binom
        self.n, self.mu, self.sigma, self._binom = n[:, None], mu[:, None], sigma[:, None], binom[:, None]
        try:
            out = np.array(self._logpmf_betaln(k[None, :], n[:, None], mu[:, None]), dtype=float)
        finally:
            self.n, self.mu, self.sigma, self._binom = saved
        near = (sigma < PRODUCT_FORM_SIGMA) & (n <= PRODUCT_FORM_MAX_N)
        if near.any():
            out[near] = self._product_table(n[near], mu[near], sigma[near], K)
        return out.reshape(self.shape + (K + 1,))

    @staticmethod
    def _product_table(n, mu, sigma, K):
        # one cumulative sum per row, gathered at every k
        N = int(n.max())
        j = np.arange(N, dtype=float)
        s = np.where(sigma < BINOMIAL_LIMIT, 0.0, sigma)[:, None]
        terms = np.zeros((3, n.size, N + 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            terms[0, :, 1:] = np.log(mu[:, None] + j * s)
            terms[1, :, 1:] = np.log((1.0 - mu)[:, None] + j * s)
            terms[2, :, 1:] = np.log1p(j * s)
            np.cumsum(terms, axis=2, out=terms)
            k = np.arange(K + 1)[None, :]
            ok = k <= n[:, None]
            kk = np.where(ok, k, 0)
            r = np.arange(n.size)[:, None]
            lc = special.gammaln(n + 1)[:, None] - special.gammaln(kk + 1) - special.gammaln(n[:, None] - kk + 1)
            out = lc + terms[0, r, kk] + terms[1, r, n[:, None] - kk] - terms[2, r, n[:, None]]
        return np.where(ok, out, -np.inf)

    def mean(self):
        return self.n * self.mu

    def var(self):
        rho = np.where(self._binom, 0.0, self.sigma / (1.0 + self.sigma))
        return self.n * self.mu * (1 - self.mu) * (1 + (self.n - 1) * rho)

    def sample(self, rng, size=None):
        shape = size or self.shape
        s = np.where(self._binom, 1.0, self.sigma)
        m = np.where(self._binom, 0.5, self.mu)
        p = rng.beta(np.broadcast_to(m / s, shape), np.broadcast_to((1 - m) / s, shape))
        p = np.where(np.broadcast_to(self._binom, shape), np.broadcast_to(self.mu, shape), p)
        return rng.binomial(np.broadcast_to(self.n, shape), p).astype(np.int64)


class Bernoulli(DiscreteLaw):
    def __init__(self, p):
        self.p = _arr(p)
        if np.any(~((self.p >= 0) & (self.p <= 1))):
            raise ParameterError("Bernoulli p must lie in [0, 1]")
        self.shape = self.p.shape

    @property
    def hi(self):
        return 1

    def _logpmf_direct(self, y):
        with np.errstate(divide="ignore"):
            return np.where(y == 1, np.log(self.p), np.log1p(-self.p))

    def mean(self):
        return self.p

    def var(self):
        return self.p * (1 - self.p)

    def sample(self, rng, size=None):
        shape = size or self.shape
        return (rng.random(shape) < self.p).astype(np.int64)


class Categorical(DiscreteLaw):
    """Law on 0..K-1 with probabilities along the last axis of ``probs``."""

    def __init__(self, probs):
        probs = _arr(probs)
        if probs.ndim == 0 or np.any(probs < 0) or np.any(np.abs(probs.sum(-1) - 1) > 1e-10):
            raise ParameterError("Categorical probabilities must be >= 0 and sum to 1")
        self.probs = probs
        self.shape = probs.shape[:-1]

    @property
    def hi(self):
        return self.probs.shape[-1] - 1

    def _log_table(self, K):
        with np.errstate(divide="ignore"):
            lp = np.log(self.probs)
        m = self.probs.shape[-1]
        if K + 1 <= m:
            return lp[..., : K + 1]
        pad = np.full(self.shape + (K + 1 - m,), -np.inf)
        return np.concatenate([lp, pad], axis=-1)

    def mean(self):
        return self.probs @ np.arange(self.probs.shape[-1])

    def var(self):
        k = np.arange(self.probs.shape[-1])
        return self.probs @ k ** 2 - self.mean() ** 2


# --------------------------------------------------------------------------
# combinators
# --------------------------------------------------------------------------


def _prob(x, name):
    x = _arr(x)
    if np.any(~((x >= 0) & (x <= 1))):
        raise ParameterError(f"{name} must lie in [0, 1]")
    return x


class RightCensored(DiscreteLaw):
    """All base mass at or above ``c`` is piled onto ``c``."""

    def __init__(self, base, c):
        c = _arr(c)
        if np.any(c < 0) or np.any(c != np.round(c)):
            raise ParameterError("censoring bound must be a non-negative integer")
        self.base = base
        self.c = c.astype(np.int64)
        self.shape = np.broadcast_shapes(base.shape, self.c.shape)

    @property
    def hi(self):
        return self.c

    def _log_sf_base(self):
        cm1 = self.c - 1
        cdf = np.where(cm1 >= 0, self.base.cdf(np.maximum(cm1, 0)), 0.0)
        with np.errstate(divide="ignore"):
            return np.log(np.clip(1.0 - cdf, 0.0, 1.0))

    def _logpmf_direct(self, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            table = self._log_table(int(np.max(self.c)))
            return _gather(table, np.minimum(y, self.c))

    def _log_table(self, K):
        Kp = max(K, int(np.max(self.c)))
        # unbounded bases get extra terms so a thin censored tail can be summed directly
        Kt = Kp + TAIL_TERMS if not np.all(np.isfinite(self.base.hi)) else Kp
        full = np.broadcast_to(self.base.log_table(Kt), self.shape + (Kt + 1,))
        bt = full[..., : Kp + 1]
        cum = np.cumsum(np.exp(bt), axis=-1)
        k = np.arange(Kp + 1)
        c = np.broadcast_to(self.c, self.shape)[..., None]
        sf = np.where(c > 0, 1.0 - np.take_along_axis(cum, np.maximum(c - 1, 0), -1), 1.0)
        with np.errstate(divide="ignore"):
            lsf = np.log(np.clip(sf, 0.0, 1.0))
        thin = sf < SF_DIRECT
        if np.any(thin) and Kt > Kp:
            # 1 - cdf loses everything to cancellation here; sum the upper tail in log space
            rows = thin[..., 0]
            cc = np.broadcast_to(self.c, self.shape)[rows]
            sub = full[rows]
            with np.errstate(divide="ignore", invalid="ignore"):
                tail = special.logsumexp(np.where(np.arange(Kt + 1) >= cc[:, None], sub, -np.inf), axis=-1)
            lsf = np.array(lsf)
            lsf[rows, 0] = tail
        out = np.where(k < c, bt, np.where(k == c, lsf, -np.inf))
        return out[..., : K + 1]

    def mean(self):
        return np.sum(self.pmf_table(int(np.max(self.c))) * np.arange(int(np.max(self.c)) + 1), -1)

    def var(self):
        K = int(np.max(self.c))
        k = np.arange(K + 1)
        return np.sum(self.pmf_table(K) * k ** 2, -1) - self.mean() ** 2

    def sample(self, rng, size=None):
        shape = size or self.shape
        return np.minimum(self.base.sample(rng, shape), np.broadcast_to(self.c, shape))


class ZeroTruncated(DiscreteLaw):
    lo = 1

    def __init__(self, base):
        self.base = base
        self.shape = base.shape

    @property
    def hi(self):
        return self.base.hi

    def _log_norm(self):
        with np.errstate(divide="ignore"):
            return np.log1p(-self.base.pmf(0))

    def _logpmf_direct(self, y):
        return np.where(y >= 1, self.base.logpmf(y) - self._log_norm(), -np.inf)

    def _log_table(self, K):
        bt = self.base.log_table(K)
        out = bt - self._log_norm()[..., None]
        out[..., 0] = -np.inf
        return out

    def mean(self):
        return self.base.mean() / (1.0 - self.base.pmf(0))

    def var(self):
        p0 = self.base.pmf(0)
        m2 = (self.base.var() + self.base.mean() ** 2) / (1.0 - p0)
        return m2 - self.mean() ** 2

    def _cap(self):
        return self.base._cap()

    def sample(self, rng, size=None):
        # redraw zeros from the base; rows that keep hitting zero are inverted directly
        shape = size or self.shape
        out = np.asarray(self.base.sample(rng, shape))
        for _ in range(REJECT_ROUNDS):
            zero = out == 0
            if not zero.any():
                return out
            out = np.where(zero, self.base.sample(rng, shape), out)
        zero = out == 0
        if zero.any():
            law = self if self.shape == tuple(shape) else _broadcast_law(self, shape)
            sub = law._subset(zero)
            out = np.array(out)
            out[zero] = sub._invert(1.0 - rng.random(sub.shape))
        return out


def _broadcast_law(law, shape):
    out = copy.copy(law)
    for k, v in vars(law).items():
        if isinstance(v, DiscreteLaw):
            setattr(out, k, _broadcast_law(v, shape))
        elif isinstance(v, np.ndarray):
            setattr(out, k, np.broadcast_to(v, shape))
    out.shape = tuple(shape)
    return out


class ZeroAdjusted(DiscreteLaw):
    """Hurdle: zero has probability ``pi0``; positives follow the truncated base."""

    def __init__(self, base, pi0):
        self.base = base
        self.pi0 = _prob(pi0, "pi0")
        self.shape = np.broadcast_shapes(base.shape, self.pi0.shape)

    @property
    def hi(self):
        return self.base.hi

    def _logpmf_direct(self, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            lp0 = np.log(self.pi0)
            pos = np.log1p(-self.pi0) + self.base.logpmf(np.maximum(y, 1)) - np.log1p(-self.base.pmf(0))
        return np.where(y == 0, lp0, pos)

    def _log_table(self, K):
        bt = self.base.log_table(K)
        with np.errstate(divide="ignore", invalid="ignore"):
            pos = bt + (np.log1p(-self.pi0) - np.log1p(-np.exp(bt[..., 0])))[..., None]
            out = np.array(np.broadcast_to(pos, self.shape + (K + 1,)))
            out[..., 0] = np.log(self.pi0)
        return out

    def mean(self):
        return (1 - self.pi0) * self.base.mean() / (1.0 - self.base.pmf(0))

    def var(self):
        p0 = self.base.pmf(0)
        m2 = (1 - self.pi0) * (self.base.var() + self.base.mean() ** 2) / (1.0 - p0)
        return m2 - self.mean() ** 2

    def _cap(self):
        return self.base._cap()

    def sample(self, rng, size=None):
        shape = size or self.shape
        zero = rng.random(shape) < self.pi0
        pos = ZeroTruncated(self.base).sample(rng, shape)
        return np.where(zero, 0, pos)


class ZeroInflated(DiscreteLaw):
    """Mixture: structural zero with probability ``pi0``, else the base law."""

    def __init__(self, base, pi0):
        self.base = base
        self.pi0 = _prob(pi0, "pi0")
        self.shape = np.broadcast_shapes(base.shape, self.pi0.shape)

    @property
    def hi(self):
        return self.base.hi

    def _logpmf_direct(self, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            lb = self.base.logpmf(y)
            zero = np.log(self.pi0 + (1 - self.pi0) * np.exp(lb))
            pos = np.log1p(-self.pi0) + lb
        return np.where(y == 0, zero, pos)

    def _log_table(self, K):
        bt = self.base.log_table(K)
        with np.errstate(divide="ignore"):
            out = np.array(np.broadcast_to(bt + np.log1p(-self.pi0)[..., None], self.shape + (K + 1,)))
            out[..., 0] = np.log(self.pi0 + (1 - self.pi0) * np.exp(bt[..., 0]))
        return out

    def mean(self):
        return (1 - self.pi0) * self.base.mean()

    def var(self):
        m2 = (1 - self.pi0) * (self.base.var() + self.base.mean() ** 2)
        return m2 - self.mean() ** 2

    def _cap(self):
        return self.base._cap()

    def sample(self, rng, size=None):
        shape = size or self.shape
        zero = rng.random(shape) < self.pi0
        return np.where(zero, 0, self.base.sample(rng, shape))


# --------------------------------------------------------------------------
# continuous laws (competitor models only)
# --------------------------------------------------------------------------


class ContinuousLaw:
    shape = ()

    def _dist(self):
        raise NotImplementedError

    def logpdf(self, x):
        return self._dist().logpdf(x)

    def pdf(self, x):
        return self._dist().pdf(x)

    def cdf(self, x):
        return self._dist().cdf(x)

    def quantile(self, p):
        p = np.asarray(p, dtype=float)
        if np.any((p <= 0) | (p >= 1)):
            raise ParameterError("quantile probability must lie in (0, 1)")
        return self._dist().ppf(p)

    def sample(self, rng, size=None):
        return self._dist().rvs(size=size or self.shape, random_state=rng)

    def log_likelihood(self, data):
        return float(np.sum(self.logpdf(np.asarray(data, dtype=float))))


class LogNormal(ContinuousLaw):
    """log X ~ Normal(mu, sigma)."""

    def __init__(self, mu, sigma):
        self.mu, self.sigma = np.broadcast_arrays(_arr(mu), _arr(sigma))
        if np.any(~(self.sigma > 0)):
            raise ParameterError("LogNormal sigma must be > 0")
        self.shape = self.mu.shape

    def _dist(self):
        return stats.lognorm(s=self.sigma, scale=np.exp(self.mu))


class Beta(ContinuousLaw):
    """Mean/precision beta: a = mu*phi, b = (1-mu)*phi."""

    def __init__(self, mu, phi):
        self.mu, self.phi = np.broadcast_arrays(_arr(mu), _arr(phi))
        if np.any(~((self.mu > 0) & (self.mu < 1))) or np.any(~(self.phi > 0)):
            raise ParameterError("Beta needs mu in (0, 1) and phi > 0")
        self.shape = self.mu.shape

    def _dist(self):
        return stats.beta(self.mu * self.phi, (1 - self.mu) * self.phi)
