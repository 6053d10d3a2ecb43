"""Maximum-likelihood distributional regression for one model component.

Every distribution parameter gets its own link and linear predictor. Fits
use quasi-Newton (BFGS) with central finite-difference gradients, with a
Nelder-Mead fallback and jittered restarts; standard errors come from a
finite-difference Hessian of the log-likelihood.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from scipy import optimize, stats

from .design import build_design, main_effects, term_columns
from .errors import FitError, ParameterError, SupportError
from .families import get_family
from .links import get_link

log = logging.getLogger(__name__)

GRAD_TOL = 1e-6
REL_TOL = 1e-10
POLISH_ROUNDS = 5
EDGE_ETA = 4.0
EDGE_SHIFT = 40.0
EDGE_LR = 0.5 * stats.chi2.ppf(0.95, 1)
BOUNDARY_ETA = 35.0
BOUNDARY_SE = 50.0
PARAM_ORDER = ("mu", "sigma", "nu")


@dataclass(frozen=True)
class ParamSpec:
    """Link, predictor terms and (optionally) coefficients of one parameter.

    ``coef`` maps design column names (``"(Intercept)"``, ``"sex"``,
    ``"country_Australia"``, ``"bmi:treatment"`` ...) to values.
    """

    name: str
    link: object
    terms: tuple = ()
    coef: dict = None

    def __post_init__(self):
        object.__setattr__(self, "link", get_link(self.link))
        object.__setattr__(self, "terms", tuple(self.terms))

    def design(self, covariates, check_rank=False):
        return build_design(covariates, self.terms, check_rank=check_rank)

    def beta(self, columns):
        if self.coef is None:
            raise ValueError(f"parameter {self.name!r} has no coefficients")
        missing = [c for c in columns if c not in self.coef]
        if missing:
            raise ValueError(f"parameter {self.name!r} lacks coefficients for {missing}")
        return np.array([self.coef[c] for c in columns], dtype=float)


@dataclass(frozen=True)
class ComponentSpec:
    family: object
    params: tuple
    name: str = ""

    def __post_init__(self):
        fam = get_family(self.family)
        object.__setattr__(self, "family", fam)
        given = {p.name: p for p in self.params}
        unknown = set(given) - set(fam.params)
        if unknown:
            raise ValueError(f"{fam.name} has no parameter(s) {sorted(unknown)}")
        ordered = tuple(given.get(n, ParamSpec(n, fam.link(n))) for n in fam.params)
        object.__setattr__(self, "params", ordered)

    @classmethod
    def null(cls, family, name="", links=None):
        fam = get_family(family)
        links = links or {}
        return cls(fam, tuple(ParamSpec(p, links.get(p, fam.link(p))) for p in fam.params), name)

    def param(self, name):
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    def with_terms(self, name, terms):
        params = tuple(replace(p, terms=tuple(terms), coef=None) if p.name == name else p for p in self.params)
        return replace(self, params=params)

    def with_coef(self, coefs):
        params = tuple(replace(p, coef=dict(coefs[p.name])) if p.name in coefs else p for p in self.params)
        return replace(self, params=params)

    @property
    def n_coef(self):
        return sum(1 + sum(len(term_columns(t)) for t in p.terms) for p in self.params)

    def theta(self, covariates, aux=None, for_sampling=False):
        """Parameter values per observation, after the inverse link."""
        aux = aux or {}
        out = {}
        for p in self.params:
            dm = p.design(covariates)
            eta = dm.X @ p.beta(dm.columns)
            off = aux.get(f"offset_{p.name}")
            if off is not None:
                eta = eta + off
            out[p.name] = p.link.inverse_for_sampling(eta) if for_sampling else p.link.inverse(eta)
        return out

    def law(self, covariates, aux=None, for_sampling=False):
        return self.family.law(self.theta(covariates, aux, for_sampling), aux or {})


def gaic(loglik, df, k=2.0):
    """Generalised AIC: -2 loglik + k * df."""
    if df < 0:
        raise ValueError("df must be non-negative")
    return -2.0 * loglik + k * df


@dataclass(frozen=True)
class FitResult:
    spec: ComponentSpec
    loglik: float
    df: int
    k: float
    n: int
    table: pd.DataFrame
    cov: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    rel_change: float
    hessian_pd: bool
    path: tuple = field(default=())

    @property
    def gaic(self):
        return gaic(self.loglik, self.df, self.k)

    def gaic_with(self, k):
        return gaic(self.loglik, self.df, k)

    @property
    def boundary(self):
        return bool(self.table["boundary"].any())

    def coef(self, param):
        t = self.table[self.table["parameter"] == param]
        return dict(zip(t["column"], t["estimate"]))


def _central_grad(f, x, f0=None):
    g = np.empty_like(x)
    for j in range(x.size):
        h = 1e-6 * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def numerical_hessian(f, x, rel_step=1e-4):
    """Symmetric central-difference Hessian of a scalar function."""
    p = x.size
    h = rel_step * np.maximum(1.0, np.abs(x))
    H = np.empty((p, p))
    f0 = f(x)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, p):
            ej = np.zeros(p)
            ej[j] = h[j]
            v = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
            H[i, j] = H[j, i] = v
    return H


class _Objective:
    def __init__(self, spec, covariates, y, aux):
        self.spec = spec
        self.family = spec.family
        y = np.asarray(y)
        self.n = y.shape[0]
        designs = [p.design(covariates, check_rank=True) for p in spec.params]
        # identical (design rows, aux, y) records collapse into one weighted row
        aux_cols = [np.broadcast_to(np.asarray(v, dtype=float), (self.n,)) for v in aux.values()]
        key = np.column_stack([dm.X for dm in designs] + aux_cols + [y.astype(float)])
        _, first, inv, counts = np.unique(key, axis=0, return_index=True, return_inverse=True, return_counts=True)
        self.weights = counts.astype(float)
        self.y = y[first]
        self.aux = {k: (np.broadcast_to(np.asarray(v), (self.n,))[first]) for k, v in aux.items()}
        self.blocks = []
        start = 0
        for p, dm in zip(spec.params, designs):
            X = dm.X[first]
            off = self.aux.get(f"offset_{p.name}")
            self.blocks.append((p, dm, X, slice(start, start + dm.p), off))
            start += dm.p
        self.size = start

    def theta(self, beta):
        out = {}
        for p, dm, X, sl, off in self.blocks:
            eta = X @ beta[sl]
            if off is not None:
                eta = eta + off
            out[p.name] = p.link.inverse(eta)
        return out

    def loglik(self, beta):
        with np.errstate(all="ignore"):
            try:
                law = self.family.law(self.theta(beta), self.aux)
            except ParameterError:
                return -np.inf
            if self.family.discrete:
                return float(self.weights @ law.logpmf(self.y))
            return float(self.weights @ law.logpdf(self.y))

    def __call__(self, beta):
        ll = self.loglik(beta)
        return -ll / self.n if np.isfinite(ll) else 1e10


def _check_support(spec, y, aux, covariates):
    fam = spec.family
    fake = {}
    for p in spec.params:
        s = fam.start(y, aux)[p.name]
        fake[p.name] = p.link.inverse(np.full(len(y), s))
    law = fam.law(fake, aux)
    if fam.discrete:
        law.log_likelihood(y)
    else:
        ll = law.logpdf(np.asarray(y, dtype=float))
        bad = ~np.isfinite(ll)
        if np.any(bad):
            raise SupportError("observations outside the continuous support", np.flatnonzero(bad))


def fit_component(spec, covariates, y, k=2.0, aux=None, rng=None, init=None, max_restarts=3):
    """Maximise the component log-likelihood over all coefficients.

    ``init`` optionally maps parameter name to a ``{column: value}`` dict used
    as the starting point (missing columns start at 0). Returns a
    :class:`FitResult`; raises :class:`FitError` if no start converges.
    """
    aux = dict(aux or {})
    y = np.asarray(y)
    if covariates is None:
        covariates = pd.DataFrame(index=range(len(y)))
    _check_support(spec, y, aux, covariates)
    obj = _Objective(spec, covariates, y, aux)
    if obj.n <= obj.size:
        raise FitError(f"{spec.name or spec.family.name}: n={obj.n} does not exceed {obj.size} coefficients")

    x0 = np.zeros(obj.size)
    start = spec.family.start(y, aux)
    for p, dm, _, sl, _ in obj.blocks:
        block = np.zeros(dm.p)
        block[0] = start[p.name]
        if init and p.name in init:
            for j, c in enumerate(dm.columns):
                if c in init[p.name]:
                    block[j] = init[p.name][c]
        x0[sl] = block

    rng = rng or np.random.default_rng(0)
    best = None
    total_iter = 0
    for attempt in range(max_restarts + 1):
        xs = x0 if attempt == 0 else x0 + rng.normal(0.0, 0.1 * attempt, x0.size)
        x, f, it, rel = _minimise(obj, xs)
        x, moved, _ = _edge_probe(obj, x)
        if moved:
            x, f, it2, rel = _minimise(obj, x)
            it += it2
        total_iter += it
        g = np.max(np.abs(_central_grad(obj, x))) if x.size else 0.0
        if best is None or f < best[1]:
            best = (x, f, g, rel)
        if g < GRAD_TOL and rel < REL_TOL:
            break
        log.info("%s: restart %d (grad %.2e, rel %.2e)", spec.family.name, attempt + 1, g, rel)
    x, f, g, rel = best
    converged = g < GRAD_TOL and rel < REL_TOL
    _, _, edge = _edge_probe(obj, x, move=False)
    result = _assemble(obj, spec, x, k, converged, total_iter, g, rel, edge)
    if not converged:
        raise FitError(f"{spec.name or spec.family.name}: no convergence (max |grad| {g:.2e})", best=result,
                       component=spec.name)
    return result


def _minimise(obj, x0):
    """BFGS with finite-difference gradients; Nelder-Mead on trouble."""
    if x0.size == 0:
        return x0, obj(x0), 0, 0.0
    hist = [obj(x0)]

    def cb(xk):
        hist.append(obj(xk))

    res = optimize.minimize(obj, x0, jac=lambda b: _central_grad(obj, b), method="BFGS", callback=cb,
                            options={"gtol": 1e-7, "maxiter": 2000})
    x, it = res.x, res.nit
    g = np.max(np.abs(_central_grad(obj, x)))
    if g >= GRAD_TOL or not np.isfinite(res.fun):
        nm = optimize.minimize(obj, x, method="Nelder-Mead",
                               options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 200 * x.size, "adaptive": True})
        res = optimize.minimize(obj, nm.x, jac=lambda b: _central_grad(obj, b), method="BFGS", callback=cb,
                                options={"gtol": 1e-7, "maxiter": 2000})
        x, it = res.x, it + nm.nit + res.nit
    f = obj(x)
    prev = hist[-2] if len(hist) > 1 else hist[-1]
    rel = abs(prev - f) / max(abs(f), 1e-300)
    # warm restarts: flat boundary directions stall BFGS before the objective settles
    for _ in range(POLISH_ROUNDS):
        if rel < REL_TOL:
            break
        res = optimize.minimize(obj, x, jac=lambda b: _central_grad(obj, b), method="BFGS",
                                options={"gtol": 1e-8, "maxiter": 2000})
        it += res.nit
        f_new = obj(res.x)
        if f_new > f:
            break
        rel = abs(f - f_new) / max(abs(f_new), 1e-300)
        x, f = res.x, f_new
    return x, f, it, rel


def _invert(H):
    try:
        np.linalg.cholesky(H)
        return True, np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return False, np.linalg.pinv(H)


def _edge_directions(obj, x):
    """Coefficient directions that push near-degenerate rows to the edge.

    For a logit parameter (either side) or a log-link dispersion (towards 0),
    rows whose linear predictor is already beyond ``EDGE_ETA`` form a set R.
    A direction d with X d = 1 on R and 0 elsewhere moves only those rows;
    it exists when R is spanned by the design (e.g. an indicator column).
    """
    out = []
    for p, dm, X, sl, off in obj.blocks:
        link = p.link.name
        if link == "logit":
            sides = (1.0, -1.0)
        elif link == "log" and p.name != "mu":
            sides = (-1.0,)
        else:
            continue
        eta = X @ x[sl] + (0.0 if off is None else off)
        for side in sides:
            R = side * eta > EDGE_ETA
            if not R.any():
                continue
            target = side * R.astype(float)
            d, *_ = np.linalg.lstsq(X, target, rcond=None)
            if np.max(np.abs(X @ d - target)) > 1e-8:
                continue
            full = np.zeros_like(x)
            full[sl] = d
            out.append(full)
    return out


def _edge_probe(obj, x, move=True):
    """Move to (or flag) degenerate edges the likelihood cannot distinguish.

    Returns ``(x, moved, flagged)`` where ``flagged`` is a boolean mask of
    coefficients whose edge value lies inside the 95% likelihood-ratio
    region, so Wald intervals for them are not meaningful.
    """
    flagged = np.zeros(x.size, dtype=bool)
    moved = False
    ll = obj.loglik(x)
    for d in _edge_directions(obj, x):
        cand = x + EDGE_SHIFT * d
        ll_edge = obj.loglik(cand)
        if not np.isfinite(ll_edge):
            continue
        if move and ll_edge > ll:
            x, ll, moved = cand, ll_edge, True
        if ll_edge > ll - EDGE_LR:
            flagged |= np.abs(d) > 1e-10
    return x, moved, flagged


def _assemble(obj, spec, x, k, converged, iterations, g, rel, edge=None):
    ll = obj.loglik(x)
    n = obj.n
    edge = np.zeros(x.size, dtype=bool) if edge is None else edge
    if x.size:
        H = numerical_hessian(lambda b: obj(b) * n, x)
        pd_ok, cov = _invert(H)
        if not pd_ok and edge.any():
            # coefficients sitting on a flat edge carry no curvature; drop them
            keep = ~edge
            ok, sub = _invert(H[np.ix_(keep, keep)])
            if ok:
                pd_ok = True
                cov = np.full_like(H, np.nan)
                cov[np.ix_(keep, keep)] = sub
    else:
        pd_ok, cov = True, np.empty((0, 0))
    var = np.diag(cov) if x.size else np.empty(0)
    with np.errstate(invalid="ignore"):
        se = np.where(var > 0, np.sqrt(np.abs(var)), np.nan)
    rows = []
    coefs = {}
    j = 0
    for p, dm, _, sl, _ in obj.blocks:
        coefs[p.name] = dict(zip(dm.columns, x[sl]))
        for c, b, s in zip(dm.columns, x[sl], se[sl]):
            bnd = abs(b) > BOUNDARY_ETA or not np.isfinite(s) or s > BOUNDARY_SE or bool(edge[j])
            # no Wald test at a boundary: the estimate is not an interior maximum
            z = b / s if np.isfinite(s) and s > 0 and not bnd else np.nan
            pval = 2 * stats.norm.sf(abs(z)) if np.isfinite(z) else np.nan
            j += 1
            rows.append((p.name, p.link.name, c, b, s, z, pval, bnd))
    table = pd.DataFrame(rows, columns=["parameter", "link", "column", "estimate", "se", "z", "p_value", "boundary"])
    if not pd_ok:
        warnings.warn(f"{spec.family.name}: Hessian not positive definite; standard errors unreliable", stacklevel=3)
    fitted = spec.with_coef(coefs)
    return FitResult(fitted, ll, int(x.size), float(k), n, table, cov, bool(converged), int(iterations),
                     float(g), float(rel), pd_ok)


# --------------------------------------------------------------------------
# stepwise selection
# --------------------------------------------------------------------------


def _eligible(term, current):
    parts = main_effects(term)
    return len(parts) == 1 or all(p in current for p in parts)


def _removable(term, current):
    return not any(term != t and set(main_effects(term)) <= set(main_effects(t)) for t in current)


def stepwise_select(spec, covariates, y, candidates, k=2.0, aux=None, tol=1e-6, rng=None):
    """Forward selection on mu, then sigma, then nu; then backward elimination.

    ``candidates`` is a list of terms offered to every parameter or a dict
    ``{param: [terms]}``. Interactions are only offered once both main
    effects are in that parameter's predictor. Each step accepts the single
    change with the lowest GAIC if it lowers GAIC by more than ``tol``; ties
    go to the earlier candidate. Failed candidate fits are logged and skipped.
    """
    fam = spec.family
    order = [p for p in PARAM_ORDER if p in fam.params] + [p for p in fam.params if p not in PARAM_ORDER]
    if not isinstance(candidates, dict):
        candidates = {p: list(candidates) for p in order}
    path = []

    def try_fit(s, init):
        try:
            return fit_component(s, covariates, y, k=k, aux=aux, rng=rng, init=init)
        except FitError as e:
            if e.best is not None and np.isfinite(e.best.loglik):
                log.warning("candidate %s did not fully converge (%s); using best-so-far", _describe(s), e)
                return e.best
            log.warning("candidate fit %s failed: %s", _describe(s), e)
        except (SupportError, ParameterError, np.linalg.LinAlgError) as e:
            log.warning("candidate fit %s failed: %s", _describe(s), e)
        return None

    current = try_fit(spec, None)
    if current is None:
        raise FitError(f"starting model {_describe(spec)} could not be fitted")
    path.append(("start", None, None, current.gaic))

    for pname in order:
        while True:
            terms = current.spec.param(pname).terms
            opts = [t for t in candidates.get(pname, ()) if t not in terms and _eligible(t, terms)]
            best = None
            for t in opts:
                r = try_fit(current.spec.with_terms(pname, terms + (t,)), _init_from(current))
                if r is not None and (best is None or r.gaic < best[1].gaic):
                    best = (t, r)
            if best is None or not best[1].gaic < current.gaic - tol:
                break
            current = best[1]
            path.append(("add", pname, best[0], current.gaic))

    for pname in order:
        while True:
            terms = current.spec.param(pname).terms
            best = None
            for t in terms:
                if not _removable(t, terms):
                    continue
                r = try_fit(current.spec.with_terms(pname, tuple(x for x in terms if x != t)), _init_from(current))
                if r is not None and (best is None or r.gaic < best[1].gaic):
                    best = (t, r)
            if best is None or not best[1].gaic < current.gaic - tol:
                break
            current = best[1]
            path.append(("drop", pname, best[0], current.gaic))

    return replace(current, path=tuple(path))


def _init_from(result):
    return {p.name: dict(p.coef) for p in result.spec.params}


def _describe(spec):
    return f"{spec.family.name}(" + "; ".join(f"{p.name}~{'+'.join(p.terms) or '1'}" for p in spec.params) + ")"


def wald_interval(result, level=0.99):
    z = stats.norm.ppf(0.5 + level / 2)
    t = result.table
    return pd.DataFrame({"parameter": t["parameter"], "column": t["column"],
                         "lo": t["estimate"] - z * t["se"], "hi": t["estimate"] + z * t["se"]})


def log_penalty(n):
    """The BIC penalty, ``log(n)``."""
    return math.log(n)
