"""The divide-and-conquer DAH model.

For patient i with follow-up window ``u`` and protocol-stay bound ``pt``::

    y_I = P                 if y_E == 0   (E = 0)
        = pt + y_E          otherwise     (E = 1)
    y_S = y_C               (0 when no post-discharge care)
    dah = (u - y_I - y_S) * (1 - dead)

Components:

* ``death``: Bernoulli, logit link.
* ``extended``: zero-inflated or zero-adjusted count law on 0..u-pt,
  right-censored at ``u - pt`` (a censored stay gives ``y_I = u``).
* ``protocol``: categorical law of P on 0..pt, or ``None`` for a point mass
  at ``pt``.
* ``care``: zero-adjusted (or inflated) beta-binomial with denominator
  ``u - y_I``. Its predictors may include ``yE`` and ``yE0`` (= 1(y_E == 0)).

Death is drawn independently of the stays; stays are still drawn for
patients who die but never reach ``dah``. A censored initial stay leaves no
post-discharge window, so care is absent.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import distributions as D
from .design import encode_covariates
from .errors import DataError, FitError
from .regression import ComponentSpec, fit_component, stepwise_select

log = logging.getLogger(__name__)

COMPONENT_COLUMNS = ("dead", "P", "E", "yE", "yI", "C", "yC", "yS", "dah")


@dataclass(frozen=True)
class PatientComponents:
    dead: int
    P: int
    E: int
    yE: int
    yI: int
    C: int
    yC: int
    yS: int
    dah: int

    @property
    def censored(self):
        return self.dah == 0 and not self.dead and self.C == 0 and self.yS == 0


@dataclass(frozen=True)
class CompositeModel:
    """Full generative model; ``care_orientation`` says what care ``nu`` means.

    ``"zero"``: nu is P(no post-discharge care) (hurdle convention).
    ``"care"``: nu is P(post-discharge care).
    """

    u: int
    ptilde: int
    death: ComponentSpec
    extended: ComponentSpec
    care: ComponentSpec
    protocol: tuple = None
    care_orientation: str = "zero"
    definition: str = "dah"

    def __post_init__(self):
        if not self.u > 0:
            raise ValueError("u must be positive")
        if not 0 <= self.ptilde <= self.u:
            raise ValueError("ptilde must lie in [0, u]")
        if self.care_orientation not in ("zero", "care"):
            raise ValueError("care_orientation must be 'zero' or 'care'")
        if self.definition not in ("dah", "dooh"):
            raise ValueError("definition must be 'dah' or 'dooh'")
        if self.protocol is not None:
            p = np.asarray(self.protocol, dtype=float)
            if p.shape != (self.ptilde + 1,) or abs(p.sum() - 1) > 1e-10 or np.any(p < 0):
                raise ValueError(f"protocol probabilities must cover 0..{self.ptilde} and sum to 1")
            object.__setattr__(self, "protocol", tuple(float(v) for v in p))

    # -- helpers ------------------------------------------------------------
    def ptilde_for(self, cov):
        if "ptilde" in cov.columns:
            pt = np.asarray(cov["ptilde"], dtype=np.int64)
            if self.protocol is not None and np.any(pt != self.ptilde):
                raise ValueError("a protocol-stay law requires a common ptilde")
            if np.any((pt < 0) | (pt > self.u)):
                raise ValueError("per-patient ptilde must lie in [0, u]")
            return pt
        return np.full(len(cov), self.ptilde, dtype=np.int64)

    def death_law(self, cov, for_sampling=True):
        return self.death.law(cov, for_sampling=for_sampling)

    def extended_law(self, cov, for_sampling=True):
        return self.extended.law(cov, {"c": self.u - self.ptilde_for(cov)}, for_sampling)

    def care_law(self, cov, yE, yI, for_sampling=True):
        cov = _with_stay_columns(cov, yE)
        theta = self.care.theta(cov, for_sampling=for_sampling)
        if self.care_orientation == "care" and "nu" in theta:
            theta["nu"] = 1.0 - theta["nu"]
        return self.care.family.law(theta, {"n": self.u - np.asarray(yI)})

    def replace(self, **kw):
        return replace(self, **kw)

    # -- simulation -----------------------------------------------------------
    def simulate(self, covariates, rng):
        """Draw all components for every covariate row; returns a DataFrame."""
        cov = _prepare(covariates)
        n = len(cov)
        pt = self.ptilde_for(cov)
        dead = self.death_law(cov).sample(rng, (n,))
        yE = self.extended_law(cov).sample(rng, (n,))
        if self.protocol is None:
            P = pt.copy()
        else:
            P = D.Categorical(self.protocol).sample(rng, (n,))
        E = (yE > 0).astype(np.int64)
        yI = np.where(E == 1, pt + yE, P)
        yC = np.zeros(n, dtype=np.int64)
        room = yI < self.u
        if np.any(room):
            sub = cov.loc[room].reset_index(drop=True)
            yC[room] = self.care_law(sub, yE[room], yI[room]).sample(rng, (int(room.sum()),))
        C = (yC > 0).astype(np.int64)
        yS = yC * C
        dah = dah_from_components(self.u, dead, yI, yS)
        out = pd.DataFrame({"dead": dead, "P": np.where(E == 0, P, pt), "E": E, "yE": yE, "yI": yI,
                            "C": C, "yC": yC, "yS": yS, "dah": dah})
        out["censored"] = (yE >= self.u - pt).astype(np.int64)
        out["contributes"] = (dead == 0).astype(np.int64)
        return out

    def simulate_patient(self, x, rng):
        """Single-patient convenience wrapper around :meth:`simulate`."""
        row = pd.DataFrame([x]) if not isinstance(x, pd.DataFrame) else x
        if len(row) != 1:
            raise ValueError("simulate_patient takes exactly one covariate row")
        r = self.simulate(row, rng).iloc[0]
        return PatientComponents(**{c: int(r[c]) for c in COMPONENT_COLUMNS})

    # -- exact marginal law of DAH -------------------------------------------
    def dah_pmf(self, covariates):
        """Exact pmf of DAH on 0..u for every covariate row, shape (n, u+1)."""
        cov = _prepare(covariates)
        if len(cov) == 0:
            return np.empty((0, self.u + 1))
        key = cov.to_numpy(dtype=float)
        uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        sub = cov.iloc[first].reset_index(drop=True)
        parts = self._pmf_parts(sub)
        return parts["total"][inv.ravel()]

    def zero_decomposition(self, covariates):
        """Average P(dah=0) split into death, censored stay and care filling the window."""
        cov = _prepare(covariates)
        key = cov.to_numpy(dtype=float)
        uniq, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        parts = self._pmf_parts(cov.iloc[first].reset_index(drop=True))
        inv = inv.ravel()
        return {k: float(np.mean(parts[k][inv])) for k in ("death", "censored", "care_fill", "zero")}

    def _pmf_parts(self, cov):
        u = self.u
        m = len(cov)
        pt = self.ptilde_for(cov)
        c = u - pt
        pi_d = np.broadcast_to(self.death_law(cov).p, (m,))
        ext = self.extended_law(cov).pmf_table(int(c.max()))
        # expanded (row, yE, yI, weight) combinations
        rows, yEs, yIs, ws = [], [], [], []
        prot = np.zeros(self.ptilde + 1) if self.protocol is None else np.asarray(self.protocol)
        for i in range(m):
            ye = np.arange(1, c[i] + 1)
            rows.append(np.full(ye.size, i))
            yEs.append(ye)
            yIs.append(pt[i] + ye)
            ws.append(ext[i, 1: c[i] + 1])
            if self.protocol is None:
                pv, pw = np.array([pt[i]]), np.array([1.0])
            else:
                pv, pw = np.arange(pt[i] + 1), prot
            rows.append(np.full(pv.size, i))
            yEs.append(np.zeros(pv.size, dtype=np.int64))
            yIs.append(pv)
            ws.append(ext[i, 0] * pw)
        rows, yEs, yIs, ws = (np.concatenate(a) for a in (rows, yEs, yIs, ws))
        room = yIs < u
        alive = np.zeros((m, u + 1))
        care_fill = np.zeros(m)
        np.add.at(alive[:, 0], rows[~room], ws[~room])
        censored = np.bincount(rows[~room], weights=ws[~room], minlength=m)
        if np.any(room):
            r, ye, yi, w = rows[room], yEs[room], yIs[room], ws[room]
            ecov = cov.iloc[r].reset_index(drop=True)
            q = self.care_law(ecov, ye, yi).pmf_table(u)
            s = np.arange(u + 1)
            left = (u - yi)[:, None] - s[None, :]
            ok = left >= 0
            flat = (r[:, None] * (u + 1) + np.where(ok, left, 0))[ok]
            vals = (w[:, None] * q)[ok]
            alive += np.bincount(flat, weights=vals, minlength=m * (u + 1)).reshape(m, u + 1)
            full = q[np.arange(r.size), u - yi] * w
            care_fill = np.bincount(r, weights=full, minlength=m)
        total = (1 - pi_d)[:, None] * alive
        total[:, 0] += pi_d
        return {"total": total, "death": pi_d, "censored": (1 - pi_d) * censored,
                "care_fill": (1 - pi_d) * care_fill, "zero": total[:, 0]}

    def sample_dah(self, covariates, rng):
        """DAH draws by inversion of the exact per-row pmf."""
        return sample_from_pmf(self.dah_pmf(covariates), rng)


def sample_from_pmf(pmf, rng, size=None):
    """Inversion sampling from rows of ``pmf`` (or one pmf vector)."""
    pmf = np.asarray(pmf, dtype=float)
    cum = np.cumsum(pmf, axis=-1)
    cum /= cum[..., -1:]
    if pmf.ndim == 1:
        u = rng.random(size if size is not None else ())
        return np.minimum(np.searchsorted(cum, u, side="right"), pmf.size - 1)
    u = rng.random(pmf.shape[0])
    return np.minimum(np.sum(cum <= u[:, None], axis=1), pmf.shape[1] - 1)


def _prepare(covariates):
    if covariates is None:
        raise ValueError("covariates are required (use an empty-column frame for intercept-only models)")
    if isinstance(covariates, int):
        return pd.DataFrame(index=range(covariates))
    cov = encode_covariates(covariates) if len(covariates.columns) else covariates.copy()
    return cov.reset_index(drop=True)


def _with_stay_columns(cov, yE):
    cov = cov.copy()
    yE = np.asarray(yE)
    cov["yE"] = yE.astype(float)
    cov["yE0"] = (yE == 0).astype(float)
    return cov


def dah_from_components(u, dead, yI, yS):
    """Deterministic DAH: (u - y_I - y_S) for survivors, 0 for deaths."""
    dead, yI, yS = (np.asarray(a, dtype=np.int64) for a in (dead, yI, yS))
    bad = (yI + yS > u) | (yI < 0) | (yS < 0)
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))
        raise DataError(f"y_I + y_S exceeds u={u} (or is negative) at indices {idx[:10].tolist()}", idx.tolist())
    out = np.where(dead == 1, 0, u - yI - yS)
    return out[()] if out.ndim == 0 else out


# --------------------------------------------------------------------------
# likelihood and fitting
# --------------------------------------------------------------------------


def _check_records(records):
    missing = [c for c in ("dead", "yE", "yI", "yS") if c not in records.columns]
    if missing:
        raise DataError(f"component records lack columns {missing}")
    na = records[["dead", "yE", "yI", "yS"]].isna().any(axis=1)
    if na.any():
        idx = np.flatnonzero(na.to_numpy())
        raise DataError(f"missing component data in records {idx[:10].tolist()}", idx.tolist())


def component_log_likelihoods(model, records, covariates):
    """Per-component log-likelihoods; stays and care use survivors only."""
    _check_records(records)
    cov = _prepare(covariates)
    rec = records.reset_index(drop=True)
    dead = rec["dead"].to_numpy(dtype=np.int64)
    out = {"death": model.death_law(cov, for_sampling=False).log_likelihood(dead)}
    alive = dead == 0
    cov_a = cov.loc[alive].reset_index(drop=True)
    yE = rec.loc[alive, "yE"].to_numpy(dtype=np.int64)
    yI = rec.loc[alive, "yI"].to_numpy(dtype=np.int64)
    yS = rec.loc[alive, "yS"].to_numpy(dtype=np.int64)
    out["extended"] = model.extended_law(cov_a, for_sampling=False).log_likelihood(yE)
    zero = yE == 0
    pt = model.ptilde_for(cov_a)
    if model.protocol is None:
        out["protocol"] = 0.0 if np.all(yI[zero] == pt[zero]) else -np.inf
    else:
        out["protocol"] = D.Categorical(model.protocol).log_likelihood(yI[zero])
    room = yI < model.u
    if np.any(room):
        out["care"] = model.care_law(cov_a.loc[room].reset_index(drop=True), yE[room], yI[room],
                                     for_sampling=False).log_likelihood(yS[room])
    else:
        out["care"] = 0.0
    return out


def composite_log_likelihood(model, records, covariates):
    return float(sum(component_log_likelihoods(model, records, covariates).values()))


@dataclass(frozen=True)
class CompositeFit:
    model: CompositeModel
    fits: dict
    flags: tuple = field(default=())


@dataclass
class FitConfig:
    """Structure of each component for :func:`fit_composite`.

    ``*_terms`` map parameter name to predictor terms. When ``stepwise`` is
    set, ``*_candidates`` are searched by GAIC instead.
    """

    u: int = 90
    ptilde: int = 4
    death_family: str = "BI"
    extended_family: str = "ZICPIG"
    care_family: str = "ZABB"
    death_terms: dict = field(default_factory=dict)
    extended_terms: dict = field(default_factory=dict)
    care_terms: dict = field(default_factory=dict)
    stepwise: bool = False
    extended_candidates: list = field(default_factory=list)
    care_candidates: list = field(default_factory=list)
    death_candidates: list = field(default_factory=list)
    k: float = 2.0
    care_orientation: str = "zero"
    definition: str = "dah"


def _spec(family, terms, name):
    spec = ComponentSpec.null(family, name=name)
    for p, t in terms.items():
        spec = spec.with_terms(p, t)
    return spec


def _fit(spec, cov, y, aux, cfg, candidates, rng):
    try:
        if cfg.stepwise and candidates:
            return stepwise_select(spec, cov, y, candidates, k=cfg.k, aux=aux, rng=rng)
        return fit_component(spec, cov, y, k=cfg.k, aux=aux, rng=rng)
    except FitError as e:
        e.component = spec.name
        raise


def fit_composite(records, covariates, config=None, rng=None):
    """Fit every component independently; returns a :class:`CompositeFit`."""
    cfg = config or FitConfig()
    _check_records(records)
    rec = records.reset_index(drop=True)
    cov = _prepare(covariates)
    u, pt_default = cfg.u, cfg.ptilde
    flags = []

    dead = rec["dead"].to_numpy(dtype=np.int64)
    fits = {"death": _fit(_spec(cfg.death_family, cfg.death_terms, "death"), cov, dead, None, cfg,
                          cfg.death_candidates, rng)}

    alive = dead == 0
    cov_a = cov.loc[alive].reset_index(drop=True)
    pt = cov_a["ptilde"].to_numpy(dtype=np.int64) if "ptilde" in cov_a.columns else np.full(len(cov_a), pt_default)
    yE = rec.loc[alive, "yE"].to_numpy(dtype=np.int64)
    yI = rec.loc[alive, "yI"].to_numpy(dtype=np.int64)
    yS = rec.loc[alive, "yS"].to_numpy(dtype=np.int64)
    fits["extended"] = _fit(_spec(cfg.extended_family, cfg.extended_terms, "extended"), cov_a, yE,
                            {"c": u - pt}, cfg, cfg.extended_candidates, rng)

    early = yI[yE == 0]
    if np.all(early == pt[yE == 0]):
        protocol = None
        flags.append("protocol: no discharge before ptilde; point mass at ptilde")
    else:
        counts = np.bincount(early, minlength=pt_default + 1)[: pt_default + 1]
        protocol = tuple(counts / counts.sum())

    room = yI < u
    cov_c = _with_stay_columns(cov_a.loc[room].reset_index(drop=True), yE[room])
    y_c = yS[room]
    care_spec = _spec(cfg.care_family, cfg.care_terms, "care")
    if not np.any(y_c > 0):
        flags.append("care: no post-discharge care observed; care fixed at zero")
        coefs = {p.name: {c: 0.0 for c in p.design(cov_c).columns} for p in care_spec.params}
        if "nu" in coefs:
            coefs["nu"]["(Intercept)"] = 40.0 if cfg.care_orientation == "zero" else -40.0
        coefs["mu"]["(Intercept)"] = -40.0
        care_spec = care_spec.with_coef(coefs)
    else:
        res = _fit(care_spec, cov_c, y_c, {"n": u - yI[room]}, cfg, cfg.care_candidates, rng)
        care_spec = res.spec
        if cfg.care_orientation == "care" and "nu" in [p.name for p in care_spec.params]:
            nu = care_spec.param("nu")
            care_spec = care_spec.with_coef({"nu": {k: -v for k, v in nu.coef.items()}})
        fits["care"] = res

    model = CompositeModel(u=u, ptilde=pt_default, death=fits["death"].spec, extended=fits["extended"].spec,
                           care=care_spec, protocol=protocol, care_orientation=cfg.care_orientation,
                           definition=cfg.definition)
    for name, f in fits.items():
        if f.boundary:
            flags.append(f"{name}: boundary solution in {list(f.table.loc[f.table['boundary'], 'column'])}")
    return CompositeFit(model, fits, tuple(flags))
