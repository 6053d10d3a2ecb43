"""Covariate encoding and design matrices.

Categorical covariates use reference-cell coding. Reference levels are
fixed here and are not claimed to match any external analysis:

* sex: ``male`` (0) vs ``female`` (1)
* treatment: ``control`` (0) vs ``hfnt`` (1)
* bmi: at or below the median (0) vs above (1)
* age: ``<=50`` (0) vs ``>50`` (1)
* country: ``UK`` is the reference, with dummies for Australia and New Zealand

Terms are column groups: ``"country"`` expands to both dummies, ``"a:b"`` is
the elementwise product of the columns of ``a`` and ``b``.
"""

import itertools
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DataError

log = logging.getLogger(__name__)

COUNTRIES = ("UK", "Australia", "New Zealand")
TERM_COLUMNS = {"country": ("country_Australia", "country_New Zealand")}

_LEVELS = {
    "sex": {"male": 0, "m": 0, "female": 1, "f": 1},
    "treatment": {"control": 0, "usual": 0, "standard": 0, "hfnt": 1, "treated": 1, "treatment": 1},
    "bmi": {"low": 0, "<=median": 0, "high": 1, ">median": 1},
    "age": {"<=50": 0, "young": 0, ">50": 1, "old": 1},
}
_RAW_NAMES = {"sex": "sex", "treatment": "treatment", "bmi": "bmi_class", "age": "age_group"}


def _binary(series, levels, name):
    if pd.api.types.is_numeric_dtype(series) or pd.api.types.is_bool_dtype(series):
        vals = series.astype(float)
    else:
        vals = series.astype(str).str.strip().str.lower().map(levels)
    bad = ~vals.isin([0.0, 1.0])
    if bad.any():
        raise DataError(f"column {name!r} has unrecognised values: {sorted(set(series[bad].astype(str)))[:5]}")
    return vals.astype(float).to_numpy()


def encode_covariates(df):
    """Encode raw covariates into the numeric columns used by model terms.

    Accepts either raw names (``bmi_class``, ``age_group``, ``country``) or
    already-encoded columns; unknown extra columns are passed through.
    """
    out = pd.DataFrame(index=df.index)
    for col, raw in _RAW_NAMES.items():
        src = raw if raw in df.columns else col if col in df.columns else None
        if src is not None:
            out[col] = _binary(df[src], _LEVELS[col], src)
    if "country" in df.columns:
        c = df["country"].astype(str).str.strip()
        unknown = ~c.isin(COUNTRIES)
        if unknown.any():
            raise DataError(f"unknown country values: {sorted(set(c[unknown]))}")
        for name in COUNTRIES[1:]:
            out[f"country_{name}"] = (c == name).astype(float).to_numpy()
    for col in df.columns:
        if col not in out.columns and col not in _RAW_NAMES.values() and col != "country":
            out[col] = df[col].to_numpy()
    return out


def term_columns(term):
    parts = term.split(":")
    groups = [TERM_COLUMNS.get(p, (p,)) for p in parts]
    return [":".join(combo) for combo in itertools.product(*groups)]


def _column_values(df, col):
    vals = np.ones(len(df))
    for part in col.split(":"):
        if part not in df.columns:
            raise DataError(f"covariate column {part!r} is missing")
        vals = vals * np.asarray(df[part], dtype=float)
    return vals


def main_effects(term):
    return tuple(term.split(":"))


@dataclass(frozen=True)
class DesignMatrix:
    X: np.ndarray
    columns: tuple
    terms: tuple
    rank: int = field(default=-1)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def full_rank(self):
        return self.rank == self.p


def build_design(df, terms, intercept=True, check_rank=True):
    """Intercept plus the columns of each term, in term order.

    With ``check_rank`` a rank-deficient design triggers a warning; the rank
    is -1 when the check is skipped.
    """
    n = len(df)
    cols, names = [], []
    if intercept:
        cols.append(np.ones(n))
        names.append("(Intercept)")
    for term in terms:
        for col in term_columns(term):
            cols.append(_column_values(df, col))
            names.append(col)
    X = np.column_stack(cols) if cols else np.empty((n, 0))
    if not check_rank:
        return DesignMatrix(X, tuple(names), tuple(terms), -1)
    rank = int(np.linalg.matrix_rank(X)) if X.size else 0
    if rank < X.shape[1]:
        warnings.warn(f"design with columns {names} is rank deficient ({rank} < {X.shape[1]})", stacklevel=2)
    return DesignMatrix(X, tuple(names), tuple(terms), rank)


def linear_predictor(design, beta, offset=None):
    X = design.X if isinstance(design, DesignMatrix) else np.asarray(design, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape[1] != beta.shape[0]:
        raise ValueError(f"design has {X.shape[1]} columns but {beta.shape[0]} coefficients were given")
    eta = X @ beta
    return eta if offset is None else eta + offset
