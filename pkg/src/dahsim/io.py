"""Data ingestion, scenario configuration, model serialisation and output files.

Trajectories are long-format CSV with one row per (patient, day):
``patient_id, day, location`` and optional per-patient baseline columns
(``sex, treatment, bmi_class, age_group, country, baseline_residence``)
repeated on every row or given in a separate frame.

Component CSVs hold one row per patient with at least ``dead, yI, yS``
plus covariates; the remaining components are derived from ``ptilde``.
"""

import hashlib
import json
import logging
import os
import platform
import tempfile
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
import pandas as pd
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .composite import COMPONENT_COLUMNS, CompositeModel, dah_from_components
from .errors import ConfigError, DataError
from .regression import ComponentSpec

log = logging.getLogger(__name__)

LOCATIONS = ("home", "hospital", "respite_or_nursing", "dead")
BASELINE_COLUMNS = ("sex", "treatment", "bmi_class", "age_group", "bmi", "age", "country", "baseline_residence")
COVARIATE_COLUMNS = ("sex", "treatment", "bmi_class", "age_group", "country", "bmi", "age")


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------


def read_trajectories(path):
    df = pd.read_csv(path)
    missing = {"patient_id", "day", "location"} - set(df.columns)
    if missing:
        raise DataError(f"trajectory file lacks columns {sorted(missing)}")
    return df


def _check_trajectories(traj, u):
    loc = traj["location"].astype(str).str.strip().str.lower()
    bad = ~loc.isin(LOCATIONS)
    if bad.any():
        ids = sorted(set(traj.loc[bad, "patient_id"]))
        raise DataError(f"unknown locations {sorted(set(loc[bad]))[:5]} for patients {ids[:10]}", ids)
    dup = traj.duplicated(["patient_id", "day"], keep=False)
    if dup.any():
        ids = sorted(set(traj.loc[dup, "patient_id"]))
        raise DataError(f"duplicate days for patients {ids[:10]}", ids)
    day = traj["day"].to_numpy()
    if np.any((day < 1) | (day > u)) or np.any(day != np.round(day)):
        ids = sorted(set(traj.loc[(day < 1) | (day > u), "patient_id"]))
        raise DataError(f"days outside 1..{u} for patients {ids[:10]}", ids)
    counts = traj.groupby("patient_id")["day"].count()
    gaps = counts.index[counts != u].tolist()
    if gaps:
        raise DataError(f"incomplete day coverage (gaps) for patients {gaps[:10]}", gaps)
    return loc


def derive_components(trajectories, u=90, ptilde=4, definition="dah", baseline=None):
    """Components of every patient from daily locations.

    ``y_I`` is the run of hospital days starting on day 1; ``y_S`` counts the
    later non-home days. Under ``definition="dah"`` respite/nursing days are
    non-home unless the patient lived in nursing care at baseline; under
    ``"dooh"`` only hospital days count. Patients with ``y_I < ptilde`` are
    marked in ``early`` (protocol-stay observations).

    ``ptilde`` may be an int or a mapping from country to int (per stratum).
    Returns one row per patient: ``patient_id``, the component columns,
    ``censored``, ``early``, ``ptilde`` and baseline covariates.
    """
    if definition not in ("dah", "dooh"):
        raise ConfigError("definition must be 'dah' or 'dooh'")
    traj = trajectories.copy()
    loc = _check_trajectories(traj, u)
    traj["_loc"] = loc
    traj = traj.sort_values(["patient_id", "day"], kind="stable")
    if baseline is None:
        cols = [c for c in BASELINE_COLUMNS if c in traj.columns]
        baseline = traj.groupby("patient_id", sort=True)[cols].first() if cols else None
    elif "patient_id" in baseline.columns:
        baseline = baseline.set_index("patient_id")

    ids, grid = [], []
    for pid, g in traj.groupby("patient_id", sort=True):
        ids.append(pid)
        grid.append(g["_loc"].to_numpy())
    grid = np.array(grid)  # patients x u
    ids = np.array(ids)
    dead_day = grid == "dead"
    first_dead = np.where(dead_day.any(axis=1), dead_day.argmax(axis=1), u)
    after = np.arange(u)[None, :] >= first_dead[:, None]
    resurrected = np.any(after & ~dead_day, axis=1)
    if resurrected.any():
        bad = ids[resurrected].tolist()
        raise DataError(f"alive after death for patients {bad[:10]}", bad)

    nursing_home = np.zeros(ids.size, dtype=bool)
    if baseline is not None and "baseline_residence" in baseline.columns:
        res = baseline.reindex(ids)["baseline_residence"].astype(str).str.strip().str.lower()
        if not res.isin(["home", "nursing"]).all():
            raise DataError("baseline_residence must be 'home' or 'nursing'")
        nursing_home = (res == "nursing").to_numpy()

    hosp = grid == "hospital"
    not_hosp = ~hosp
    yI = np.where(not_hosp.any(axis=1), not_hosp.argmax(axis=1), u)
    care = grid == "respite_or_nursing"
    if definition == "dah":
        nonhome = hosp | (care & ~nursing_home[:, None])
    else:
        nonhome = hosp
    later = np.arange(u)[None, :] >= yI[:, None]
    dead = dead_day.any(axis=1).astype(np.int64)
    yS = np.sum(nonhome & later & ~dead_day, axis=1)

    pt = _ptilde_per_patient(ptilde, baseline, ids)
    out = components_from_stays(dead, yI, yS, u, pt)
    out.insert(0, "patient_id", ids)
    if baseline is not None:
        base = baseline.reindex(ids).reset_index(drop=True)
        for c in base.columns:
            out[c] = base[c].to_numpy()
    return out


def _ptilde_per_patient(ptilde, baseline, ids):
    if isinstance(ptilde, dict):
        if baseline is None or "country" not in baseline.columns:
            raise ConfigError("per-stratum ptilde needs a country column")
        country = baseline.reindex(ids)["country"].astype(str)
        unknown = sorted(set(country) - set(ptilde))
        if unknown:
            raise ConfigError(f"no ptilde given for strata {unknown}")
        return country.map(ptilde).to_numpy(dtype=np.int64)
    return np.full(len(ids), int(ptilde), dtype=np.int64)


def components_from_stays(dead, yI, yS, u, ptilde):
    """Fill in P, E, y_E, C, y_C and dah from (dead, y_I, y_S)."""
    dead, yI, yS = (np.asarray(a, dtype=np.int64) for a in (dead, yI, yS))
    pt = np.broadcast_to(np.asarray(ptilde, dtype=np.int64), yI.shape)
    dah = dah_from_components(u, dead, yI, yS)
    E = (yI > pt).astype(np.int64)
    yE = np.where(E == 1, np.minimum(yI, u) - pt, 0)
    P = np.where(E == 1, pt, yI)
    C = (yS > 0).astype(np.int64)
    out = pd.DataFrame({"dead": dead, "P": P, "E": E, "yE": yE, "yI": yI, "C": C, "yC": yS, "yS": yS,
                        "dah": dah})
    out["censored"] = (yE >= u - pt).astype(np.int64) * E
    out["early"] = (yI < pt).astype(np.int64)
    out["ptilde"] = pt
    return out


def read_components(path, u=90, ptilde=4):
    """Component-level CSV; ``dah`` is checked if present."""
    df = pd.read_csv(path)
    missing = {"dead", "yI", "yS"} - set(df.columns)
    if missing:
        raise DataError(f"component file lacks columns {sorted(missing)}")
    ids = df["patient_id"].to_numpy() if "patient_id" in df.columns else np.arange(len(df))
    if df[["dead", "yI", "yS"]].isna().any().any():
        bad = ids[df[["dead", "yI", "yS"]].isna().any(axis=1).to_numpy()].tolist()
        raise DataError(f"missing component values for patients {bad[:10]}", bad)
    pt = _ptilde_per_patient(ptilde, df.set_index(pd.Index(ids)), ids) if isinstance(ptilde, dict) else ptilde
    out = components_from_stays(df["dead"], df["yI"], df["yS"], u, pt)
    if "dah" in df.columns:
        bad = df["dah"].to_numpy() != out["dah"].to_numpy()
        if bad.any():
            raise DataError(f"dah inconsistent with dead/yI/yS for patients {ids[bad][:10].tolist()}",
                            ids[bad].tolist())
    out.insert(0, "patient_id", ids)
    for c in df.columns:
        if c not in out.columns and c not in COMPONENT_COLUMNS:
            out[c] = df[c].to_numpy()
    return out


def covariate_frame(df):
    """Raw covariate columns of a component table (may be empty)."""
    cols = [c for c in COVARIATE_COLUMNS if c in df.columns]
    if "ptilde" in df.columns and df["ptilde"].nunique() > 1:
        cols.append("ptilde")
    return df[cols].reset_index(drop=True)


def components_to_trajectories(comp, u, rng):
    """Daily locations consistent with simulated components.

    Survivors: hospital for ``y_I`` days, home, then subsequent care as one
    block ending on day ``u``. When care follows the initial stay with no
    home day between, the block is written as respite/nursing so that the
    initial stay stays recoverable. Deaths: hospital until a uniform death
    day, dead thereafter.
    """
    rows = []
    for i, r in comp.reset_index(drop=True).iterrows():
        days = np.full(u, "home", dtype=object)
        if r["dead"]:
            d = int(rng.integers(1, u + 1))
            days[: d - 1] = "hospital"
            days[d - 1:] = "dead"
        else:
            yI, yS = int(r["yI"]), int(r["yS"])
            days[:yI] = "hospital"
            if yS:
                days[u - yS:] = "hospital" if yI + yS < u else "respite_or_nursing"
        pid = r["patient_id"] if "patient_id" in comp.columns else i
        rows.append(pd.DataFrame({"patient_id": pid, "day": np.arange(1, u + 1), "location": days}))
    return pd.concat(rows, ignore_index=True) if rows else pd.DataFrame(columns=["patient_id", "day", "location"])


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ComponentConfig(_Strict):
    family: str
    terms: Dict[str, List[str]] = Field(default_factory=dict)
    # coefficient values per parameter, or the string "fit"
    coef: Union[Literal["fit"], Dict[str, Dict[str, float]]] = "fit"
    candidates: List[str] = Field(default_factory=list)

    @field_validator("family")
    @classmethod
    def _known(cls, v):
        from .families import FAMILIES

        if v not in FAMILIES:
            raise ValueError(f"unknown family {v!r}")
        return v


class CalibrationConfig(_Strict):
    target: float = 2.0
    grid_lo: float = -3.0
    grid_hi: float = 0.0
    grid_points: int = 301
    sim_n: int = 200_000
    component: Literal["death", "extended", "care"] = "extended"
    param: str = "mu"


class PowerConfig(_Strict):
    n_grid: Optional[List[int]] = None
    reps: int = Field(10_000, ge=100)
    alpha: float = Field(0.05, gt=0, lt=1)
    effect: Optional[float] = None
    target_power: float = 0.9


class DiagnoseConfig(_Strict):
    B: int = 5000
    grid: int = 250
    shifts: List[int] = Field(default_factory=lambda: [0, 4])


class ScenarioConfig(_Strict):
    u: int = Field(90, gt=0)
    ptilde: Union[int, Dict[str, int]] = 4
    dah_definition: Literal["dah", "dooh"] = "dah"
    care_orientation: Literal["zero", "care"] = "zero"
    scenario: Literal["canonical", "custom"] = "canonical"
    components: Dict[Literal["death", "extended", "care"], ComponentConfig] = Field(default_factory=dict)
    stepwise: bool = False
    gaic_k: float = Field(2.0, ge=0)
    n: int = Field(200, gt=0)
    population_n: int = Field(4000, gt=0)
    calibration: CalibrationConfig = Field(default_factory=CalibrationConfig)
    power: PowerConfig = Field(default_factory=PowerConfig)
    diagnose: DiagnoseConfig = Field(default_factory=DiagnoseConfig)
    seed: int = 0
    threads: int = Field(1, ge=1)
    out_dir: str = "out"

    @model_validator(mode="after")
    def _check(self):
        pts = self.ptilde.values() if isinstance(self.ptilde, dict) else [self.ptilde]
        if any(not 0 <= p <= self.u for p in pts):
            raise ValueError("ptilde must lie in [0, u]")
        if self.scenario == "custom":
            missing = {"death", "extended", "care"} - set(self.components)
            if missing:
                raise ValueError(f"custom scenario needs components {sorted(missing)}")
        return self

    @property
    def ptilde_default(self):
        return min(self.ptilde.values()) if isinstance(self.ptilde, dict) else self.ptilde


def load_config(path=None, overrides=None):
    """Validate a YAML or JSON config; ``overrides`` are applied on top."""
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping at the top level")
    data = _merge(data, overrides or {})
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config: {e}") from e


def _merge(base, extra):
    out = dict(base)
    for k, v in extra.items():
        if v is None:
            continue
        if isinstance(v, dict):
            merged = _merge(out.get(k) if isinstance(out.get(k), dict) else {}, v)
            if merged:
                out[k] = merged
        else:
            out[k] = v
    return out


def config_json(cfg):
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg.model_dump(mode="json"), sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------
# models to and from plain dicts
# --------------------------------------------------------------------------


def spec_to_dict(spec):
    return {"family": spec.family.name, "name": spec.name,
            "terms": {p.name: list(p.terms) for p in spec.params},
            "coef": {p.name: dict(p.coef) for p in spec.params if p.coef is not None}}


def spec_from_dict(d, name=""):
    spec = ComponentSpec.null(d["family"], name=d.get("name", name))
    for p, t in d.get("terms", {}).items():
        spec = spec.with_terms(p, t)
    coef = d.get("coef")
    if coef and coef != "fit":
        spec = spec.with_coef(coef)
    return spec


def model_to_dict(model):
    return {"u": model.u, "ptilde": model.ptilde, "protocol": model.protocol,
            "care_orientation": model.care_orientation, "definition": model.definition,
            "death": spec_to_dict(model.death), "extended": spec_to_dict(model.extended),
            "care": spec_to_dict(model.care)}


def model_from_dict(d):
    return CompositeModel(u=d["u"], ptilde=d["ptilde"], death=spec_from_dict(d["death"], "death"),
                          extended=spec_from_dict(d["extended"], "extended"),
                          care=spec_from_dict(d["care"], "care"), protocol=d.get("protocol"),
                          care_orientation=d.get("care_orientation", "zero"),
                          definition=d.get("definition", "dah"))


# --------------------------------------------------------------------------
# output
# --------------------------------------------------------------------------


def atomic_write(path, data):
    """Write text or bytes via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(df, path):
    return atomic_write(path, df.to_csv(index=False, float_format="%.10g", lineterminator="\n"))


def write_json(obj, path):
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def _versions():
    import scipy

    from . import __version__

    return {"dahsim": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__}


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command, cfg, outputs, inputs=(), extra=None):
    """Record config, seed, versions and output hashes for a run."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "config_sha256": config_hash(cfg),
        "seed": cfg.seed,
        "versions": _versions(),
        "inputs": {str(p): file_sha256(p) for p in inputs},
        "outputs": {Path(p).name: file_sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    return write_json(manifest, out_dir / f"manifest_{command}.json")
