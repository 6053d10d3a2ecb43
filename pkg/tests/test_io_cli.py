import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest
import yaml

from dahsim.canonical import canonical_covariates, canonical_model
from dahsim.cli import main
from dahsim.errors import ConfigError, DataError
from dahsim.io import (components_to_trajectories, config_hash, derive_components, file_sha256, load_config,
                       model_from_dict, model_to_dict, read_components)


def _traj(days_by_patient, u=90, **baseline):
    rows = []
    for pid, days in days_by_patient.items():
        assert len(days) == u
        rows.append(pd.DataFrame({"patient_id": pid, "day": np.arange(1, u + 1), "location": days, **baseline}))
    return pd.concat(rows, ignore_index=True)


def _days(*blocks):
    return [loc for loc, k in blocks for _ in range(k)]


# --------------------------------------------------------------------------
# derive_components
# --------------------------------------------------------------------------


def test_short_stay_then_home():
    out = derive_components(_traj({1: _days(("hospital", 4), ("home", 86))}))
    r = out.iloc[0]
    assert (r.yI, r.yS, r.dah, r.dead) == (4, 0, 86, 0)
    assert not r.early


def test_death_gives_zero():
    out = derive_components(_traj({7: _days(("hospital", 6), ("home", 3), ("dead", 81))}))
    assert out.iloc[0].dah == 0 and out.iloc[0].dead == 1


def test_subsequent_care_and_early_discharge():
    days = _days(("hospital", 2), ("home", 20), ("hospital", 5), ("respite_or_nursing", 3), ("home", 60))
    out = derive_components(_traj({1: days}))
    r = out.iloc[0]
    assert (r.yI, r.yS, r.dah) == (2, 8, 80)
    assert r.early
    dooh = derive_components(_traj({1: days}), definition="dooh").iloc[0]
    assert (dooh.yS, dooh.dah) == (5, 83)


def test_nursing_resident_counts_nursing_as_home():
    days = _days(("hospital", 5), ("respite_or_nursing", 85))
    resident = derive_components(_traj({1: days}, baseline_residence="nursing")).iloc[0]
    assert (resident.yS, resident.dah) == (0, 85)
    other = derive_components(_traj({1: days}, baseline_residence="home")).iloc[0]
    assert (other.yS, other.dah) == (85, 0)


def test_never_discharged_is_censored():
    r = derive_components(_traj({1: _days(("hospital", 90))})).iloc[0]
    assert r.yI == 90 and r.dah == 0 and r.censored


def test_trajectory_errors():
    ok = _traj({1: _days(("hospital", 4), ("home", 86)), 2: _days(("hospital", 3), ("home", 87))})
    with pytest.raises(DataError) as e:
        derive_components(ok[~((ok.patient_id == 2) & (ok.day == 40))])
    assert e.value.ids == (2,)
    with pytest.raises(DataError, match="duplicate"):
        derive_components(pd.concat([ok, ok.iloc[[5]]]))
    with pytest.raises(DataError, match="after death") as e:
        derive_components(_traj({3: _days(("hospital", 4), ("dead", 10), ("home", 76))}))
    assert e.value.ids == (3,)
    with pytest.raises(DataError, match="unknown locations"):
        derive_components(ok.assign(location="moon"))
    with pytest.raises(ConfigError):
        derive_components(ok, definition="both")


def test_trajectory_round_trip():
    rng = np.random.default_rng(0)
    cov = canonical_covariates(300, rng)
    comp = canonical_model().simulate(cov, rng)
    comp.insert(0, "patient_id", np.arange(300))
    back = derive_components(components_to_trajectories(comp, 90, rng))
    for c in ("dead", "dah"):
        np.testing.assert_array_equal(back[c].to_numpy(), comp[c].to_numpy())
    alive = comp.dead.to_numpy() == 0
    np.testing.assert_array_equal(back.yI.to_numpy()[alive], comp.yI.to_numpy()[alive])
    np.testing.assert_array_equal(back.yS.to_numpy()[alive], comp.yS.to_numpy()[alive])


def test_read_components_checks_dah(tmp_path):
    p = tmp_path / "c.csv"
    pd.DataFrame({"dead": [0, 1], "yI": [4, 3], "yS": [0, 0], "dah": [86, 5]}).to_csv(p, index=False)
    with pytest.raises(DataError, match="inconsistent"):
        read_components(p)
    pd.DataFrame({"dead": [0, 1], "yI": [4, 3], "yS": [0, 0]}).to_csv(p, index=False)
    assert read_components(p).dah.tolist() == [86, 0]


def test_model_serialisation_round_trip():
    model = canonical_model()
    back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
    cov = canonical_covariates(50, np.random.default_rng(1))
    np.testing.assert_allclose(back.dah_pmf(cov), model.dah_pmf(cov), atol=1e-14)


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def test_config_defaults_and_overrides(tmp_path):
    cfg = load_config()
    assert (cfg.u, cfg.ptilde, cfg.seed, cfg.power.reps) == (90, 4, 0, 10_000)
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"seed": 5, "power": {"alpha": 0.1}}))
    cfg = load_config(p, {"seed": 9, "power": {"reps": None}})
    assert cfg.seed == 9 and cfg.power.alpha == 0.1 and cfg.power.reps == 10_000
    assert config_hash(cfg) == config_hash(load_config(p, {"seed": 9}))
    assert config_hash(cfg) != config_hash(load_config(p))


@pytest.mark.parametrize("bad", [
    {"sedd": 1},
    {"power": {"reps": 10}},
    {"ptilde": 95},
    {"scenario": "custom"},
    {"components": {"death": {"family": "WEIBULL"}}},
    {"calibration": {"target": 2, "extra": 1}},
])
def test_config_strictness(tmp_path, bad):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(bad))
    with pytest.raises(ConfigError):
        load_config(p)


def test_unreadable_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------


def test_simulate_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--n", "200", "--seed", "11", "--out-dir", str(a), "--trajectories"]) == 0
    assert main(["simulate", "--n", "200", "--seed", "11", "--out-dir", str(b), "--trajectories"]) == 0
    for f in ("components.csv", "trajectories.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    comp = pd.read_csv(a / "components.csv")
    assert len(comp) == 200 and comp.dah.max() <= 86
    manifest = json.loads((a / "manifest_simulate.json").read_text())
    assert manifest["seed"] == 11
    assert manifest["outputs"]["components.csv"] == file_sha256(a / "components.csv")
    assert "numpy" in manifest["versions"]
    # the manifest's config alone regenerates the output
    cfg_file = tmp_path / "replay.json"
    cfg_file.write_text(json.dumps({**manifest["config"], "out_dir": str(tmp_path / "c")}))
    assert main(["simulate", "--config", str(cfg_file)]) == 0
    assert file_sha256(tmp_path / "c" / "components.csv") == manifest["outputs"]["components.csv"]


def test_fit_and_diagnose_from_trajectories(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--n", "300", "--seed", "3", "--out-dir", str(sim), "--trajectories"]) == 0
    fit = tmp_path / "fit"
    assert main(["fit", "--data", str(sim / "trajectories.csv"), "--out-dir", str(fit)]) == 0
    table = pd.read_csv(fit / "fit_table.csv")
    assert {"death", "extended", "care"} <= set(table.component)
    assert {"estimate", "se", "p_value"} <= set(table.columns)
    assert main(["simulate", "--n", "50", "--model-file", str(fit / "fitted_model.json"),
                 "--out-dir", str(tmp_path / "re")]) == 0
    cfg = tmp_path / "d.yaml"
    cfg.write_text(yaml.safe_dump({"diagnose": {"B": 200}}))
    diag = tmp_path / "diag"
    assert main(["diagnose", "--config", str(cfg), "--data", str(sim / "components.csv"),
                 "--out-dir", str(diag)]) == 0
    assert {"worm_extended.csv", "qq_dnc.csv", "discrepancy.csv", "manifest_diagnose.json"} <= \
        {p.name for p in diag.iterdir()}


def test_exit_codes(tmp_path, capsys):
    bad_cfg = tmp_path / "bad.yaml"
    bad_cfg.write_text(yaml.safe_dump({"unknown_key": 1}))
    out = tmp_path / "o"
    assert main(["simulate", "--config", str(bad_cfg), "--out-dir", str(out)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 2 and err["error"] == "ConfigError"
    # a rejected config is never partially executed
    assert not (out / "components.csv").exists()

    data = tmp_path / "bad.csv"
    pd.DataFrame({"patient_id": [1, 1], "day": [1, 1], "location": ["home", "home"]}).to_csv(data, index=False)
    assert main(["fit", "--data", str(data), "--out-dir", str(out)]) == 3
    assert json.loads((out / "error.json").read_text())["exit_code"] == 3
    assert main(["fit", "--data", str(tmp_path / "none.csv"), "--out-dir", str(out)]) == 3

    cal = tmp_path / "cal.yaml"
    cal.write_text(yaml.safe_dump({"calibration": {"grid_lo": -0.05, "grid_hi": 0.0, "grid_points": 3,
                                                   "sim_n": 20000}, "population_n": 200}))
    assert main(["calibrate", "--config", str(cal), "--model", "dnc", "--out-dir", str(out)]) == 4
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "CalibrationError" and err["ladder"] == [0.0]


def test_power_command(tmp_path):
    cfg = tmp_path / "p.yaml"
    cfg.write_text(yaml.safe_dump({"power": {"n_grid": [100, 300], "effect": -0.76}, "population_n": 500}))
    out = tmp_path / "p"
    assert main(["power", "--config", str(cfg), "--reps", "200", "--out-dir", str(out)]) == 0
    table = pd.read_csv(out / "power.csv", keep_default_na=False)  # "null" is a scenario name
    assert set(table.scenario) == {"null", "alternative"}
    assert list(table.columns) == ["model", "scenario", "n", "rate", "mc_se", "reps", "alpha", "seed"]
    assert "dnc" in json.loads((out / "min_sample_size.json").read_text())


def test_console_script_help():
    res = subprocess.run([sys.executable, "-c", "import sys; from dahsim.cli import main; sys.exit(main())",
                          "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("fit", "simulate", "diagnose", "compare", "calibrate", "power"):
        assert cmd in res.stdout
