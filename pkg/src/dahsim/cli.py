"""Command-line entry point: ``dahsim {fit,simulate,diagnose,compare,calibrate,power}``.

Exit codes: 0 ok, 2 config error, 3 data error, 4 numerical failure. On
failure a JSON error object is printed to stderr and written to
``<out-dir>/error.json``.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import canonical as canon
from .competitors import KINDS, fit_all, fit_competitor, with_location_effect
from .composite import CompositeModel, FitConfig, fit_composite
from .diagnostics import (discrepancy_table, integrated_discrepancy, randomized_quantile_residuals,
                          resampling_qq_check, worm_plot_data)
from .errors import (CalibrationError, ConfigError, DataError, FitError, ParameterError, SupportError,
                     TargetUnattainedError)
from .io import (components_to_trajectories, covariate_frame, derive_components, load_config, model_from_dict,
                 model_to_dict, read_components, read_trajectories, spec_from_dict, write_csv, write_json,
                 write_manifest)
from .regression import ComponentSpec
from .rng import stream
from .trial import ScenarioPair, calibrate_effect, min_sample_size, power_curve

log = logging.getLogger("dahsim")

MODELS = ("dnc",) + KINDS
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


# --------------------------------------------------------------------------
# shared helpers
# --------------------------------------------------------------------------


def _overrides(args):
    o = {"seed": args.seed, "out_dir": args.out_dir, "threads": args.threads, "gaic_k": args.gaic_k,
         "dah_definition": args.dah_definition, "ptilde": args.ptilde, "n": getattr(args, "n", None)}
    o["power"] = {"reps": args.reps, "alpha": args.alpha}
    return o


def _data(args, cfg):
    if not args.data:
        raise ConfigError("--data is required for this command")
    path = Path(args.data)
    if not path.exists():
        raise DataError(f"data file {path} not found")
    head = pd.read_csv(path, nrows=1)
    if "location" in head.columns:
        return derive_components(read_trajectories(path), cfg.u, cfg.ptilde, cfg.dah_definition)
    return read_components(path, cfg.u, cfg.ptilde)


def _terms(cfg, name, default):
    c = cfg.components.get(name)
    return {k: tuple(v) for k, v in c.terms.items()} if c is not None else default


def _fit_config(cfg):
    canonical = cfg.scenario == "canonical"
    cands = {n: cfg.components[n].candidates if n in cfg.components else [] for n in ("death", "extended", "care")}
    fams = {n: cfg.components[n].family if n in cfg.components else d
            for n, d in (("death", "BI"), ("extended", "ZICPIG"), ("care", "ZABB"))}
    return FitConfig(
        u=cfg.u, ptilde=cfg.ptilde_default, death_family=fams["death"], extended_family=fams["extended"],
        care_family=fams["care"], death_terms=_terms(cfg, "death", {}),
        extended_terms=_terms(cfg, "extended", dict(canon.EXTENDED_TERMS) if canonical else {}),
        care_terms=_terms(cfg, "care", dict(canon.CARE_TERMS) if canonical else {}),
        stepwise=cfg.stepwise, death_candidates=cands["death"], extended_candidates=cands["extended"],
        care_candidates=cands["care"], k=cfg.gaic_k, care_orientation=cfg.care_orientation,
        definition=cfg.dah_definition)


def _config_model(cfg):
    """Generative model named by the config (canonical or fully specified)."""
    if cfg.scenario == "canonical":
        return canon.canonical_model(cfg.u, cfg.ptilde_default, cfg.care_orientation)
    comps = {}
    for name in ("death", "extended", "care"):
        c = cfg.components[name]
        if c.coef == "fit":
            raise ConfigError(f"component {name!r} is marked for fitting; give coefficients to simulate")
        comps[name] = spec_from_dict({"family": c.family, "terms": c.terms, "coef": c.coef}, name)
    return CompositeModel(u=cfg.u, ptilde=cfg.ptilde_default, care_orientation=cfg.care_orientation,
                          definition=cfg.dah_definition, **comps)


def _dnc_fit(comp, cfg, rng):
    cov = covariate_frame(comp)
    return fit_composite(comp, cov, _fit_config(cfg), rng), cov


def _fit_table(fit):
    rows = [f.table.assign(component=name) for name, f in fit.fits.items()]
    t = pd.concat(rows, ignore_index=True)
    return t[["component", "parameter", "link", "column", "estimate", "se", "z", "p_value", "boundary"]]


def _out(cfg):
    d = Path(cfg.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_fit(args, cfg):
    comp = _data(args, cfg)
    fit, _ = _dnc_fit(comp, cfg, stream(cfg.seed, "fit-jitter"))
    out = _out(cfg)
    table = write_csv(_fit_table(fit), out / "fit_table.csv")
    summary = {name: {"loglik": f.loglik, "df": f.df, "gaic": f.gaic, "converged": f.converged,
                      "iterations": f.iterations, "grad_norm": f.grad_norm, "hessian_pd": f.hessian_pd}
               for name, f in fit.fits.items()}
    model = write_json({"model": model_to_dict(fit.model), "flags": list(fit.flags), "fits": summary},
                       out / "fitted_model.json")
    write_manifest(out, "fit", cfg, [table, model], [args.data])
    print(_fit_table(fit).to_string(index=False))
    return EXIT_OK


def cmd_simulate(args, cfg):
    if args.model_file:
        model = model_from_dict(json.loads(Path(args.model_file).read_text())["model"])
    else:
        model = _config_model(cfg)
    rng = stream(cfg.seed, "simulate")
    cov = canon.canonical_covariates(cfg.n, rng)
    comp = model.simulate(cov, rng)
    comp.insert(0, "patient_id", np.arange(1, cfg.n + 1))
    comp = pd.concat([comp, cov], axis=1)
    out = _out(cfg)
    files = [write_csv(comp, out / "components.csv")]
    if args.trajectories:
        traj = components_to_trajectories(comp, model.u, rng)
        base = comp[["patient_id"] + list(cov.columns)].assign(baseline_residence="home")
        files.append(write_csv(traj.merge(base, on="patient_id", how="left"), out / "trajectories.csv"))
    write_manifest(out, "simulate", cfg, files)
    print(f"simulated {cfg.n} patients; P(dah=0)={np.mean(comp['dah'] == 0):.3f}, max dah={comp['dah'].max()}")
    return EXIT_OK


def _competitor_for(kind, shift, comp, cov, cfg, rng):
    return fit_competitor(kind, comp["dah"].to_numpy(), cov, u=cfg.u, shift=shift, k=cfg.gaic_k, rng=rng)[0]


def cmd_diagnose(args, cfg):
    comp = _data(args, cfg)
    out = _out(cfg)
    model_name = args.model or "dnc"
    files = []
    if model_name == "dnc":
        fit, cov = _dnc_fit(comp, cfg, stream(cfg.seed, "fit-jitter"))
        model = fit.model
        rng_r = stream(cfg.seed, "residual-uniforms")
        from .composite import _prepare

        enc = _prepare(cov)
        alive = comp["dead"].to_numpy() == 0
        ca = enc.loc[alive].reset_index(drop=True)
        yE = comp.loc[alive, "yE"].to_numpy()
        yI = comp.loc[alive, "yI"].to_numpy()
        res = {"extended": randomized_quantile_residuals(model.extended_law(ca), yE, rng_r, "extended")}
        room = yI < cfg.u
        if room.any() and "care" in fit.fits:
            law = model.care_law(ca.loc[room].reset_index(drop=True), yE[room], yI[room])
            res["care"] = randomized_quantile_residuals(law, comp.loc[alive, "yS"].to_numpy()[room], rng_r, "care")
        for name, r in res.items():
            if len(r) >= 10:
                files.append(write_csv(worm_plot_data(r), out / f"worm_{name}.csv"))
    else:
        model = _competitor_for(model_name, cfg.ptilde_default, comp, None, cfg, stream(cfg.seed, "fit-jitter"))
        cov = None
    qq = resampling_qq_check(model, comp["dah"].to_numpy(), cov if model_name == "dnc" else len(comp),
                             B=cfg.diagnose.B, grid=cfg.diagnose.grid, rng=stream(cfg.seed, "bootstrap"))
    files.append(write_csv(qq.to_frame(), out / f"qq_{model_name}.csv"))
    area = integrated_discrepancy(qq)
    disc = pd.DataFrame({"model": [model_name], "shift": [cfg.ptilde_default if model_name != "dnc" else 0],
                         "area": [area], "coverage": [qq.coverage()], "coverage_half_day": [qq.coverage(0.5)]})
    files.append(write_csv(disc, out / "discrepancy.csv"))
    write_manifest(out, "diagnose", cfg, files, [args.data])
    print(disc.to_string(index=False))
    return EXIT_OK


def cmd_compare(args, cfg):
    comp = _data(args, cfg)
    out = _out(cfg)
    fit, cov = _dnc_fit(comp, cfg, stream(cfg.seed, "fit-jitter"))
    dah = comp["dah"].to_numpy()
    models = {("dnc", 0): fit.model}
    models.update(fit_all(dah, None, u=cfg.u, shifts=tuple(cfg.diagnose.shifts), rng=stream(cfg.seed, "fit-jitter"),
                          k=cfg.gaic_k))
    results, files = {}, []
    for i, (key, m) in enumerate(models.items()):
        x = cov if key[0] == "dnc" else len(comp)
        results[key] = resampling_qq_check(m, dah, x, B=cfg.diagnose.B, grid=cfg.diagnose.grid,
                                           rng=stream(cfg.seed, "bootstrap", i))
        files.append(write_csv(results[key].to_frame(), out / f"qq_{key[0]}_shift{key[1]}.csv"))
    table = discrepancy_table(results)
    files.append(write_csv(table, out / "discrepancy.csv"))
    write_manifest(out, "compare", cfg, files, [args.data])
    print(table.to_string(index=False))
    return EXIT_OK


def _scenario_maker(kind, cfg):
    """(make_model(beta), population, label) for the trial-design scenario of ``kind``."""
    cal = cfg.calibration
    if kind == "dnc":
        pop = canon.scenario_population(cfg.population_n, cfg.seed)
        return (lambda b: canon.scenario_model(b, cal.component, cal.param, u=cfg.u, ptilde=cfg.ptilde_default)), pop
    shift = cfg.ptilde_default
    gen = canon.competitor_generators(rng=stream(cfg.seed, "fit-jitter"), shifts=(shift,), kinds=(kind,))[(kind, shift)]
    return (lambda b: with_location_effect(gen, b)), None


def _grid(cfg, kind):
    cal = cfg.calibration
    lo, hi = (cal.grid_lo, cal.grid_hi) if kind == "dnc" else (-abs(cal.grid_lo) - abs(cal.grid_hi),
                                                                 abs(cal.grid_lo) + abs(cal.grid_hi))
    return np.linspace(lo, hi, cal.grid_points)


def _calibrate(kind, cfg):
    make, pop = _scenario_maker(kind, cfg)
    res = calibrate_effect(make, cfg.calibration.target, _grid(cfg, kind), cfg.calibration.sim_n,
                           stream(cfg.seed, "calibrate"), pop)
    return res, make, pop


def cmd_calibrate(args, cfg):
    out = _out(cfg)
    kinds = [args.model] if args.model else list(MODELS)
    rows, files = [], []
    for kind in kinds:
        res, _, _ = _calibrate(kind, cfg)
        rows.append((kind, res.band[0], res.band[1], res.midpoint, res.target))
        files.append(write_csv(res.ladder.assign(model=kind), out / f"calibration_ladder_{kind}.csv"))
    table = pd.DataFrame(rows, columns=["model", "band_lo", "band_hi", "midpoint", "target"])
    files.append(write_csv(table, out / "calibration.csv"))
    write_manifest(out, "calibrate", cfg, files)
    print(table.to_string(index=False))
    return EXIT_OK


def cmd_power(args, cfg):
    out = _out(cfg)
    kinds = [args.model] if args.model else ["dnc"]
    frames, summary = [], {}
    for kind in kinds:
        if cfg.power.effect is None:
            res, make, pop = _calibrate(kind, cfg)
            effect = res.midpoint
        else:
            make, pop = _scenario_maker(kind, cfg)
            effect = cfg.power.effect
        pair = ScenarioPair(make(0.0), make(effect), population=pop, label=kind)
        null, alt = power_curve(pair, cfg.power.n_grid, cfg.power.reps, cfg.power.alpha, cfg.seed, cfg.threads)
        frames += [null.to_frame(), alt.to_frame()]
        try:
            ss = min_sample_size(alt, cfg.power.target_power)
            summary[kind] = {"effect": effect, "min_n": ss.n, "power": ss.power, "mc_se": ss.mc_se,
                             "below": ss.below}
        except TargetUnattainedError as e:
            summary[kind] = {"effect": effect, "min_n": None, "max_power": e.max_power}
    table = pd.concat(frames, ignore_index=True)
    files = [write_csv(table, out / "power.csv"), write_json(summary, out / "min_sample_size.json")]
    write_manifest(out, "power", cfg, files)
    print(table.to_string(index=False))
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "diagnose": cmd_diagnose, "compare": cmd_compare,
            "calibrate": cmd_calibrate, "power": cmd_power}


# --------------------------------------------------------------------------
# parsing and error handling
# --------------------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON scenario config")
    common.add_argument("--data", help="trajectory or component CSV")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir")
    common.add_argument("--threads", type=int)
    common.add_argument("--reps", type=int)
    common.add_argument("--alpha", type=float)
    common.add_argument("--gaic-k", type=float)
    common.add_argument("--dah-definition", choices=("dah", "dooh"))
    common.add_argument("--ptilde", type=int)
    common.add_argument("--model", choices=MODELS)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dahsim", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit the composite model to data")
    s = sub.add_parser("simulate", parents=[common], help="simulate patients from a model")
    s.add_argument("--n", type=int)
    s.add_argument("--model-file", help="fitted_model.json from 'fit'")
    s.add_argument("--trajectories", action="store_true", help="also write daily locations")
    sub.add_parser("diagnose", parents=[common], help="residual and predictive checks")
    sub.add_parser("compare", parents=[common], help="discrepancy of every model")
    sub.add_parser("calibrate", parents=[common], help="treatment coefficient for the target median difference")
    sub.add_parser("power", parents=[common], help="power and size curves")
    return p


def _exit_code(e):
    if isinstance(e, ConfigError):
        return EXIT_CONFIG
    if isinstance(e, (DataError, SupportError)):
        return EXIT_DATA
    return EXIT_NUMERIC


def _report(e, out_dir):
    err = {"error": type(e).__name__, "message": str(e), "exit_code": _exit_code(e)}
    for attr in ("ids", "indices", "component", "max_power"):
        v = getattr(e, attr, None)
        if v is not None and v != () and v != []:
            err[attr] = list(v)[:50] if isinstance(v, (list, tuple)) else v
    ladder = getattr(e, "ladder", None)
    if ladder is not None:
        err["ladder"] = sorted(set(ladder["median_difference"].tolist()))
    print(json.dumps(err, default=str), file=sys.stderr)
    if out_dir:
        try:
            write_json(err, Path(out_dir) / "error.json")
        except OSError:
            pass
    return err["exit_code"]


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    out_dir = args.out_dir
    try:
        cfg = load_config(args.config, _overrides(args))
        out_dir = cfg.out_dir
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, DataError, SupportError, FitError, CalibrationError, ParameterError,
            TargetUnattainedError, np.linalg.LinAlgError, FloatingPointError) as e:
        return _report(e, out_dir)
    except ValueError as e:
        # remaining value errors come from user-supplied settings
        return _report(ConfigError(str(e)), out_dir)


if __name__ == "__main__":
    sys.exit(main())
