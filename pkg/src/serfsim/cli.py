"""``serfsim`` command line: validate, fit, rank, simulate, report, run-all.

Exit codes: 0 success, 2 bad input, 3 numerical failure. Failures print one
line ``ERROR <ErrorClass>: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from itertools import combinations
from pathlib import Path

from . import fixtures, report
from .config import RunConfig, load_config
from .data import TrialDataset, load_dataset, summarize
from .econ import compute_ce_curve, dominance, observed_samples, rank_all
from .errors import ConfigError, SerfsimError
from .quantreg import QuantileModel, build_design, fit_with_se
from .simulate import run_grid, simulation_inputs

log = logging.getLogger("serfsim")

CONFIG_ECHO = "config.yaml"
MODELS_DIR = "models"


def model_filename(tau: float) -> str:
    return f"model_q{tau:.2f}.json"


def _finish(cfg: RunConfig, command: str) -> None:
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_ECHO).write_text(cfg.to_yaml(), encoding="utf-8")
    meta = report.run_metadata(cfg.config_hash, cfg.seed)
    meta["command"] = command
    report.write_manifest(out, meta)


# -- commands ------------------------------------------------------------------

def _load_data(cfg: RunConfig) -> TrialDataset:
    cfg.check_files()
    paths = cfg.data_paths()
    if paths is None:
        paths = fixtures.fixture_paths()
    return load_dataset(*paths, control=cfg.control)


def cmd_validate(cfg: RunConfig) -> TrialDataset:
    ds = _load_data(cfg)
    print(f"ok: {len(ds.records)} records, {len(ds.treatments)} treatments, "
          f"{len(ds.seasons)} seasons, {len(ds.replicates)} replicates")
    return ds


def cmd_fit(cfg: RunConfig) -> list[QuantileModel]:
    ds = _load_data(cfg)
    design = build_design(ds)
    models = fit_with_se(design, cfg.taus, cfg.n_boot, cfg.seed)
    mdir = cfg.out / MODELS_DIR
    mdir.mkdir(parents=True, exist_ok=True)
    for m in models:
        (mdir / model_filename(m.tau)).write_text(m.to_json(), encoding="utf-8")
    report.emit_coefficient_table(models, cfg.out / report.REPORT_DIR / "coefficients.csv")
    print(f"fitted {len(models)} quantiles on {design.n_obs} rows")
    return models


def _observed_groups(ds: TrialDataset) -> list[tuple[str, str | None]]:
    return [(f"observed_{s}", s) for s in ds.seasons] + [("observed_pooled", None)]


def cmd_rank(cfg: RunConfig) -> None:
    ds = _load_data(cfg)
    profile = cfg.risk_profile()
    curves, rankings, dom = {}, {}, []
    for sid, season in _observed_groups(ds):
        samples = observed_samples(ds, season)
        curves[sid] = [compute_ce_curve(s, profile) for s in samples]
        rankings[sid] = rank_all(curves[sid], profile.rac_grid)
        yields = {tr: [r.yield_lb for r in ds.select(season=season, treatment=tr)] for tr in ds.treatments}
        by_tr = {s.treatment: s for s in samples}
        for a, b in combinations(ds.treatments, 2):
            dom.append((sid, "yield", a, b, dominance(yields[a], yields[b])))
            dom.append((sid, "profit", a, b, dominance(by_tr[a], by_tr[b])))
    rdir = cfg.out / report.REPORT_DIR
    report.emit_ce_plot_data(curves, rdir / "ce_curves.csv")
    report.emit_ce_results(curves, rdir / "ce_results.csv")
    report.emit_rankings(rankings, rdir / "rankings.csv")
    report.emit_dominance(dom, rdir / "dominance.csv")
    for sid in curves:
        top = rankings[sid]
        print(f"{sid}: best at rac {min(top):g} = {top[min(top)][0].treatment}, "
              f"at rac {max(top):g} = {top[max(top)][0].treatment}")


def _simulation_models(cfg: RunConfig) -> list[QuantileModel]:
    if cfg.model_source == "published":
        return fixtures.published_models(taus=cfg.sim_taus)
    models = []
    for tau in cfg.sim_taus:
        path = cfg.out / MODELS_DIR / model_filename(tau)
        if not path.is_file():
            raise ConfigError(f"fitted model {path} not found; run `serfsim fit` with tau {tau:g} first")
        models.append(QuantileModel.from_json(path.read_text(encoding="utf-8")))
    return models


def cmd_simulate(cfg: RunConfig) -> None:
    ds = _load_data(cfg)
    models = _simulation_models(cfg)
    inputs = simulation_inputs(ds, t_start=cfg.t_start)
    profile = cfg.risk_profile()
    runs, curves, rankings, clamps = [], {}, {}, []
    for grid in cfg.scenario_grids():
        result = run_grid(models, inputs, grid, profile, residual_noise=cfg.residual_noise)
        for sc in grid:
            sid = sc.scenario_id
            runs.extend(result.runs[sid])
            curves[sid] = result.ce[sid]
            rankings[sid] = rank_all(result.ce[sid], profile.rac_grid)
            clamps.extend((sid, r.treatment, r.clamp_count) for r in result.runs[sid])
    rdir = cfg.out / report.REPORT_DIR
    report.emit_sim_draws(runs, rdir / "sim_draws.csv")
    report.emit_sim_profits(runs, rdir / "sim_profits.csv")
    report.emit_ce_plot_data(curves, rdir / "sim_ce_curves.csv")
    report.emit_ce_results(curves, rdir / "sim_ce_results.csv")
    report.emit_rankings(rankings, rdir / "sim_rankings.csv")
    report.write_csv(rdir / "sim_clamps.csv", ("scenario_id", "treatment", "clamp_count"), sorted(clamps))
    n_clamped = sum(c for _, _, c in clamps)
    print(f"simulated {len(curves)} scenarios x {len(ds.treatments)} treatments x {cfg.n_draws} draws"
          f" ({n_clamped} negative predictions set to 0)")


def cmd_report(cfg: RunConfig) -> None:
    ds = _load_data(cfg)
    report.emit_summary(summarize(ds), cfg.out / report.REPORT_DIR / "summary.csv")


def cmd_run_all(cfg: RunConfig) -> None:
    cmd_fit(cfg)
    cmd_rank(cfg)
    cmd_simulate(cfg)
    cmd_report(cfg)


COMMANDS = {
    "validate": cmd_validate,
    "fit": cmd_fit,
    "rank": cmd_rank,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "run-all": cmd_run_all,
}


# -- argument handling -----------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _band(text: str) -> tuple[str, list[float]]:
    level, _, rest = text.partition("=")
    bounds = _floats(rest)
    if not level or len(bounds) != 2:
        raise argparse.ArgumentTypeError(f"expected LEVEL=LOWER,UPPER, got {text!r}")
    return level, bounds


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("configuration overrides")
    g.add_argument("--config", type=Path, help="YAML run config (defaults to the bundled one)")
    g.add_argument("--out", type=Path, help="output directory")
    g.add_argument("--seed", type=int)
    g.add_argument("--trials", type=Path, help="trials CSV")
    g.add_argument("--costs", type=Path, help="costs CSV")
    g.add_argument("--bii", type=Path, help="BII CSV")
    g.add_argument("--control", help="name of the unsprayed treatment")
    g.add_argument("--taus", type=_floats, help="quantiles to fit, e.g. 0.2,0.5,0.8")
    g.add_argument("--n-boot", type=int, help="bootstrap resamples (0 disables standard errors)")
    g.add_argument("--rac-min", type=float)
    g.add_argument("--rac-max", type=float)
    g.add_argument("--rac-step", type=float)
    g.add_argument("--w0", type=float, help="initial wealth added to profits")
    g.add_argument("--convention", choices=("standard", "paper-literal"))
    g.add_argument("--model-source", choices=("published", "fitted"))
    g.add_argument("--sim-taus", type=_floats, help="yield quantiles to simulate")
    g.add_argument("--band", type=_band, action="append", metavar="LEVEL=LO,HI",
                   help="BII band (repeatable; replaces the configured bands)")
    g.add_argument("--draws", type=int, help="simulated seasons per scenario")
    g.add_argument("--price-override", type=_floats, action="append", metavar="X",
                   help="extra grid at constant price X (repeatable or comma-separated)")
    g.add_argument("--t-start", type=int, help="time index of the first simulated harvest")
    g.add_argument("--residual-noise", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="serfsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "validate": "check the input files",
        "fit": "fit quantile regressions and bootstrap standard errors",
        "rank": "certainty-equivalent curves and rankings from observed profits",
        "simulate": "scenario simulation with CE curves and rankings",
        "report": "descriptive summary table and manifest",
        "run-all": "fit, rank, simulate and report in one run",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def overrides_from_args(args: argparse.Namespace) -> dict:
    o: dict = {}

    def put(value, *keys):
        if value is None:
            return
        node = o
        for k in keys[:-1]:
            node = node.setdefault(k, {})
        node[keys[-1]] = value

    absolute = lambda p: None if p is None else str(p.resolve())  # noqa: E731
    put(absolute(args.trials), "data", "trials")
    put(absolute(args.costs), "data", "costs")
    put(absolute(args.bii), "data", "bii")
    put(args.control, "data", "control")
    put(args.seed, "seed")
    put(args.taus, "taus")
    put(args.n_boot, "bootstrap", "n_boot")
    put(args.rac_min, "rac", "min")
    put(args.rac_max, "rac", "max")
    put(args.rac_step, "rac", "step")
    put(args.w0, "w0")
    put(args.convention, "convention")
    put(args.model_source, "simulation", "model_source")
    put(args.sim_taus, "simulation", "taus")
    put(None if args.band is None else dict(args.band), "simulation", "bands")
    put(args.draws, "simulation", "n_draws")
    if args.price_override is not None:
        put([p for group in args.price_override for p in group], "simulation", "price_override")
    put(args.t_start, "simulation", "t_start")
    put(args.residual_noise, "simulation", "residual_noise")
    put(None if args.out is None else str(args.out), "out")
    return o


def _fail(kind: str, message: str, code: int) -> int:
    print(f"ERROR {kind}: {' '.join(str(message).split())}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, overrides_from_args(args))
        COMMANDS[args.command](cfg)
        if args.command != "validate":
            _finish(cfg, args.command)
    except SerfsimError as err:
        return _fail(type(err).__name__, err, err.exit_code)
    except FileNotFoundError as err:
        return _fail("FileNotFoundError", err, 2)
    except ValueError as err:
        return _fail(type(err).__name__, err, 2)
    except OSError as err:
        return _fail(type(err).__name__, err, 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
