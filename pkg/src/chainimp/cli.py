"""Command-line interface: ``chainimp <subcommand> [flags]``.

Exit status is 0 on success, 1 on invalid input and 2 on numerical failure.
Set ``CHAINIMP_LOG`` (e.g. ``INFO`` or ``DEBUG``) for log output on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .data_model import DataValidationError, load_dataset, missingness_profile, parse_config
from .engine import CHAIN_MODES, EngineConfig, ImputationError, read_completed, run
from .regressors import ConvergenceError
from .selection import SelectionConfig

logger = logging.getLogger("chainimp")

ENGINE_FLAGS = {
    "m": "m",
    "burn_in": "burn_in_cycles",
    "between": "between_cycles",
    "chain_mode": "chain_mode",
    "seed": "seed",
    "threads": "threads",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for numerical failures here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_data_flags(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--data", required=required, help="input CSV table")
    p.add_argument("--config", required=required, help="JSON variable configuration")


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--m", type=int, help="number of imputations (default 10)")
    p.add_argument("--burn-in", type=int, help="burn-in cycles per chain (default 10)")
    p.add_argument("--between", type=int, help="cycles between emitted datasets in single-chain mode (default 5)")
    p.add_argument("--chain-mode", choices=CHAIN_MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="maximum chains run in parallel (output does not depend on it)")
    p.add_argument("--min-r2", type=float, help="minimum R^2 increase to add a predictor (default 0.005)")
    p.add_argument("--max-predictors", type=int, help="maximum predictors per model (default 10)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chainimp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("profile", help="per-variable missingness table")
    _add_data_flags(p)
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("impute", help="multiple imputation by chained equations")
    _add_data_flags(p)
    _add_engine_flags(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("hotdeck", help="single univariate hot-deck imputation")
    _add_data_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("pool", help="combine per-imputation estimates")
    p.add_argument("--estimates", required=True,
                   help="CSV with columns imputation, estimand, estimate, se")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--out", help="output CSV (default: stdout)")

    p = sub.add_parser("diagnose", help="report comparing MI against hot deck")
    _add_data_flags(p)
    _add_engine_flags(p)
    p.add_argument("--mi-dir", help="directory from a previous impute run (default: run it now)")
    p.add_argument("--hd-dir", help="directory from a previous hotdeck run (default: run it now)")
    p.add_argument("--variables", nargs="+")
    p.add_argument("--response")
    p.add_argument("--predictors", nargs="+")
    p.add_argument("--ba-variable")
    p.add_argument("--alert", type=float, default=0.1, help="indicator-rate alert threshold")
    p.add_argument("--raw-scale", action="store_true", help="compare untransformed values")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("simulate", help="write a synthetic survey with known truth")
    p.add_argument("--kind", choices=("survey", "bivariate", "regression"), default="survey")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--variables", type=int, help="pad the survey to this many variables")
    p.add_argument("--miss-rate", type=float, default=0.1)
    p.add_argument("--rho", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    return parser


def engine_config(args: argparse.Namespace, config: dict) -> EngineConfig:
    """Engine settings from the config's ``engine`` section, overridden by flags."""
    settings = dict(config.get("engine", {}))
    sel = dict(settings.pop("selection", {}))
    for flag, key in ENGINE_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "min_r2", None) is not None:
        sel["min_r2_increase"] = args.min_r2
    if getattr(args, "max_predictors", None) is not None:
        sel["max_predictors"] = args.max_predictors
    try:
        return EngineConfig(selection=SelectionConfig(**sel), **settings)
    except TypeError as exc:
        raise UsageError(f"invalid engine setting: {exc}") from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args):
    if not Path(args.data).is_file():
        raise UsageError(f"data file not found: {args.data}")
    if not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    config = parse_config(args.config)
    ds = load_dataset(args.data, config)
    for w in ds.warnings:
        logger.warning(w)
    return ds, config


def _emit(frame: pd.DataFrame, out: str | None) -> None:
    if out:
        frame.to_csv(out, index=False, na_rep="")
    else:
        frame.to_csv(sys.stdout, index=False, na_rep="")


def cmd_profile(args) -> None:
    ds, _ = _load(args)
    _emit(missingness_profile(ds), args.out)


def _impute(ds, config, args):
    cfg = engine_config(args, config)
    logger.info("imputing %d rows x %d variables, m=%d", ds.n_rows, len(ds.variables), cfg.m)
    return run(ds, cfg)


def cmd_impute(args) -> None:
    ds, config = _load(args)
    cs = _impute(ds, config, args)
    cs.write(args.out_dir, {"data_warnings": ds.warnings, "command": "impute"})


def _hotdeck(ds, seed):
    from .hotdeck import hotdeck_impute

    return hotdeck_impute(ds, seed)


def cmd_hotdeck(args) -> None:
    ds, _ = _load(args)
    cs = _hotdeck(ds, args.seed)
    cs.write(args.out_dir, {"data_warnings": ds.warnings, "command": "hotdeck"})


def cmd_pool(args) -> None:
    from .inference import pool_regression

    path = Path(args.estimates)
    if not path.is_file():
        raise UsageError(f"estimates file not found: {path}")
    frame = pd.read_csv(path)
    need = {"imputation", "estimand", "estimate", "se"}
    if not need.issubset(frame.columns):
        raise UsageError(f"estimates file needs columns {sorted(need)}")
    names = list(dict.fromkeys(frame["estimand"]))
    fits = []
    for _, grp in frame.groupby("imputation", sort=True):
        grp = grp.set_index("estimand")
        if sorted(grp.index) != sorted(names):
            raise UsageError("every imputation must report the same estimands")
        grp = grp.loc[names]
        fits.append((grp["estimate"].to_numpy(float), grp["se"].to_numpy(float)))
    pooled = pool_regression(fits, names, level=args.level, allow_single=len(fits) == 1)
    _emit(pooled.frame(), args.out)


def _completed_paths(directory: str) -> list[Path]:
    paths = sorted(Path(directory).glob("completed_*.csv"))
    if not paths:
        raise UsageError(f"no completed_*.csv tables in {directory}")
    return paths


def cmd_diagnose(args) -> None:
    from .diagnostics import write_report

    ds, config = _load(args)
    cs_mi = read_completed(ds, _completed_paths(args.mi_dir)) if args.mi_dir else _impute(ds, config, args)
    seed = args.seed if args.seed is not None else 0
    cs_hd = read_completed(ds, _completed_paths(args.hd_dir)) if args.hd_dir else _hotdeck(ds, seed)
    if bool(args.response) != bool(args.predictors):
        raise UsageError("--response and --predictors must be given together")
    write_report(args.out_dir, cs_mi, cs_hd, variables=args.variables, response=args.response,
                 predictors=args.predictors, ba_variable=args.ba_variable, alert_threshold=args.alert,
                 transformed=not args.raw_scale)


def cmd_simulate(args) -> None:
    from . import simulate

    rng = np.random.default_rng(args.seed)
    if args.kind == "survey":
        sim = simulate.survey(args.n, rng, n_variables=args.variables, miss_rate=args.miss_rate)
    elif args.kind == "bivariate":
        sim = simulate.bivariate(args.n, args.rho, args.miss_rate, rng)
    else:
        sim = simulate.regression_fixture(args.n, args.miss_rate, rng)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim.write(out / "data.csv", out / "config.json")
    sim.truth.to_csv(out / "truth.csv", index=False)


COMMANDS = {
    "profile": cmd_profile,
    "impute": cmd_impute,
    "hotdeck": cmd_hotdeck,
    "pool": cmd_pool,
    "diagnose": cmd_diagnose,
    "simulate": cmd_simulate,
}


def _configure_logging() -> None:
    level = os.environ.get("CHAINIMP_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (UsageError, DataValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"chainimp {args.command}: {exc}", file=sys.stderr)
        return 1
    except (ImputationError, ConvergenceError, np.linalg.LinAlgError, OverflowError, FloatingPointError) as exc:
        print(f"chainimp {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"chainimp {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
