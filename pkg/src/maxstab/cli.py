"""Command line interface: ``maxstab <command> [options]``.

Every option may also be given in a JSON file passed with ``--config``;
command-line flags take precedence.  Exit codes: 0 ok, 2 usage,
3 data, 4 numeric or convergence failure, 5 infeasible configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import jsonschema
import numpy as np

from . import __version__
from ._errors import EXIT_OK, EXIT_USAGE, ConfigError, DataError, MaxstabError
from .cube import read_cube, write_cube
from .dependence import DepParams
from .diagnostics import (
    CondFieldSpec,
    GroupSpec,
    cond_prob_field,
    gof_orderstats,
    maxstable_check,
)
from .likelihood import DesignMask, FitOptions, fit_pmle, separated_fit
from .marginals import MarginFits, as_margin, fit_margins, qq_report
from .reports import Table, read_json, to_jsonable, write_report
from .simulate import METHODS, simulate_cube
from .subsample import isotropy_test

log = logging.getLogger("maxstab")

_INT_LIST = {"type": "string", "pattern": r"^\s*-?\d+(\s*,\s*-?\d+)*\s*$"}
_FLOAT_LIST = {"type": "string"}
_COMMON = {
    "threads": {"type": "integer", "minimum": 1},
    "seed": {"type": "integer", "minimum": 0},
    "verbose": {"type": "boolean"},
    "out": {"type": "string"},
}
SCHEMAS = {
    "simulate": {
        "c": _FLOAT_LIST, "alpha": _FLOAT_LIST,
        "m": {"type": "integer", "minimum": 1},
        "t_len": {"type": "integer", "minimum": 1},
        "method": {"enum": list(METHODS)},
        "n_poisson": {"type": "integer", "minimum": 100},
    },
    "margins": {
        "input": {"type": "string"},
        "transformed": {"type": "string"},
        "to": {"enum": ["gumbel", "frechet"]},
        "qq": {"type": "string"},
    },
    "fit": {
        "input": {"type": "string"},
        "mask": _INT_LIST,
        "separated": {"type": "boolean"},
        "init": {"enum": ["default", "chi"]},
        "restarts": {"type": "integer", "minimum": 0},
        "max_iter": {"type": "integer", "minimum": 1},
    },
    "test-isotropy": {
        "input": {"type": "string"},
        "mask": _INT_LIST,
        "blocks": _INT_LIST,
        "overlap": _INT_LIST,
        "beta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
        "regime": {"enum": ["fixed", "increasing"]},
        "restarts": {"type": "integer", "minimum": 0},
    },
    "check-maxstable": {
        "input": {"type": "string"},
        "k": _INT_LIST,
        "b1": {"type": "integer", "minimum": 1},
        "b2": {"type": "integer", "minimum": 0},
        "subsets": {"type": "integer", "minimum": 1},
        "bootstrap": {"type": "integer", "minimum": 10},
        "quantiles": {"type": "integer", "minimum": 2},
    },
    "gof": {
        "input": {"type": "string"},
        "fit": {"type": "string"},
        "theta": _FLOAT_LIST,
        "locations": {"type": "string"},
        "b1": {"type": "integer", "minimum": 1},
        "b2": {"type": "integer", "minimum": 0},
        "m_sims": {"type": "integer", "minimum": 1},
        "method": {"enum": list(METHODS)},
    },
    "predict-cond": {
        "input": {"type": "string"},
        "margins": {"type": "string"},
        "fit": {"type": "string"},
        "theta": _FLOAT_LIST,
        "ref": _INT_LIST,
        "z": {"type": "number"},
        "zstar": {"type": "number"},
    },
}

DEFAULTS = {
    "simulate": {"m": 6, "t_len": 100, "method": "exact_extremal", "n_poisson": 1000},
    "margins": {"to": "frechet"},
    "fit": {"separated": False, "init": "default", "restarts": 3, "max_iter": 500},
    "test-isotropy": {"mask": "2,2,0", "beta": 0.025, "regime": "fixed", "overlap": "1,1,1",
                      "restarts": 3},
    "check-maxstable": {"k": "2,3,4,5", "b1": 2, "b2": 1, "bootstrap": 1000, "quantiles": 200},
    "gof": {"b1": 2, "b2": 1, "m_sims": 100, "method": "exact_extremal"},
    "predict-cond": {},
}
REQUIRED = {
    "simulate": ["c", "alpha", "out"],
    "margins": ["input", "out"],
    "fit": ["input", "mask", "out"],
    "test-isotropy": ["input", "out"],
    "check-maxstable": ["input", "out"],
    "gof": ["input", "locations", "out"],
    "predict-cond": ["ref", "z", "zstar", "out"],
}


class UsageError(Exception):
    pass


def config_schema(command: str) -> dict:
    props = dict(_COMMON, **SCHEMAS[command])
    return {"type": "object", "properties": props, "additionalProperties": False}


def _ints(text, what) -> list:
    try:
        return [int(x) for x in str(text).split(",")]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated integers, got {text!r}") from exc


def _floats(text, what) -> list:
    try:
        return [float(x) for x in str(text).split(",")]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from exc


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxstab",
        description="Space-time Brown-Resnick processes: simulation, fitting, testing, diagnostics.",
    )
    parser.add_argument("--version", action="version", version=f"maxstab {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    def add(name, help_):
        p = sub.add_parser(name, help=help_, argument_default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--threads", type=int, help="worker cap (fallback: MAXSTAB_THREADS)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = add("simulate", "simulate a Frechet-margin cube on a regular grid")
    p.add_argument("--c", help="C_1..C_{d+1}, comma separated")
    p.add_argument("--alpha", help="alpha_1..alpha_{d+1}, comma separated")
    p.add_argument("--m", type=int, help="spatial side length M")
    p.add_argument("--t-len", dest="t_len", type=int, help="number of time points T")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--n-poisson", dest="n_poisson", type=int)

    p = add("margins", "fit Gumbel margins per location")
    p.add_argument("--in", dest="input")
    p.add_argument("--transformed", help="also write the transformed cube here")
    p.add_argument("--to", choices=["gumbel", "frechet"])
    p.add_argument("--qq", help="write standard Gumbel QQ tables for all locations here (CSV)")

    p = add("fit", "pairwise likelihood fit")
    p.add_argument("--in", dest="input")
    p.add_argument("--mask", help="max lags r_1..r_d,p, e.g. 4,4,2")
    p.add_argument("--separated", action="store_true", help="one fit per axis")
    p.add_argument("--init", choices=["default", "chi"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)

    p = add("test-isotropy", "subsampling test of C_1 = C_2 and alpha_1 = alpha_2")
    p.add_argument("--in", dest="input")
    p.add_argument("--mask", help="per-axis max lags of the separated fit (default 2,2,0)")
    p.add_argument("--blocks", help="b_1,b_2,b_3 (default M,M,max(0.8T,50))")
    p.add_argument("--overlap", help="e_1,e_2,e_3")
    p.add_argument("--beta", type=float)
    p.add_argument("--regime", choices=["fixed", "increasing"])
    p.add_argument("--restarts", type=int)

    p = add("check-maxstable", "graphical max-stability check")
    p.add_argument("--in", dest="input")
    p.add_argument("--k", help="subset sizes, e.g. 2,3,4,5")
    p.add_argument("--b1", type=int)
    p.add_argument("--b2", type=int)
    p.add_argument("--subsets", type=int, help="number of subsets m")
    p.add_argument("--bootstrap", type=int)
    p.add_argument("--quantiles", type=int)

    p = add("gof", "order-statistics check against the fitted model")
    p.add_argument("--in", dest="input")
    p.add_argument("--fit", help="fit JSON from 'maxstab fit'")
    p.add_argument("--theta", help="C_1..C_{d+1},alpha_1..alpha_{d+1}")
    p.add_argument("--locations", help="1-based locations, ';'-separated, e.g. '1,1;1,2'")
    p.add_argument("--b1", type=int)
    p.add_argument("--b2", type=int)
    p.add_argument("--m-sims", dest="m_sims", type=int)
    p.add_argument("--method", choices=METHODS)

    p = add("predict-cond", "conditional exceedance probability field")
    p.add_argument("--in", dest="input", help="raw cube to fit margins from")
    p.add_argument("--margins", help="margin fits JSON from 'maxstab margins'")
    p.add_argument("--fit", help="fit JSON from 'maxstab fit'")
    p.add_argument("--theta", help="C_1..C_{d+1},alpha_1..alpha_{d+1}")
    p.add_argument("--ref", help="1-based reference point s_1,..,s_d,t")
    p.add_argument("--z", type=float, help="prediction level")
    p.add_argument("--zstar", type=float, help="reference level")
    return parser


def resolve_config(command: str, cli: dict) -> dict:
    """Defaults < config file < command-line flags; validated against the schema."""
    cfg = dict(DEFAULTS[command])
    path = cli.pop("config", None)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        _validate(command, file_cfg, f"config {path}")
        cfg.update(file_cfg)
    cli.pop("command", None)
    cfg.update(cli)
    if "threads" not in cfg:
        env = os.environ.get("MAXSTAB_THREADS")
        if env:
            try:
                cfg["threads"] = int(env)
            except ValueError as exc:
                raise UsageError(f"MAXSTAB_THREADS must be an integer, got {env!r}") from exc
    cfg.setdefault("threads", 1)
    cfg.setdefault("seed", 0)
    cfg.setdefault("verbose", False)
    _validate(command, cfg, "effective configuration")
    missing = [k for k in REQUIRED[command] if k not in cfg]
    if missing:
        raise UsageError(f"{command}: missing required option(s): {', '.join(missing)}")
    return cfg


def _validate(command, obj, what):
    try:
        jsonschema.validate(obj, config_schema(command))
    except jsonschema.ValidationError as exc:
        loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"{what}: {loc}: {exc.message}") from exc


def _load_cube(path):
    return read_cube(path)


def _theta_from(cfg) -> DepParams:
    if "theta" in cfg:
        return DepParams.from_vector(_floats(cfg["theta"], "theta"))
    if "fit" in cfg:
        obj = read_json(cfg["fit"])
        try:
            return DepParams.from_dict(obj["theta_hat"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"{cfg['fit']}: no 'theta_hat' entry") from exc
    raise UsageError("need --theta or --fit")


def cmd_simulate(cfg):
    params = DepParams(_floats(cfg["c"], "c"), _floats(cfg["alpha"], "alpha"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cube = simulate_cube(
            params, cfg["m"], cfg["t_len"], seed=cfg["seed"],
            method=cfg["method"], n_poisson_max=cfg["n_poisson"],
        )
    write_cube(cube, cfg["out"])


def cmd_margins(cfg):
    cube = _load_cube(cfg["input"])
    if cube.margin != "raw":
        raise DataError(f"margins expects a raw cube, got {cube.margin!r} margins")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        fits = fit_margins(cube)
    for w in caught:
        log.warning("%s", w.message)
    write_report(fits, cfg["out"], kind="margins")
    if "transformed" in cfg:
        write_cube(as_margin(cube, cfg["to"], fits), cfg["transformed"])
    if "qq" in cfg:
        write_report(qq_tables(cube, fits), cfg["qq"])


def qq_tables(cube, fits) -> Table:
    """Long-format QQ table of the standardised series at every location."""
    parts = []
    for loc in cube.locations():
        t = qq_report((cube.series(loc) - fits.mu[loc]) / fits.sigma[loc])
        n = len(t)
        cols = {f"s{j + 1}": np.full(n, loc[j] + 1) for j in range(cube.d)}
        parts.append({**cols, **t.columns})
    return Table({k: np.concatenate([p[k] for p in parts]) for k in parts[0]})


def _frechet(cube):
    if cube.margin == "raw":
        log.info("raw margins: fitting Gumbel margins and transforming to Frechet")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return as_margin(cube, "frechet")


def cmd_fit(cfg):
    cube = _frechet(_load_cube(cfg["input"]))
    mask = DesignMask.parse(cfg["mask"])
    opts = FitOptions(
        restarts=cfg["restarts"], seed=cfg["seed"], max_iter=cfg["max_iter"], init=cfg["init"]
    )
    if cfg["separated"]:
        res = separated_fit(cube, mask.max_lags, opts=opts)
    else:
        res = fit_pmle(cube, mask, opts=opts)
    if not res.converged:
        log.warning("optimiser did not meet the convergence criteria; result flagged")
    write_report(res, cfg["out"], kind="fit")


def cmd_test_isotropy(cfg):
    cube = _frechet(_load_cube(cfg["input"]))
    lags = _ints(cfg["mask"], "mask")
    b = _ints(cfg["blocks"], "blocks") if "blocks" in cfg else None
    e = _ints(cfg["overlap"], "overlap")
    regime = {"fixed": "fixed_domain", "increasing": "increasing_domain"}[cfg["regime"]]
    opts = FitOptions(restarts=cfg["restarts"], seed=cfg["seed"])
    rep = isotropy_test(cube, lags, b, e, regime, cfg["beta"], opts, threads=cfg["threads"])
    write_report(rep, cfg["out"], kind="isotropy_test")


def _table_dict(table: Table) -> dict:
    return {k: to_jsonable(v) for k, v in table.columns.items()}


def cmd_check_maxstable(cfg):
    cube = _load_cube(cfg["input"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cube = as_margin(cube, "gumbel")
    results = []
    for k in _ints(cfg["k"], "k"):
        spec = GroupSpec(k, cfg["b1"], cfg["b2"], cfg.get("subsets"), cfg["seed"])
        chk = maxstable_check(cube, spec, cfg["bootstrap"], cfg["quantiles"])
        results.append({**chk.to_dict(), "qq": _table_dict(chk.table)})
    write_report({"checks": results, "b1": cfg["b1"], "b2": cfg["b2"]}, cfg["out"],
                 kind="maxstable_check")


def _locations(text) -> list:
    locs = []
    for part in str(text).split(";"):
        if part.strip():
            locs.append(tuple(i - 1 for i in _ints(part, "locations")))
    return locs


def cmd_gof(cfg):
    cube = _load_cube(cfg["input"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cube = as_margin(cube, "gumbel")
        table = gof_orderstats(
            cube, _theta_from(cfg), _locations(cfg["locations"]), cfg["b1"], cfg["m_sims"],
            cfg["b2"], cfg["seed"], cfg["method"],
        )
    write_report(table, cfg["out"])


def cmd_predict_cond(cfg):
    if "margins" in cfg:
        fits = MarginFits.from_dict(read_json(cfg["margins"]))
    elif "input" in cfg:
        cube = _load_cube(cfg["input"])
        if cube.margin != "raw":
            raise DataError("predict-cond needs a raw cube (or --margins) to fit margins")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            fits = fit_margins(cube)
    else:
        raise UsageError("predict-cond needs --margins or --in")
    ref = tuple(i - 1 for i in _ints(cfg["ref"], "ref"))
    spec = CondFieldSpec(ref, cfg["zstar"], cfg["z"])
    write_report(cond_prob_field(spec, _theta_from(cfg), fits), cfg["out"])


COMMANDS = {
    "simulate": cmd_simulate,
    "margins": cmd_margins,
    "fit": cmd_fit,
    "test-isotropy": cmd_test_isotropy,
    "check-maxstable": cmd_check_maxstable,
    "gof": cmd_gof,
    "predict-cond": cmd_predict_cond,
}


def run(command: str, cfg: dict) -> int:
    """Dispatch a resolved configuration; returns the exit status."""
    log.info("maxstab %s config=%s", command, json.dumps(cfg, sort_keys=True))
    COMMANDS[command](cfg)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    cli = vars(args)
    command = cli["command"]
    logging.basicConfig(
        level=logging.DEBUG if cli.get("verbose") else logging.INFO,
        format="maxstab: %(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(command, cli)
        return run(command, cfg)
    except UsageError as exc:
        print(f"maxstab {command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MaxstabError as exc:
        print(f"maxstab {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
