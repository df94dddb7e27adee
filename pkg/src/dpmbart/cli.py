"""Command line entry point.

Subcommands: simulate (write a scenario CSV), fit (run one chain on a CSV
or a scenario and write the standard outputs), summarize (rebuild outputs
from saved draws), reproduce (all scenarios under both error models).

A JSON config file may supply any long-flag value (keys use underscores,
e.g. {"nu_bart": 5, "iters": 2000}); explicit flags win over the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .data import DataError, load_csv
from .harness import fit_and_write, reproduce
from .output import load_draws, write_density_csv, write_fits_csv
from .priors import CalibrationError, calibrate_priors
from .sampler import (ChainConfig, bart_error_density, default_density_grid,
                      predictive_error_density, summarize_fit)
from .simulate import SCENARIO_KINDS, simulate

_PRIOR_KEYS = ("nu_bart", "q_bart", "nu_g0", "q_g0", "ks", "mu0",
               "imin", "imax", "psi", "shrink_k", "naive_fraction")
_DEFAULTS = {
    "n": 2000, "seed": 0, "iters": 10000, "burn": 5000, "keep_every": 1,
    "m": 200, "mode": "dpmbart", "num_cut": 100, "min_leaf": 0,
    "naive_fraction": 1.0,
}


def _add_prior_flags(sub):
    g = sub.add_argument_group("prior overrides")
    g.add_argument("--nu-bart", type=float, help="homoscedastic variance "
                   "prior df")
    g.add_argument("--q-bart", type=float, help="quantile matched to the "
                   "pilot sd for the homoscedastic variance prior")
    g.add_argument("--nu-g0", type=float, help="mixture base variance "
                   "prior df")
    g.add_argument("--q-g0", type=float, help="quantile matched to the "
                   "pilot sd for the mixture base variance prior")
    g.add_argument("--ks", type=float, help="prior sds covering the most "
                   "extreme pilot residual")
    g.add_argument("--mu0", type=float, help="mixture base location center")
    g.add_argument("--imin", type=int, help="cluster-count prior mode at "
                   "the low concentration endpoint")
    g.add_argument("--imax", type=int, help="cluster-count prior mode at "
                   "the high concentration endpoint")
    g.add_argument("--psi", type=float, help="concentration prior decay "
                   "exponent")
    g.add_argument("--shrink-k", type=float, help="response half-range in "
                   "prior sds of the ensemble total")
    g.add_argument("--num-cut", type=int, help="cutpoints per predictor")
    g.add_argument("--m", type=int, help="number of trees")
    g.add_argument("--naive", action="store_true", default=None,
                   help="anchor the variance prior on sd(y) instead of the "
                   "pilot residual sd")
    g.add_argument("--naive-fraction", type=float,
                   help="multiplier on sd(y) with --naive")


def _add_chain_flags(sub):
    sub.add_argument("--iters", type=int, help="total MCMC iterations")
    sub.add_argument("--burn", type=int, help="burn-in iterations")
    sub.add_argument("--keep-every", type=int, help="thinning stride")
    sub.add_argument("--seed", type=int, help="chain / scenario seed")
    sub.add_argument("--mode", choices=["dpmbart", "plain_bart"],
                     help="error model")
    g = sub.add_argument_group("debug")
    g.add_argument("--dump-trees", action="store_true", default=None,
                   help="write the final ensemble as flat text")
    g.add_argument("--check-cache", action="store_true", default=None,
                   help="verify incremental caches against full rebuilds")
    g.add_argument("--min-leaf", type=int, help="minimum observations per "
                   "leaf for proposed splits")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmbart",
        description="Tree-ensemble regression with a Dirichlet process "
                    "mixture error model")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="write a scenario dataset CSV")
    p_sim.add_argument("--scenario", choices=SCENARIO_KINDS, required=True)
    p_sim.add_argument("--n", type=int)
    p_sim.add_argument("--seed", type=int)
    p_sim.add_argument("--out", required=True, help="output CSV path")
    p_sim.add_argument("--config", help="JSON config file")

    p_fit = sub.add_parser("fit", help="run one chain and write outputs")
    src = p_fit.add_argument_group("input (CSV or scenario)")
    src.add_argument("--csv", help="input CSV path")
    src.add_argument("--y", help="response column name")
    src.add_argument("--x", help="comma-separated predictor column names")
    src.add_argument("--scenario", choices=SCENARIO_KINDS)
    src.add_argument("--n", type=int, help="scenario sample size")
    p_fit.add_argument("--out", required=True, help="output directory")
    p_fit.add_argument("--config", help="JSON config file")
    _add_chain_flags(p_fit)
    _add_prior_flags(p_fit)

    p_sum = sub.add_parser("summarize",
                           help="rebuild outputs from saved draws")
    p_sum.add_argument("--draws", required=True, help="draws.npz path")
    p_sum.add_argument("--out", required=True, help="output directory")

    p_rep = sub.add_parser("reproduce",
                           help="all scenarios under both error models")
    p_rep.add_argument("--out", required=True, help="output directory")
    p_rep.add_argument("--n", type=int)
    p_rep.add_argument("--seed", type=int)
    p_rep.add_argument("--iters", type=int)
    p_rep.add_argument("--burn", type=int)
    p_rep.add_argument("--m", type=int)
    p_rep.add_argument("--config", help="JSON config file")
    return parser


def _resolve(args, key, fallback=None):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key, None)
    if val is not None:
        return val
    cfg = getattr(args, "_config_values", {})
    if key in cfg:
        return cfg[key]
    if fallback is not None:
        return fallback
    return _DEFAULTS.get(key)


def _load_config(args):
    values = {}
    path = getattr(args, "config", None)
    if path:
        with open(path) as fh:
            values = json.load(fh)
        if not isinstance(values, dict):
            raise DataError(f"{path}: config must be a JSON object")
    args._config_values = values


def _cmd_simulate(args) -> int:
    sim = simulate(args.scenario, int(_resolve(args, "n")),
                   int(_resolve(args, "seed")))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    y_raw = sim.data.y + sim.data.y_mean
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "y", "f_true"])
        for i in range(sim.data.n):
            writer.writerow(["%.17g" % sim.data.x[i, 0],
                             "%.17g" % y_raw[i],
                             "%.17g" % sim.f_true[i]])
    print(f"wrote {sim.data.n} rows to {out}")
    return 0


def _cmd_fit(args) -> int:
    if (args.csv is None) == (args.scenario is None):
        raise DataError("give exactly one input source: --csv or "
                        "--scenario")
    f_true = true_density = None
    if args.csv:
        if not args.y or not args.x:
            raise DataError("--csv needs --y and --x")
        predictors = [c.strip() for c in args.x.split(",") if c.strip()]
        data = load_csv(args.csv, args.y, predictors)
        print(f"loaded {data.n} rows, {data.p} predictors from {args.csv}")
    else:
        sim = simulate(args.scenario, int(_resolve(args, "n")),
                       int(_resolve(args, "seed")))
        data = sim.data
        f_true = sim.f_true
        true_density = sim.true_density

    from .data import least_squares_fit
    pilot = least_squares_fit(data)
    print(f"pilot fit: residual sd {pilot.resid_sd:.4f}, R2 {pilot.r2:.4f}")

    m = int(_resolve(args, "m"))
    priors = calibrate_priors(
        data, m=m,
        nu_bart=float(_resolve(args, "nu_bart", 3.0)),
        q_bart=float(_resolve(args, "q_bart", 0.90)),
        nu_g0=float(_resolve(args, "nu_g0", 10.0)),
        q_g0=float(_resolve(args, "q_g0", 0.95)),
        ks=float(_resolve(args, "ks", 10.0)),
        mu0=float(_resolve(args, "mu0", 0.0)),
        shrink_k=float(_resolve(args, "shrink_k", 2.0)),
        i_min=int(_resolve(args, "imin", 1)),
        i_max=(int(_resolve(args, "imax", 0)) or None),
        psi=float(_resolve(args, "psi", 0.5)),
        naive=bool(_resolve(args, "naive", False)),
        naive_fraction=float(_resolve(args, "naive_fraction")))
    config = ChainConfig(
        n_iter=int(_resolve(args, "iters")),
        n_burn=int(_resolve(args, "burn")),
        keep_every=int(_resolve(args, "keep_every")),
        m=m, seed=int(_resolve(args, "seed")),
        mode=str(_resolve(args, "mode")),
        num_cut=int(_resolve(args, "num_cut")),
        min_leaf=int(_resolve(args, "min_leaf")),
        check_cache=bool(_resolve(args, "check_cache", False)))
    _, metrics = fit_and_write(
        data, config, args.out, priors=priors, f_true=f_true,
        true_density=true_density,
        dump_trees=bool(_resolve(args, "dump_trees", False)))
    print(f"wrote fits.csv, density.csv, trace.csv, draws.npz to "
          f"{args.out}")
    if "rmse_f" in metrics:
        print(f"rmse to true f: {metrics['rmse_f']:.4f}")
    return 0


def _cmd_summarize(args) -> int:
    saved = load_draws(args.draws)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fhat_c, lo_c, hi_c = summarize_fit(saved.draws)
    write_fits_csv(out / "fits.csv", saved.x, fhat_c + saved.y_mean,
                   lo_c + saved.y_mean, hi_c + saved.y_mean,
                   f_true=saved.f_true)
    grid = default_density_grid(saved.y - fhat_c)
    if saved.mode == "dpmbart":
        dens = predictive_error_density(saved.draws, grid, saved.g0)
        write_density_csv(out / "density.csv", grid,
                          dpm=(dens.mean, dens.lo, dens.hi))
    else:
        dens = bart_error_density(saved.draws, grid)
        write_density_csv(out / "density.csv", grid, bart_mean=dens.mean)
    from .output import write_trace_csv
    write_trace_csv(out / "trace.csv", saved.traces)
    print(f"rebuilt fits.csv, density.csv, trace.csv in {out}")
    return 0


def _cmd_reproduce(args) -> int:
    metrics = reproduce(args.out,
                        n=int(_resolve(args, "n")),
                        seed=int(_resolve(args, "seed")),
                        n_iter=int(_resolve(args, "iters")),
                        n_burn=int(_resolve(args, "burn")),
                        m=int(_resolve(args, "m")))
    print((Path(args.out) / "report.txt").read_text(), end="")
    print(f"outputs in {args.out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _load_config(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "fit":
            return _cmd_fit(args)
        if args.command == "summarize":
            return _cmd_summarize(args)
        return _cmd_reproduce(args)
    except (DataError, CalibrationError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
