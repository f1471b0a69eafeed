"""Command-line interface: identify, simulate, metrics, compare."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .ambiguity import save_ambiguity
from .arma import save_models
from .config import Config, load_config
from .controller import InfeasibleError
from .harness import (
    Experiment, build_model, compare, compute_metrics, format_table, identify_farm,
    read_trace_csv, simulate, write_plot_data, write_table, write_trace_csv,
)
from .wind import read_wind_csv

log = logging.getLogger("windfarm_drmpc")


def _config(path) -> Config:
    return load_config(path) if path else Config()


def _r_list(text: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid r list {text!r}") from exc
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("r values must be positive")
    return values


def cmd_identify(args) -> int:
    cfg = _config(args.config)
    w = read_wind_csv(args.wind)
    model = build_model(cfg)
    if w.shape[1] != model.n_wt:
        raise SystemExit(f"wind CSV has {w.shape[1]} turbines, model has {model.n_wt}")
    orders = [args.order] if args.order else cfg.arma.orders
    models, amb, scores = identify_farm(w - model.w_op, orders, cfg.ambiguity,
                                        cfg.scenario.w0, cfg.scenario.TI)
    save_models(args.out, models, cfg.scenario.w0, cfg.scenario.TI)
    amb_path = args.ambiguity_out or str(Path(args.out).with_suffix("")) + ".ambiguity.json"
    save_ambiguity(amb_path, amb)
    for i, (m, s) in enumerate(zip(models, scores)):
        print(f"turbine {i + 1}: p={m.p} a={np.round(m.a, 4).tolist()} "
              f"b={np.round(m.b, 4).tolist()} holdout_rmse={ {k: round(v, 4) for k, v in s.items()} }")
    print(f"kappa={amb.kappa:g} sigma_diag={np.round(amb.sigma_diag, 5).tolist()}")
    print(f"wrote {args.out} and {amb_path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args.config)
    if args.record_solve_time:
        cfg = replace(cfg, record_solve_time=True)
    exp = Experiment.create(cfg, args.seed)
    if args.wind:
        w = read_wind_csv(args.wind)
        if w.shape[1] != exp.model.n_wt:
            raise SystemExit(f"wind CSV has {w.shape[1]} turbines, model has {exp.model.n_wt}")
        exp.w_eff = w
    dispatcher = exp.dispatcher(args.controller, args.r)
    trace = simulate(exp.model, dispatcher, exp.w_eff, exp.params, cfg.power_tau,
                     cfg.record_solve_time)
    write_trace_csv(trace, args.out)
    if args.plot_data:
        write_plot_data(trace, args.plot_data)
    rep = compute_metrics(trace, rated_power=cfg.weights.rated_power)
    print(f"{args.controller}: J_p={rep.J_p:.6g} J_s={rep.J_s:.6g} J_t={rep.J_t:.6g} "
          f"fallbacks={trace.fallbacks}")
    if cfg.record_solve_time and args.controller == "drmpc":
        print(f"mean solve time {np.nanmean(trace.solve_ms):.2f} ms")
    return 0


def cmd_metrics(args) -> int:
    trace = read_trace_csv(args.trace)
    base = read_trace_csv(args.baseline) if args.baseline else None
    rep = compute_metrics(trace, base, rated_power=args.rated_power)
    if args.json:
        print(json.dumps(rep.as_dict(), indent=2))
    else:
        for key, value in rep.as_dict().items():
            print(f"{key:8s} {value:.6g}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args.config)
    rows = compare(cfg, args.r, seed=args.seed, include_swf=not args.no_swf)
    print(format_table(rows))
    if args.out:
        write_table(rows, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="windfarm-drmpc",
                                 description="Distributionally robust MPC for wind farm dispatch.")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="fit per-turbine ARMA models and the ambiguity set")
    p.add_argument("wind", help="wind CSV with header t,w1..wN")
    p.add_argument("--order", type=int, default=None, help="AR order p (default: select)")
    p.add_argument("--out", required=True, help="ARMA model JSON")
    p.add_argument("--ambiguity-out", default=None)
    p.add_argument("--config", default=None)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("simulate", help="run one closed-loop simulation")
    p.add_argument("--config", default=None)
    p.add_argument("--controller", choices=("scheduler", "swf", "drmpc"), default="drmpc")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--r", type=float, default=None, help="override the input weight r")
    p.add_argument("--wind", default=None, help="use this wind CSV instead of generating one")
    p.add_argument("--out", required=True, help="trace CSV")
    p.add_argument("--plot-data", default=None, help="gnuplot data file for the power plot")
    p.add_argument("--record-solve-time", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("metrics", help="evaluate J_p, J_s, J_t of a trace")
    p.add_argument("trace")
    p.add_argument("--baseline", default=None)
    p.add_argument("--rated-power", type=float, default=5.0e6)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("compare", help="Scheduler, SWF and DR-MPC on one wind trace")
    p.add_argument("--config", default=None)
    p.add_argument("--r", type=_r_list, default=[1.0, 500.0, 1000.0, 10000.0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-swf", action="store_true")
    p.add_argument("--out", default=None, help="table CSV")
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
