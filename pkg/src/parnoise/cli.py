"""Command-line entry point ``parnoise``.

Subcommands
-----------
simulate        simulate a series from a config and write it as CSV
estimate        errors-in-variables fit of a series
identify        BIC order selection at known period
identify-joint  BIC selection of order and period
validate        CF-distance goodness-of-fit test of a fitted model
experiment      run the Monte Carlo experiment described by a config

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .estimation import estimate_eiv
from .experiments import _json_default, read_series, run_experiment, write_series
from .identification import select_joint, select_order_known_T
from .model import Trajectory
from .validation import H0Model, gof_test

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _InputError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML experiment configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--threads", type=int, help="worker processes")
    common.add_argument("--density-path", choices=("closed", "inversion"), help="block density evaluation")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", type=Path, help="single-column CSV; header 'T=<period>' declares the period")
    data.add_argument("--period", "-T", type=int, help="period (if not in the data header)")

    p = argparse.ArgumentParser(prog="parnoise", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="simulate a series")
    est = sub.add_parser("estimate", parents=[common, data], help="fit PAR coefficients and noise variance")
    est.add_argument("--order", "-p", type=int, required=True)
    ident = sub.add_parser("identify", parents=[common, data], help="order selection at known period")
    ident.add_argument("--p-max", type=int)
    joint = sub.add_parser("identify-joint", parents=[common, data], help="joint order and period selection")
    joint.add_argument("--p-max", type=int)
    joint.add_argument("--T-max", type=int)
    val = sub.add_parser("validate", parents=[common, data], help="goodness-of-fit test")
    val.add_argument("--order", "-p", type=int, required=True)
    val.add_argument("--m-boot", type=int)
    sub.add_parser("experiment", parents=[common], help="run a configured experiment")
    return p


def _config(args, kind: str) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    else:
        if args.seed is None and kind != "single-fit":
            raise ConfigError("either --config or --seed is required")
        cfg = ExperimentConfig(kind="single-fit", seed=args.seed or 0)
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg.seed = args.seed
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg.threads = args.threads
    if args.density_path is not None:
        cfg.density_path = args.density_path
    return cfg


def _series(args, cfg: ExperimentConfig) -> Trajectory:
    path = getattr(args, "data", None) or cfg.data_path
    if path is None:
        raise ConfigError("no input series: pass --data or set [data].path")
    try:
        values, T_file = read_series(path)
    except FileNotFoundError as exc:
        raise _InputError(f"data file not found: {path}") from exc
    except ValueError as exc:
        raise _InputError(str(exc)) from exc
    T = getattr(args, "period", None) or cfg.data_T or T_file or (cfg.spec.T if cfg.spec is not None else None)
    if T is None and args.command != "identify-joint":
        raise ConfigError("period unknown: pass --period or declare it in the data header")
    return Trajectory(values, T or 1)


def _emit(out: Path | None, name: str, payload: dict) -> None:
    text = json.dumps(payload, indent=2, default=_json_default)
    if out is None:
        print(text)
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text + "\n")


def _run(args) -> int:
    cmd = args.command
    if cmd == "experiment":
        if args.config is None:
            raise ConfigError("experiment needs --config")
        cfg = _config(args, "experiment")
        report = run_experiment(cfg)
        out = args.out or (Path(cfg.out) if cfg.out else None)
        if out is None:
            print(json.dumps(report.metadata(), indent=2, default=_json_default))
        else:
            report.write(out)
        return EXIT_OK

    if cmd == "simulate":
        cfg = _config(args, "simulate")
        if cfg.spec is None or cfg.noise is None:
            raise ConfigError("simulate needs a config with [model] and [noise]")
        cfg.kind = "simulate"
        report = run_experiment(cfg)
        values = [r["y"] for r in report.records]
        if args.out is None:
            print(f"T={cfg.spec.T}")
            print("\n".join(repr(v) for v in values))
        else:
            args.out.mkdir(parents=True, exist_ok=True)
            write_series(args.out / "series.csv", values, cfg.spec.T)
            _emit(args.out, "report.json", report.metadata())
        return EXIT_OK

    cfg = _config(args, "single-fit")
    traj = _series(args, cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cmd == "estimate":
            est = estimate_eiv(traj, args.order)
            payload = est.to_dict()
        elif cmd == "identify":
            p_max = args.p_max or min(cfg.p_max, traj.T - 1)
            table = select_order_known_T(traj, traj.T, p_max, cfg.noise_shape, cfg.density_path)
            payload = {"selected": {"p": table.selected[0], "T": traj.T}, "bic": table.to_rows()}
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                table.to_csv(args.out / "bic.csv")
        elif cmd == "identify-joint":
            table = select_joint(
                traj.values, args.p_max or 4, args.T_max or cfg.T_max, cfg.noise_shape, cfg.density_path, strict=False
            )
            p_opt, T_opt = table.selected
            payload = {"selected": {"p": p_opt, "T": T_opt}, "bic": table.to_rows()}
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                table.to_csv(args.out / "bic.csv")
        else:  # validate
            est = estimate_eiv(traj, args.order)
            res = gof_test(
                traj,
                H0Model.from_fit(est, cfg.noise_shape),
                args.m_boot or cfg.m_boot,
                cfg.grid(traj.T),
                seed=cfg.seed,
                threads=cfg.threads,
            )
            payload = {"estimation": est.to_dict(), "gof": res.to_dict(), "reject_at_alpha": res.reject(cfg.alpha)}
    payload["warnings"] = [str(w.message) for w in caught]
    payload["version"] = __version__
    _emit(args.out, f"{cmd}.json", payload)
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _run(args)
    except (ConfigError, _InputError) as exc:
        print(f"parnoise: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"parnoise: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
