"""Monte Carlo experiments and single-series fits driven by a configuration."""
from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .estimation import estimate_eiv
from .identification import select_joint, select_order_known_T
from .model import Trajectory, simulate
from .rng import substream, substream_seed
from .validation import MAX_LATTICE_POINTS, H0Model, gof_test

__all__ = [
    "ExperimentReport",
    "run_order_id",
    "run_joint_id",
    "run_power",
    "run_single_fit",
    "run_simulate",
    "run_experiment",
    "read_series",
    "write_series",
]


@dataclass
class ExperimentReport:
    kind: str
    records: list
    aggregate: dict
    config: dict
    wall_time: float = 0.0
    version: str = __version__
    extra: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "version": self.version,
            "wall_time": self.wall_time,
            "aggregate": self.aggregate,
            "config": self.config,
            **self.extra,
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, default=_json_default)
        if self.records:
            fields = list(self.records[0].keys())
            with open(out / "records.csv", "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=fields)
                writer.writeheader()
                writer.writerows(self.records)
        return out


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _map(func, cfg: ExperimentConfig, indices) -> list:
    indices = list(indices)
    if cfg.threads <= 1 or len(indices) < 2:
        return [func(cfg, i) for i in indices]
    with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
        return list(pool.map(func, [cfg] * len(indices), indices, chunksize=max(1, len(indices) // (4 * cfg.threads))))


def _simulate_length(cfg: ExperimentConfig, seed) -> Trajectory:
    T = cfg.spec.T
    traj = simulate(cfg.spec, cfg.noise, max(2, math.ceil(cfg.n_obs / T)), cfg.burn_in, seed)
    return Trajectory(traj.values[: cfg.n_obs], T)


def _order_rep(cfg: ExperimentConfig, rep: int) -> dict:
    traj = _simulate_length(cfg, substream(cfg.seed, rep))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        table = select_order_known_T(traj, cfg.spec.T, cfg.p_max, cfg.noise_shape, cfg.density_path)
    p_opt, _ = table.selected
    rec = {"rep": rep, "p_opt": p_opt, "correct": int(p_opt == cfg.spec.p)}
    for e in table.entries:
        rec[f"bic_p{e.p_star}"] = e.bic
    for e in table.entries:
        rec[f"sigma_z2_p{e.p_star}"] = e.estimation.sigma_z2_hat if e.estimation is not None else math.nan
    rec["density_path"] = "|".join(sorted({e.density_path for e in table.entries}))
    return rec


def run_order_id(cfg: ExperimentConfig) -> ExperimentReport:
    """Order selection at known period over simulated replications."""
    t0 = time.perf_counter()
    records = _map(_order_rep, cfg, range(cfg.replications))
    fraction = float(np.mean([r["correct"] for r in records]))
    agg = {"fraction_correct": fraction, "true_p": cfg.spec.p, "replications": len(records)}
    return ExperimentReport("order-id", records, agg, cfg.echo(), time.perf_counter() - t0)


def _joint_rep(cfg: ExperimentConfig, rep: int) -> dict:
    traj = _simulate_length(cfg, substream(cfg.seed, rep))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        table = select_joint(traj, cfg.p_max, cfg.T_max, cfg.noise_shape, cfg.density_path, strict=False)
    p_opt, T_opt = table.selected
    rec = {
        "rep": rep,
        "p_opt": p_opt,
        "T_opt": T_opt,
        "correct_joint": int((p_opt, T_opt) == (cfg.spec.p, cfg.spec.T)),
        "correct_period": int(T_opt == cfg.spec.T),
    }
    for e in table.entries:
        rec[f"bic_p{e.p_star}_T{e.T_star}"] = e.bic
    return rec


def run_joint_id(cfg: ExperimentConfig) -> ExperimentReport:
    """Joint order/period selection over simulated replications."""
    t0 = time.perf_counter()
    records = _map(_joint_rep, cfg, range(cfg.replications))
    agg = {
        "fraction_joint": float(np.mean([r["correct_joint"] for r in records])),
        "fraction_period": float(np.mean([r["correct_period"] for r in records])),
        "true_p": cfg.spec.p,
        "true_T": cfg.spec.T,
        "replications": len(records),
    }
    return ExperimentReport("joint-id", records, agg, cfg.echo(), time.perf_counter() - t0)


def _power_rep(cfg: ExperimentConfig, job: tuple) -> dict:
    vi, rep = job
    variance = cfg.variances[vi]
    data_noise = cfg.noise.scaled_to(variance)
    traj = simulate(cfg.spec, data_noise, max(2, cfg.n_obs // cfg.spec.T), cfg.burn_in, substream(cfg.seed, vi, rep, 0))
    if cfg.h0 == "known":
        h0 = H0Model(cfg.spec, cfg.noise)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            h0 = H0Model.from_fit(estimate_eiv(traj, cfg.spec.p), cfg.noise_shape)
    res = gof_test(traj, h0, cfg.m_boot, cfg.grid(cfg.spec.T), seed=substream_seed(cfg.seed, vi, rep, 1))
    return {
        "variance": variance,
        "rep": rep,
        "d_observed": res.d_observed,
        "p_value": res.p_value,
        "reject": int(res.reject(cfg.alpha)),
    }


def run_power(cfg: ExperimentConfig) -> ExperimentReport:
    """Rejection rate of the CF-distance test across true noise variances."""
    t0 = time.perf_counter()
    jobs = [(vi, rep) for vi in range(len(cfg.variances)) for rep in range(cfg.replications)]
    records = _map(_power_rep, cfg, jobs)
    curve = []
    for v in cfg.variances:
        rows = [r for r in records if r["variance"] == v]
        curve.append({"variance": v, "power": float(np.mean([r["reject"] for r in rows])), "n": len(rows)})
    agg = {"alpha": cfg.alpha, "h0_noise_variance": cfg.noise.total_variance, "power_curve": curve}
    return ExperimentReport("power", records, agg, cfg.echo(), time.perf_counter() - t0)


def read_series(path) -> tuple[np.ndarray, int | None]:
    """Read a one-column CSV; a header of the form ``T=4`` declares the period."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and row[0].strip()]
    if not rows:
        raise ValueError(f"{path} contains no data")
    T = None
    head = rows[0][0].strip()
    try:
        float(head)
    except ValueError:
        rows = rows[1:]
        if head.replace(" ", "").upper().startswith("T="):
            T = int(head.split("=", 1)[1])
    try:
        values = np.array([float(r[0]) for r in rows])
    except ValueError as exc:
        raise ValueError(f"malformed data file {path}: {exc}") from exc
    if values.size == 0 or not np.all(np.isfinite(values)):
        raise ValueError(f"malformed data file {path}: empty or non-finite values")
    return values, T


def write_series(path, values, T: int | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"T={T}" if T is not None else "y"])
        writer.writerows([[repr(float(v))] for v in values])


def _load_data(cfg: ExperimentConfig) -> Trajectory:
    if cfg.data_path is not None:
        values, T_file = read_series(cfg.data_path)
        T = cfg.data_T or T_file or (cfg.spec.T if cfg.spec is not None else None)
        if T is None:
            raise ValueError("the period T is not declared in the data file or the config")
        return Trajectory(values, T)
    return _simulate_length(cfg, substream(cfg.seed, 0))


def run_single_fit(cfg: ExperimentConfig) -> ExperimentReport:
    """Identify the order, estimate and validate one series."""
    t0 = time.perf_counter()
    traj = _load_data(cfg)
    T = traj.T
    notes = []
    if len(traj) % T:
        notes.append(f"series length {len(traj)} is not a multiple of T={T}; trailing samples are ignored")
    y = traj.values[: (len(traj) // T) * T]
    p_max = min(cfg.p_max, T - 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        table = select_order_known_T(y, T, p_max, cfg.noise_shape, cfg.density_path)
        p_opt = cfg.p if cfg.p is not None else table.selected[0]
        est = estimate_eiv(y, p_opt, T)
        gof = None
        grid = cfg.grid(T)
        if grid.half_axis.size * grid.axis.size ** (T - 1) <= MAX_LATTICE_POINTS:
            gof = gof_test(y, H0Model.from_fit(est, cfg.noise_shape), cfg.m_boot, grid, seed=cfg.seed)
        else:
            notes.append(f"CF-distance test skipped: lattice in {T} dimensions is too large for the configured step")
    notes.extend(str(w.message) for w in caught)
    agg = {
        "p_opt": int(p_opt),
        "T": T,
        "estimation": est.to_dict(),
        "bic": table.to_rows(),
        "gof": gof.to_dict() if gof is not None else None,
        "warnings": notes,
    }
    return ExperimentReport("single-fit", [], agg, cfg.echo(), time.perf_counter() - t0)


def run_simulate(cfg: ExperimentConfig) -> ExperimentReport:
    t0 = time.perf_counter()
    traj = _simulate_length(cfg, substream(cfg.seed, 0))
    records = [{"t": i + 1, "y": float(v)} for i, v in enumerate(traj.values)]
    agg = {"n_obs": len(traj), "T": traj.T}
    return ExperimentReport("simulate", records, agg, cfg.echo(), time.perf_counter() - t0)


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    runners = {
        "order-id": run_order_id,
        "joint-id": run_joint_id,
        "power": run_power,
        "single-fit": run_single_fit,
        "simulate": run_simulate,
    }
    return runners[cfg.kind](cfg)
