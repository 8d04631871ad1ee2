"""Order and period selection by BIC on residual blocks."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable

import numpy as np

from . import charfn
from .charfn import LOG_FLOOR, MAX_MIXTURE_TERMS
from .estimation import EstimationResult, estimate_eiv
from .model import NoiseSpec, ParSpec, Trajectory
from .residuals import ResidualBlocks, block_residuals, compute_residuals, residual_cov_direct

__all__ = [
    "BicEntry",
    "BicTable",
    "bic_value",
    "block_log_density",
    "fit_bic",
    "select_order_known_T",
    "select_joint",
    "select_optimum",
    "common_residual_range",
    "CLOSED_FORM_MIXTURE_LIMIT",
]

CLOSED_FORM_MIXTURE_LIMIT = 10_000
UNRELIABLE_FLOOR_FRACTION = 0.01


def _log_densities(blocks, density: Callable, log: bool) -> tuple[np.ndarray, int]:
    b = blocks.blocks if isinstance(blocks, ResidualBlocks) else np.asarray(blocks, dtype=float)
    vals = np.atleast_1d(np.asarray(density(b), dtype=float))
    if log:
        floored = vals < LOG_FLOOR
        logf = np.where(floored, LOG_FLOOR, vals)
    else:
        floored = ~(vals > charfn.DENSITY_FLOOR)
        with np.errstate(divide="ignore", invalid="ignore"):
            logf = np.log(np.where(floored, charfn.DENSITY_FLOOR, vals))
    bad = np.flatnonzero(~np.isfinite(logf))
    if bad.size:
        raise ValueError(f"non-finite log-density at block {int(bad[0])}")
    return logf, int(np.sum(floored))


def bic_value(blocks, density: Callable, p_star: int, T: int, n_obs: int, log: bool = False) -> float:
    """``-2 sum_n log f(r_n) + log(n_obs) (T p* + 2)``.

    ``density`` maps an ``(n, T)`` array of blocks to densities, or to
    log-densities when ``log=True``.  Densities are floored at 1e-300.
    """
    logf, _ = _log_densities(blocks, density, log)
    return float(-2.0 * logf.sum() + math.log(n_obs) * (T * p_star + 2))


def block_log_density(spec: ParSpec, noise: NoiseSpec, path: str = "closed", nodes: int = 32):
    """Log-density of residual blocks of ``spec`` with additive ``noise``.

    Returns ``(callable, path_used)``; ``path`` is ``"closed"`` or
    ``"inversion"``.  The closed form is used for mixtures only while the
    number of Gaussian terms stays below the closed-form limit, and
    inversion falls back to the closed form when ``T > 4``.
    """
    n_terms = noise.m ** (spec.p + spec.T)
    if path == "inversion" and spec.T > 4:
        path = "closed"
    if path == "closed" and not noise.is_gaussian and n_terms > CLOSED_FORM_MIXTURE_LIMIT:
        path = "inversion"
    if path == "closed":
        if noise.is_gaussian:
            cov = residual_cov_direct(spec, noise.total_variance)
            return (lambda r: charfn.gaussian_block_logpdf(cov, r)), "gaussian-closed-form"
        weights, covs = charfn.mixture_components(spec, noise)
        return (lambda r: _mixture_logpdf(weights, covs, r)), "mixture-closed-form"
    if path != "inversion":
        raise ValueError(f"unknown density path {path!r}")
    grid = charfn.inverted_block_grid(spec, noise, nodes=nodes)

    def logpdf(r):
        with np.errstate(divide="ignore"):
            return np.log(charfn.pdf_eval(grid, np.atleast_2d(r)))

    return logpdf, "cf-inversion"


def _mixture_logpdf(weights, covs, r):
    from scipy.special import logsumexp

    parts = np.stack([np.log(w) + np.atleast_1d(charfn.gaussian_block_logpdf(c, r)) for w, c in zip(weights, covs)])
    return logsumexp(parts, axis=0)


@dataclass
class BicEntry:
    p_star: int
    T_star: int
    bic: float
    density_path: str = ""
    estimation: EstimationResult | None = field(default=None, repr=False)
    floored_fraction: float = 0.0
    error: str | None = None

    @property
    def unreliable(self) -> bool:
        return self.floored_fraction > UNRELIABLE_FLOOR_FRACTION


@dataclass
class BicTable:
    entries: list

    @property
    def selected(self) -> tuple[int, int]:
        return select_optimum(self)

    def bic(self, p_star: int, T_star: int) -> float:
        for e in self.entries:
            if e.p_star == p_star and e.T_star == T_star:
                return e.bic
        raise KeyError((p_star, T_star))

    def to_rows(self) -> list[dict]:
        sel = self.selected
        return [
            {
                "p_star": e.p_star,
                "T_star": e.T_star,
                "bic": e.bic,
                "selected": int((e.p_star, e.T_star) == sel),
                "density_path": e.density_path,
            }
            for e in self.entries
        ]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["p_star", "T_star", "bic", "selected", "density_path"])
            writer.writeheader()
            writer.writerows(self.to_rows())


def select_optimum(table: BicTable) -> tuple[int, int]:
    """Arg-min of BIC; ties go to the smaller order, then the smaller period."""
    finite = [e for e in table.entries if np.isfinite(e.bic)]
    if not finite:
        raise ValueError("no finite BIC value to select from")
    best = min(finite, key=lambda e: (e.bic, e.p_star, e.T_star))
    return best.p_star, best.T_star


def _shape(noise_family) -> NoiseSpec:
    if noise_family is None or noise_family == "gaussian":
        return NoiseSpec.gaussian(1.0)
    if isinstance(noise_family, NoiseSpec):
        return noise_family
    raise ValueError(f"unknown noise family {noise_family!r}")


def fit_bic(
    y: np.ndarray,
    p_star: int,
    T_star: int,
    noise_shape: NoiseSpec,
    density_path: str = "closed",
    start: int | None = None,
    stop: int | None = None,
    n_obs: int | None = None,
) -> BicEntry:
    """Estimate one candidate model and evaluate its BIC."""
    try:
        est = estimate_eiv(y, p_star, T_star)
        resid = compute_residuals(y, est.phi_hat)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            blocks = block_residuals(resid, T_star, start=start, stop=stop)
        spec = est.to_spec().rotated(blocks.phase_offset)
        noise = noise_shape.scaled_to(est.sigma_z2_hat)
        logdens, used = block_log_density(spec, noise, density_path)
        logf, n_floor = _log_densities(blocks, logdens, log=True)
        n_obs = y.shape[0] if n_obs is None else n_obs
        bic = float(-2.0 * logf.sum() + math.log(n_obs) * (T_star * p_star + 2))
        return BicEntry(p_star, T_star, bic, used, est, n_floor / blocks.n_blocks)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return BicEntry(p_star, T_star, math.inf, density_path, None, 0.0, str(exc))


def select_order_known_T(
    traj, T: int | None = None, p_max: int = 3, noise_family=None, density_path: str = "closed"
) -> BicTable:
    """BIC for orders ``1..p_max`` at a known period."""
    y = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    T = traj.T if T is None else T
    if p_max >= T:
        raise ValueError("p_max must be smaller than T")
    shape = _shape(noise_family)
    n_full = (y.shape[0] // T) * T
    if n_full != y.shape[0]:
        warnings.warn(f"ignoring {y.shape[0] - n_full} trailing samples beyond the last full period", RuntimeWarning)
    y = y[:n_full]
    return BicTable([fit_bic(y, p, T, shape, density_path) for p in range(1, p_max + 1)])


def common_residual_range(n_obs: int, T_max: int, periods, strict: bool = True) -> tuple[int, int]:
    """1-based inclusive residual range shared by all candidate periods.

    Starts at ``T_max + 1`` and ends at the largest ``L <= n_obs`` making
    the range length a multiple of every candidate period.
    """
    lcm = reduce(lambda a, b: a * b // math.gcd(a, b), periods, 1)
    length = ((n_obs - T_max) // lcm) * lcm
    if length <= 0:
        raise ValueError("series too short for the common residual range")
    stop = T_max + length
    if strict and stop != n_obs:
        raise ValueError(
            f"length {n_obs} leaves {n_obs - stop} unused samples; choose a length with "
            f"(length - {T_max}) divisible by {lcm}"
        )
    return T_max + 1, stop


def select_joint(
    traj,
    p_max: int = 4,
    T_max: int = 5,
    noise_family=None,
    density_path: str = "closed",
    strict: bool = True,
) -> BicTable:
    """BIC over all ``(p*, T*)`` with ``p* < T*``, ``p* <= p_max``, ``T* <= T_max``."""
    y = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    shape = _shape(noise_family)
    candidates = [(p, T) for T in range(2, T_max + 1) for p in range(1, min(p_max, T - 1) + 1)]
    if not candidates:
        raise ValueError("no candidate pairs with p* < T*")
    start, stop = common_residual_range(y.shape[0], T_max, sorted({T for _, T in candidates}), strict)
    entries = [fit_bic(y, p, T, shape, density_path, start, stop, n_obs=y.shape[0]) for p, T in candidates]
    entries.sort(key=lambda e: (e.p_star, e.T_star))
    return BicTable(entries)
