"""Goodness-of-fit test for residual blocks based on characteristic functions.

The statistic is the largest modulus difference between the empirical CF
of the residual blocks and the CF implied by the null model, taken over a
regular lattice of arguments.  Its null distribution is obtained by
simulating the null model and repeating the computation.
"""
from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .charfn import theoretical_cf
from .estimation import EstimationResult
from .model import NoiseSpec, ParSpec, Trajectory, simulate
from .residuals import ResidualBlocks, block_residuals, compute_residuals, lag1_block_crosscov
from .rng import substream

__all__ = [
    "TGrid",
    "H0Model",
    "GofTestResult",
    "IndependenceReport",
    "cf_distance",
    "gof_test",
    "block_independence_check",
]

MAX_LATTICE_POINTS = 20_000_000
MIN_BOOT = 20


@dataclass(frozen=True)
class TGrid:
    """Square lattice ``{-b, -b+h, ..., b}^T`` of CF arguments."""

    bound: float = 10.0
    step: float = 0.1
    dim: int = 2

    def __post_init__(self):
        if not (self.bound > 0 and self.step > 0 and self.dim >= 1):
            raise ValueError("lattice needs bound > 0, step > 0 and dim >= 1")

    @property
    def axis(self) -> np.ndarray:
        k = int(round(self.bound / self.step + 1e-9))
        return self.step * np.arange(-k, k + 1)

    @property
    def half_axis(self) -> np.ndarray:
        k = int(round(self.bound / self.step + 1e-9))
        return self.step * np.arange(0, k + 1)

    @property
    def n_points(self) -> int:
        return self.axis.size**self.dim

    def with_dim(self, dim: int) -> "TGrid":
        return TGrid(self.bound, self.step, dim)

    def points(self, half: bool = False) -> np.ndarray:
        axes = [self.half_axis if (half and d == 0) else self.axis for d in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class H0Model:
    """Fully specified null model: PAR part plus noise law."""

    spec: ParSpec
    noise: NoiseSpec

    @classmethod
    def from_fit(cls, fit: EstimationResult, noise_shape: NoiseSpec | None = None) -> "H0Model":
        shape = NoiseSpec.gaussian(1.0) if noise_shape is None else noise_shape
        return cls(fit.to_spec(), shape.scaled_to(fit.sigma_z2_hat))

    def to_dict(self) -> dict:
        return {"par": self.spec.to_dict(), "noise": self.noise.to_dict()}


def _lattice_exponentials(x: np.ndarray, step: float, k: int, half: bool) -> np.ndarray:
    # exp(i j h x) for j = 0..k (or -k..k), rows indexed by j; powers by doubling
    pos = np.empty((k + 1, x.shape[0]), dtype=complex)
    pos[0] = 1.0
    filled = 1
    if k:
        pos[1] = np.exp(1j * step * x)
        filled = 2
    while filled <= k:
        m = min(filled, k + 1 - filled)
        pos[filled:filled + m] = pos[:m] * pos[filled - 1] * pos[1]
        filled += m
    if half:
        return pos
    return np.concatenate([np.conj(pos[:0:-1]), pos], axis=0)


def _ecf_on_lattice(b: np.ndarray, grid: TGrid) -> np.ndarray:
    """Empirical CF over the half lattice (first coordinate >= 0)."""
    n, T = b.shape
    k = grid.half_axis.size - 1
    ex = [_lattice_exponentials(b[:, d], grid.step, k, half=(d == 0)) for d in range(T)]
    if T == 1:
        return ex[0].mean(axis=1)
    if T == 2:
        return (ex[0] @ ex[1].T) / n
    out = np.empty(tuple(e.shape[0] for e in ex), dtype=complex)
    for idx in np.ndindex(*out.shape[:-2]):
        w = np.ones(n, dtype=complex)
        for d, j in enumerate(idx):
            w = w * ex[d][j]
        out[idx] = ((ex[T - 2] * w) @ ex[T - 1].T) / n
    return out


def _theoretical_on_lattice(spec: ParSpec, noise: NoiseSpec, grid: TGrid) -> np.ndarray:
    return theoretical_cf(spec, noise, grid.points(half=True))


def _check_lattice(grid: TGrid, T: int) -> None:
    if grid.dim != T:
        raise ValueError(f"lattice dimension {grid.dim} does not match block dimension {T}")
    if grid.half_axis.size * grid.axis.size ** (T - 1) > MAX_LATTICE_POINTS:
        raise ValueError("CF lattice is too large; increase the step or reduce the bound")


def _distance(blocks: np.ndarray, cf_lattice: np.ndarray, grid: TGrid) -> float:
    return float(np.max(np.abs(_ecf_on_lattice(blocks, grid) - cf_lattice)))


def cf_distance(blocks, spec: ParSpec, noise: NoiseSpec, grid: TGrid) -> float:
    """Max over the lattice of ``|empirical CF - theoretical CF|``.

    Both CFs are Hermitian, so only the half lattice with a nonnegative
    first coordinate is evaluated; the maximum is the same.
    """
    b = blocks.blocks if isinstance(blocks, ResidualBlocks) else np.asarray(blocks, dtype=float)
    _check_lattice(grid, b.shape[1])
    if isinstance(blocks, ResidualBlocks) and blocks.phase_offset:
        spec = spec.rotated(blocks.phase_offset)
    return _distance(b, _theoretical_on_lattice(spec, noise, grid), grid)


@dataclass
class GofTestResult:
    d_observed: float
    p_value: float
    m_boot: int
    d_samples: np.ndarray = field(repr=False)
    seed: int
    grid: TGrid
    h0: H0Model = field(repr=False)
    n_excluded: int = 0

    def reject(self, alpha: float) -> bool:
        """Reject when the p-value is below ``alpha``; a level-1 test always rejects."""
        return alpha >= 1.0 or self.p_value < alpha

    def to_dict(self) -> dict:
        return {
            "d_observed": self.d_observed,
            "p_value": self.p_value,
            "m_boot": self.m_boot,
            "n_excluded": self.n_excluded,
            "seed": self.seed,
            "grid": {"bound": self.grid.bound, "step": self.grid.step, "dim": self.grid.dim},
            "h0": self.h0.to_dict(),
            "d_samples": [float(d) for d in self.d_samples],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _boot_statistics(h0: H0Model, n_cycles: int, grid: TGrid, cf_lattice: np.ndarray, seed: int, indices) -> list:
    out = []
    phi = h0.spec.phi
    T = h0.spec.T
    for i in indices:
        traj = simulate(h0.spec, h0.noise, n_cycles, seed=substream(seed, i))
        blocks = block_residuals(compute_residuals(traj.values, phi), T)
        out.append(_distance(blocks.blocks, cf_lattice, grid))
    return out


def gof_test(
    traj,
    h0,
    m_boot: int = 200,
    grid: TGrid | None = None,
    seed: int = 0,
    noise_shape: NoiseSpec | None = None,
    threads: int = 1,
) -> GofTestResult:
    """Monte Carlo CF-distance test of the residual distribution.

    Parameters
    ----------
    traj : Trajectory or array_like
        Observed series starting at phase 1.
    h0 : H0Model or EstimationResult
        Null model.  A fit result is turned into a null model using
        ``noise_shape`` (Gaussian by default) scaled to the fitted noise
        variance, which makes the test a parametric bootstrap.
    m_boot : int
        Number of simulated series from the null model (at least 20).
    grid : TGrid, optional
        CF argument lattice; defaults to ``[-10, 10]^T`` with step 0.1.
    seed : int
        Master seed; replication ``i`` uses its own substream.
    threads : int
        Worker processes for the bootstrap; results do not depend on it.
    """
    if isinstance(h0, EstimationResult):
        h0 = H0Model.from_fit(h0, noise_shape)
    if m_boot < MIN_BOOT:
        raise ValueError(f"m_boot must be at least {MIN_BOOT}")
    spec, T = h0.spec, h0.spec.T
    y = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    n_cycles = y.shape[0] // T
    if n_cycles < 3:
        raise ValueError("series too short for the test")
    y = y[: n_cycles * T]
    grid = TGrid(dim=T) if grid is None else grid
    _check_lattice(grid, T)

    cf_lattice = _theoretical_on_lattice(spec, h0.noise, grid)
    blocks = block_residuals(compute_residuals(y, spec.phi), T)
    d_obs = _distance(blocks.blocks, cf_lattice, grid)

    indices = list(range(m_boot))
    if threads > 1:
        chunks = [indices[k::threads] for k in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_boot_statistics, h0, n_cycles, grid, cf_lattice, seed, c) for c in chunks]
            parts = [f.result() for f in futures]
        d_samples = np.empty(m_boot)
        for c, vals in zip(chunks, parts):
            d_samples[c] = vals
    else:
        d_samples = np.asarray(_boot_statistics(h0, n_cycles, grid, cf_lattice, seed, indices))

    finite = np.isfinite(d_samples)
    n_excluded = int(np.sum(~finite))
    if n_excluded:
        warnings.warn(f"{n_excluded} bootstrap statistics were not finite and are excluded", RuntimeWarning)
    valid = d_samples[finite]
    p_value = float(np.sum(valid >= d_obs)) / valid.size
    return GofTestResult(d_obs, p_value, int(valid.size), d_samples, int(seed), grid, h0, n_excluded)


@dataclass
class IndependenceReport:
    crosscorr: np.ndarray
    threshold: float
    flags: np.ndarray
    n_blocks: int

    @property
    def any_flag(self) -> bool:
        return bool(self.flags.any())


def block_independence_check(blocks) -> IndependenceReport:
    """Lag-1 cross-correlation between consecutive blocks.

    Entries whose magnitude exceeds ``4 / sqrt(n_blocks)`` are flagged.
    This is a sanity check, not a formal independence test.
    """
    b = blocks.blocks if isinstance(blocks, ResidualBlocks) else np.asarray(blocks, dtype=float)
    n = b.shape[0]
    if n < 30:
        raise ValueError("need at least 30 blocks")
    cross = lag1_block_crosscov(b)
    sd = np.sqrt(np.mean(b * b, axis=0))
    sd = np.where(sd > 0, sd, 1.0)
    corr = cross / np.outer(sd, sd)
    thr = 4.0 / math.sqrt(n)
    return IndependenceReport(corr, thr, np.abs(corr) > thr, n)
