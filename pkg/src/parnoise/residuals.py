"""Residuals of a fitted PAR model and their T-dimensional blocks.

With additive noise the scalar residuals are correlated, but grouped into
consecutive blocks of one period they form (nearly) independent vectors
whose covariance is given in closed form below.
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .model import ParSpec, Trajectory

__all__ = [
    "ResidualBlocks",
    "compute_residuals",
    "block_residuals",
    "residual_cov_direct",
    "build_loading_matrix",
    "residual_cov_matrixform",
    "sample_block_cov",
    "lag1_block_crosscov",
]


@dataclass
class ResidualBlocks:
    """Residual vectors stacked row-wise.

    ``blocks[n]`` holds ``T`` consecutive residuals. ``phase_offset`` is
    the phase (0-based) of the first column; it is 0 whenever blocking
    starts at ``t = T + 1``.
    """

    blocks: np.ndarray
    T: int
    phase_offset: int = 0
    dropped: int = 0

    @property
    def n_blocks(self) -> int:
        return self.blocks.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"r{k + 1}" for k in range(self.T)])
            writer.writerows(self.blocks.tolist())


def compute_residuals(traj, phi) -> np.ndarray:
    """``R_t = Y_t - sum_i phi_i(t) Y_{t-i}`` with phase-periodic coefficients.

    Returns an array aligned with the input (index ``t - 1`` holds ``R_t``);
    the first ``p`` entries are NaN because their lags are not observed.
    """
    y = traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        phi = phi[:, None]
    T, p = phi.shape
    if isinstance(traj, Trajectory) and traj.T != T:
        raise ValueError(f"coefficient matrix has {T} rows but the trajectory period is {traj.T}")
    n = y.shape[0]
    if n < p + 1:
        raise ValueError("trajectory is shorter than p + 1")
    phase = np.arange(n) % T
    r = y.copy()
    for i in range(1, p + 1):
        r[i:] -= phi[phase[i:], i - 1] * y[:-i]
    r[:p] = np.nan
    return r


def block_residuals(residuals, T: int, start: int | None = None, stop: int | None = None) -> ResidualBlocks:
    """Cut residuals into consecutive non-overlapping ``T``-blocks.

    By default blocks start at ``t = T + 1`` (the first period is dropped).
    ``start``/``stop`` are 1-based inclusive time indices of a custom range;
    a trailing partial block is dropped with a warning.
    """
    r = np.asarray(residuals, dtype=float)
    if start is None:
        start = T + 1
    if stop is None:
        stop = r.shape[0]
    seg = r[start - 1:stop]
    n_blocks = seg.shape[0] // T
    dropped = seg.shape[0] - n_blocks * T
    if dropped:
        warnings.warn(f"dropping {dropped} trailing residuals that do not fill a block", RuntimeWarning, stacklevel=2)
    if n_blocks < 1:
        raise ValueError("not enough residuals for a single block")
    blocks = seg[: n_blocks * T].reshape(n_blocks, T)
    if not np.all(np.isfinite(blocks)):
        raise ValueError("residual blocks contain non-finite values (block range starts before t = p + 1?)")
    return ResidualBlocks(blocks, T, phase_offset=(start - 1) % T, dropped=dropped)


def residual_cov_direct(spec: ParSpec, sigma_z2: float) -> np.ndarray:
    """Block covariance from the three-case closed-form expression."""
    T, p = spec.T, spec.p
    c = spec.coef
    g = np.empty((T, T))
    for k in range(1, T + 1):
        g[k - 1, k - 1] = spec.sigma_xi2 + sigma_z2 * sum(c(j, k) ** 2 for j in range(p + 1))
        for l in range(k + 1, T + 1):
            val = sigma_z2 * sum(c(j, k) * c(j + l - k, l) for j in range(p + k - l + 1))
            g[k - 1, l - 1] = g[l - 1, k - 1] = val
    return g


def build_loading_matrix(spec: ParSpec) -> np.ndarray:
    """``(p+T) x T`` matrix ``A`` with ``R_n = xi_n + Z_n A``.

    Row ``k`` multiplies ``Z_{nT+T+1-k}``; ``a_kl = -phi_{k+l-T-1}(l)``.
    """
    T, p = spec.T, spec.p
    a = np.zeros((p + T, T))
    for k in range(1, p + T + 1):
        for l in range(1, T + 1):
            a[k - 1, l - 1] = -spec.coef(k + l - T - 1, l)
    return a


def residual_cov_matrixform(spec: ParSpec, sigma_z2: float) -> np.ndarray:
    a = build_loading_matrix(spec)
    return spec.sigma_xi2 * np.eye(spec.T) + sigma_z2 * (a.T @ a)


def sample_block_cov(blocks: ResidualBlocks) -> np.ndarray:
    """Zero-mean sample covariance of the block rows (divisor = block count)."""
    b = blocks.blocks if isinstance(blocks, ResidualBlocks) else np.asarray(blocks)
    if b.shape[0] < 2:
        raise ValueError("need at least 2 blocks")
    return b.T @ b / b.shape[0]


def lag1_block_crosscov(blocks: ResidualBlocks) -> np.ndarray:
    """Zero-mean sample cross-covariance between consecutive blocks."""
    b = blocks.blocks if isinstance(blocks, ResidualBlocks) else np.asarray(blocks)
    if b.shape[0] < 2:
        raise ValueError("need at least 2 blocks")
    return b[1:].T @ b[:-1] / (b.shape[0] - 1)
