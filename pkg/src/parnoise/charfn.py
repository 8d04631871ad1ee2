"""Characteristic functions and densities of residual blocks.

The block ``R_n = xi_n + Z_n A`` is a linear map of independent
innovations and noise values, so its characteristic function factorises:
one innovation factor per block coordinate and one noise factor per row of
the loading matrix ``A``.  Densities follow either in closed form
(Gaussian, Gaussian-mixture) or from FFT inversion of that function.
"""
from __future__ import annotations

import csv
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .model import NoiseSpec, ParSpec
from .residuals import ResidualBlocks, build_loading_matrix, residual_cov_direct

__all__ = [
    "PdfGrid",
    "theoretical_cf",
    "empirical_cf",
    "invert_cf_to_pdf",
    "pdf_eval",
    "gaussian_block_pdf",
    "gaussian_block_logpdf",
    "mixture_components",
    "mixture_block_pdf",
    "mixture_block_logpdf",
    "default_bounds",
    "inverted_block_grid",
    "LOG_FLOOR",
    "MAX_MIXTURE_TERMS",
]

DENSITY_FLOOR = 1e-300
LOG_FLOOR = float(np.log(DENSITY_FLOOR))
MAX_MIXTURE_TERMS = 100_000
MAX_GRID_POINTS = 2**20


def theoretical_cf(spec: ParSpec, noise: NoiseSpec, t) -> np.ndarray:
    """CF of a residual block at points ``t`` of shape ``(..., T)``.

    Both innovation and noise laws are symmetric, so the result is real.
    """
    t = np.asarray(t, dtype=float)
    if t.shape[-1] != spec.T:
        raise ValueError(f"CF argument must have last dimension T={spec.T}")
    a = build_loading_matrix(spec)
    out = np.exp(-0.5 * spec.sigma_xi2 * np.sum(t * t, axis=-1))
    u = t @ a.T
    for k in range(a.shape[0]):
        out = out * noise.cf(u[..., k])
    return out


def empirical_cf(blocks, t, chunk: int = 4096) -> np.ndarray:
    """``mean_n exp(i t . r_n)`` at points ``t`` of shape ``(..., T)``."""
    b = blocks.blocks if isinstance(blocks, ResidualBlocks) else np.atleast_2d(np.asarray(blocks, dtype=float))
    t = np.asarray(t, dtype=float)
    shape = t.shape[:-1]
    flat = t.reshape(-1, t.shape[-1])
    out = np.empty(flat.shape[0], dtype=complex)
    for s in range(0, flat.shape[0], chunk):
        phase = flat[s:s + chunk] @ b.T
        out[s:s + chunk] = np.exp(1j * phase).mean(axis=1)
    return out.reshape(shape)


@dataclass(frozen=True)
class PdfGrid:
    """Density table on a tensor grid with multilinear interpolation."""

    axes: tuple
    values: np.ndarray
    normalization: float
    clipped_mass: float = 0.0
    _interp: RegularGridInterpolator = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        interp = RegularGridInterpolator(
            self.axes, self.values, method="linear", bounds_error=False, fill_value=0.0
        )
        object.__setattr__(self, "_interp", interp)

    @property
    def T(self) -> int:
        return len(self.axes)

    @property
    def bounds(self):
        return [(float(ax[0]), float(ax[-1])) for ax in self.axes]

    def to_csv(self, path) -> None:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"r{k + 1}" for k in range(self.T)] + ["density"])
            for idx in np.ndindex(self.values.shape):
                writer.writerow([m[idx] for m in mesh] + [self.values[idx]])


def default_bounds(cov, width: float = 6.0):
    sd = np.sqrt(np.diag(np.asarray(cov, dtype=float)))
    return [(-width * s, width * s) for s in sd]


def invert_cf_to_pdf(
    cf: Callable[[np.ndarray], np.ndarray],
    T: int,
    bounds: Sequence[tuple],
    nodes: int = 32,
) -> PdfGrid:
    """Recover a density on a ``nodes**T`` grid by FFT inversion of ``cf``.

    Nodes span ``bounds`` inclusively.  The CF is sampled on the reciprocal
    lattice ``t_j = (j - nodes/2) * 2 pi / (nodes * dx)``, so the discrete
    transform reproduces the inversion integral at every node.
    """
    if T < 1 or T > 4:
        raise ValueError("CF inversion supports 1 <= T <= 4")
    if nodes < 4 or nodes % 2:
        raise ValueError("node count must be an even number >= 4")
    if nodes**T > MAX_GRID_POINTS:
        raise ValueError(f"grid of {nodes}**{T} points is too large")
    if len(bounds) != T:
        raise ValueError("need one (lo, hi) pair per dimension")
    if abs(complex(np.asarray(cf(np.zeros(T))).ravel()[0]) - 1.0) > 1e-9:
        raise ValueError("cf(0) must equal 1")

    axes, t_axes, shifts = [], [], []
    k = np.arange(nodes)
    for lo, hi in bounds:
        if not hi > lo:
            raise ValueError("bounds must satisfy hi > lo")
        dx = (hi - lo) / (nodes - 1)
        dt = 2.0 * np.pi / (nodes * dx)
        tj = (k - nodes // 2) * dt
        axes.append(lo + k * dx)
        t_axes.append(tj)
        shifts.append((np.exp(-1j * tj * lo), dt / (2.0 * np.pi) * (-1.0) ** k))

    mesh = np.stack(np.meshgrid(*t_axes, indexing="ij"), axis=-1)
    vals = np.asarray(cf(mesh), dtype=complex)
    del mesh
    for d, (phase, _) in enumerate(shifts):
        shape = [1] * T
        shape[d] = nodes
        vals = vals * phase.reshape(shape)
    vals = np.fft.fftn(vals)
    for d, (_, post) in enumerate(shifts):
        shape = [1] * T
        shape[d] = nodes
        vals = vals * post.reshape(shape)
    dens = vals.real

    vmax = dens.max()
    neg = dens < 0
    if np.any(dens < -1e-6 * vmax):
        warnings.warn("CF inversion produced non-negligible negative densities", RuntimeWarning, stacklevel=2)
    cell = float(np.prod([ax[1] - ax[0] for ax in axes]))
    clipped = float(-dens[neg].sum() * cell)
    dens = np.where(neg, 0.0, dens)
    norm = float(dens.sum() * cell)
    if not 0.9 <= norm <= 1.1:
        raise ValueError(f"inverted density integrates to {norm:.4f}; grid bounds are too narrow or too wide")
    return PdfGrid(tuple(axes), dens, norm, clipped)


def pdf_eval(grid: PdfGrid, r, return_oob: bool = False):
    """Multilinear interpolation of the grid; 0 outside its bounds."""
    r = np.asarray(r, dtype=float)
    single = r.ndim == 1
    pts = np.atleast_2d(r)
    vals = np.maximum(grid._interp(pts), 0.0)
    if single:
        vals = float(vals[0])
    if return_oob:
        lo = np.array([b[0] for b in grid.bounds])
        hi = np.array([b[1] for b in grid.bounds])
        oob = int(np.sum(np.any((pts < lo) | (pts > hi), axis=1)))
        return vals, oob
    return vals


def gaussian_block_logpdf(cov, r) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    T = cov.shape[0]
    try:
        c, low = cho_factor(cov)
    except np.linalg.LinAlgError as exc:
        raise ValueError("block covariance is not positive definite") from exc
    r = np.asarray(r, dtype=float)
    flat = np.atleast_2d(r).reshape(-1, T)
    quad = np.sum(flat * cho_solve((c, low), flat.T).T, axis=1)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    out = -0.5 * (quad + logdet + T * np.log(2.0 * np.pi))
    return out.reshape(r.shape[:-1]) if r.ndim > 1 else float(out[0])


def gaussian_block_pdf(cov, r):
    return np.exp(gaussian_block_logpdf(cov, r))


def mixture_components(spec: ParSpec, noise: NoiseSpec, sigma_xi2: float | None = None):
    """Weights and covariances of the Gaussian components of a block.

    Conditioning on which mixture component generated each of the ``p+T``
    noise values leaves a Gaussian block with covariance
    ``sigma_xi2 I + A' diag(omega) A``; the weight is the product of the
    chosen component weights.
    """
    s_xi = spec.sigma_xi2 if sigma_xi2 is None else sigma_xi2
    a = build_loading_matrix(spec)
    n_rows = a.shape[0]
    if noise.m**n_rows > MAX_MIXTURE_TERMS:
        raise ValueError(f"{noise.m}**{n_rows} mixture terms exceed the limit of {MAX_MIXTURE_TERMS}")
    w = np.asarray(noise.weights)
    s = np.asarray(noise.variances)
    weights, covs = [], []
    eye = s_xi * np.eye(spec.T)
    for combo in itertools.product(range(noise.m), repeat=n_rows):
        idx = np.asarray(combo)
        weight = float(np.prod(w[idx]))
        if weight == 0.0:
            continue
        weights.append(weight)
        covs.append(eye + (a.T * s[idx]) @ a)
    return np.asarray(weights), np.asarray(covs)


def mixture_block_logpdf(spec: ParSpec, noise: NoiseSpec, r, sigma_xi2: float | None = None):
    weights, covs = mixture_components(spec, noise, sigma_xi2)
    r = np.asarray(r, dtype=float)
    parts = np.stack([np.log(wt) + np.atleast_1d(gaussian_block_logpdf(c, r)) for wt, c in zip(weights, covs)])
    out = logsumexp(parts, axis=0)
    return out.reshape(r.shape[:-1]) if r.ndim > 1 else float(out[0])


def mixture_block_pdf(spec: ParSpec, noise: NoiseSpec, r, sigma_xi2: float | None = None):
    return np.exp(mixture_block_logpdf(spec, noise, r, sigma_xi2))


def inverted_block_grid(spec: ParSpec, noise: NoiseSpec, nodes: int = 32, width: float = 6.0) -> PdfGrid:
    """Density grid of a block obtained by inverting its characteristic function."""
    cov = residual_cov_direct(spec, noise.total_variance)
    return invert_cf_to_pdf(lambda t: theoretical_cf(spec, noise, t), spec.T, default_bounds(cov, width), nodes)
