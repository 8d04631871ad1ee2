"""Periodic autoregressive models observed under additive noise.

The observed series is ``Y_t = X_t + Z_t`` where ``X`` follows the periodic
recursion ``X_t = sum_i phi_i(t) X_{t-i} + xi_t`` with coefficients of period
``T`` and ``Z`` is i.i.d. zero-mean noise (Gaussian or a zero-mean Gaussian
mixture).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .rng import SeedLike, as_generator, substream

__all__ = [
    "ParSpec",
    "NoiseSpec",
    "Trajectory",
    "sample_noise",
    "excess_kurtosis",
    "simulate",
    "stability_radius",
    "empirical_snr",
    "BENCHMARK_PHI",
    "benchmark_spec",
    "MIXTURE_SHAPE",
]


@dataclass(frozen=True)
class ParSpec:
    """Periodic AR(p) model with period ``T``.

    Parameters
    ----------
    phi : array_like, shape (T, p)
        ``phi[v-1, i-1]`` is the coefficient ``phi_i(v)``.
    sigma_xi2 : float
        Variance of the Gaussian innovations.
    """

    phi: np.ndarray
    sigma_xi2: float = 1.0

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.ndim != 2 or phi.shape[0] < 1 or phi.shape[1] < 1:
            raise ValueError("phi must be a non-empty T x p matrix")
        T, p = phi.shape
        if p >= T:
            raise ValueError(
                f"order p={p} must be smaller than the period T={T}; "
                "p >= T would need KT-dimensional residual blocks, which are not supported"
            )
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        if not (np.isfinite(self.sigma_xi2) and self.sigma_xi2 > 0):
            raise ValueError("sigma_xi2 must be positive")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma_xi2", float(self.sigma_xi2))

    @property
    def T(self) -> int:
        return self.phi.shape[0]

    @property
    def p(self) -> int:
        return self.phi.shape[1]

    def coef(self, j: int, v: int) -> float:
        """Extended coefficient ``phi_j(v)`` for any integers ``j`` and ``v``.

        ``phi_0(v) = -1``, ``phi_j(v) = 0`` outside ``0..p`` and the phase
        index wraps with period ``T``.
        """
        if j == 0:
            return -1.0
        if j < 0 or j > self.p:
            return 0.0
        return float(self.phi[(v - 1) % self.T, j - 1])

    def rotated(self, shift: int) -> "ParSpec":
        """The same model re-indexed so that phase ``1 + shift`` becomes phase 1."""
        return ParSpec(np.roll(self.phi, -shift, axis=0), self.sigma_xi2)

    def to_dict(self) -> dict:
        return {"T": self.T, "p": self.p, "phi": self.phi.tolist(), "sigma_xi2": self.sigma_xi2}

    @classmethod
    def from_dict(cls, d: dict) -> "ParSpec":
        spec = cls(np.asarray(d["phi"], dtype=float), float(d.get("sigma_xi2", 1.0)))
        if "T" in d and int(d["T"]) != spec.T:
            raise ValueError(f"T={d['T']} does not match phi with {spec.T} rows")
        if "p" in d and int(d["p"]) != spec.p:
            raise ValueError(f"p={d['p']} does not match phi with {spec.p} columns")
        return spec


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian mixture; one component is plain Gaussian noise.

    A single component with variance 0 stands for the noise-free model.
    """

    weights: tuple
    variances: tuple

    def __post_init__(self):
        w = tuple(float(a) for a in np.atleast_1d(self.weights))
        s = tuple(float(v) for v in np.atleast_1d(self.variances))
        if len(w) < 1 or len(w) != len(s):
            raise ValueError("weights and variances must be non-empty and of equal length")
        if any(a < 0 or not np.isfinite(a) for a in w):
            raise ValueError("mixture weights must be nonnegative")
        if abs(sum(w) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must sum to 1, got {sum(w)!r}")
        if len(s) == 1:
            if not (np.isfinite(s[0]) and s[0] >= 0):
                raise ValueError("Gaussian noise variance must be >= 0")
        elif any(not (np.isfinite(v) and v > 0) for v in s):
            raise ValueError("mixture component variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "variances", s)

    @classmethod
    def gaussian(cls, sigma2: float) -> "NoiseSpec":
        return cls((1.0,), (sigma2,))

    @classmethod
    def mixture(cls, weights: Sequence[float], variances: Sequence[float]) -> "NoiseSpec":
        return cls(tuple(weights), tuple(variances))

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def is_gaussian(self) -> bool:
        return self.m == 1

    @property
    def total_variance(self) -> float:
        return float(np.dot(self.weights, self.variances))

    def scaled_to(self, total_variance: float) -> "NoiseSpec":
        """Same mixture shape rescaled to the requested total variance."""
        if self.is_gaussian:
            return NoiseSpec.gaussian(max(float(total_variance), 0.0))
        scale = max(float(total_variance), 0.0) / self.total_variance
        scale = max(scale, 1e-300)
        return NoiseSpec(self.weights, tuple(v * scale for v in self.variances))

    def cf(self, u):
        """Characteristic function evaluated elementwise (real-valued)."""
        u2 = np.square(np.asarray(u, dtype=float))
        out = np.zeros_like(u2)
        for a, s in zip(self.weights, self.variances):
            out += a * np.exp(-0.5 * s * u2)
        return out

    def to_dict(self) -> dict:
        if self.is_gaussian:
            return {"family": "gaussian", "sigma2": self.variances[0]}
        return {"family": "mixture", "weights": list(self.weights), "variances": list(self.variances)}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        family = d.get("family", "gaussian")
        if family == "gaussian":
            return cls.gaussian(float(d["sigma2"]))
        if family == "mixture":
            noise = cls.mixture(d["weights"], d["variances"])
            if "sigma2" in d:
                noise = noise.scaled_to(float(d["sigma2"]))
            return noise
        raise ValueError(f"unknown noise family {family!r}")


@dataclass
class Trajectory:
    """Observed series plus the optional pure-signal and noise parts."""

    values: np.ndarray
    T: int
    seed: Optional[int] = None
    x: Optional[np.ndarray] = field(default=None, repr=False)
    z: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise ValueError("trajectory values must be one-dimensional")
        if self.T < 1:
            raise ValueError("period must be positive")

    @property
    def n_cycles(self) -> int:
        return len(self.values) // self.T

    def __len__(self) -> int:
        return len(self.values)


# Coefficient matrices of the benchmark PAR(1), PAR(2), PAR(3) models with T=4.
BENCHMARK_PHI = {
    1: np.array([[-0.1208], [-0.5773], [-0.0362], [-0.3254]]),
    2: np.array([[-0.1208, -0.0878], [-0.5773, -0.9798], [-0.0362, 0.9196], [-0.3254, -0.5802]]),
    3: np.array(
        [
            [-0.1208, -0.0878, 0.6605],
            [-0.5773, -0.9798, -0.6826],
            [-0.0362, 0.9196, 0.6555],
            [-0.3254, -0.5802, -0.5313],
        ]
    ),
}

# Unit-variance, positive-excess-kurtosis mixture used as the noise shape.
MIXTURE_SHAPE = NoiseSpec.mixture((0.5, 0.5), (0.5, 1.5))


def benchmark_spec(p: int) -> ParSpec:
    return ParSpec(BENCHMARK_PHI[p], 1.0)


def sample_noise(noise: NoiseSpec, n: int, seed: SeedLike) -> np.ndarray:
    """Draw ``n`` i.i.d. noise values.

    For a mixture each draw first picks a component with probability
    ``weights[i]`` and then a zero-mean Gaussian with that variance.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = as_generator(seed)
    if noise.is_gaussian:
        return np.sqrt(noise.variances[0]) * rng.standard_normal(n)
    comp = rng.choice(noise.m, size=n, p=np.asarray(noise.weights))
    scale = np.sqrt(np.asarray(noise.variances))[comp]
    return scale * rng.standard_normal(n)


def excess_kurtosis(noise: NoiseSpec) -> float:
    w = np.asarray(noise.weights)
    s = np.asarray(noise.variances)
    if noise.is_gaussian:
        return 0.0
    return float(3.0 * np.dot(w, s**2) / np.dot(w, s) ** 2 - 3.0)


@njit(cache=True)
def _par_recursion(phi, xi):
    T, p = phi.shape
    x = np.empty_like(xi)
    for t in range(xi.shape[0]):
        v = t % T
        acc = xi[t]
        for i in range(1, p + 1):
            if t - i >= 0:
                acc += phi[v, i - 1] * x[t - i]
        x[t] = acc
    return x


def stability_radius(spec: ParSpec) -> float:
    """Spectral radius of the one-period product of companion matrices.

    Values below 1 mean the periodic recursion is stable.
    """
    p = spec.p
    prod = np.eye(p)
    for v in range(spec.T):
        comp = np.zeros((p, p))
        comp[0, :] = spec.phi[v]
        if p > 1:
            comp[1:, :-1] = np.eye(p - 1)
        prod = comp @ prod
    return float(np.max(np.abs(np.linalg.eigvals(prod))))


def simulate(
    spec: ParSpec,
    noise: NoiseSpec,
    n_cycles: int,
    burn_in: int = 100,
    seed: SeedLike = 0,
    keep_components: bool = False,
) -> Trajectory:
    """Simulate ``n_cycles`` full periods of ``Y = X + Z``.

    The recursion starts from zeros and runs ``burn_in`` whole periods
    before the retained part, so the first retained value has phase 1.
    Innovations are drawn before the noise, so zero-variance noise yields
    exactly the pure PAR path for the same seed.
    """
    if n_cycles < 2:
        raise ValueError("n_cycles must be >= 2")
    if burn_in < 0:
        raise ValueError("burn_in must be >= 0")
    radius = stability_radius(spec)
    if radius >= 1.0:
        warnings.warn(
            f"PAR recursion is not stable (one-period spectral radius {radius:.4f}); "
            "simulated values may diverge",
            RuntimeWarning,
            stacklevel=2,
        )
    rng = as_generator(seed)
    T = spec.T
    n_total = (burn_in + n_cycles) * T
    xi = np.sqrt(spec.sigma_xi2) * rng.standard_normal(n_total)
    x = _par_recursion(np.ascontiguousarray(spec.phi), xi)[burn_in * T:]
    if noise.is_gaussian and noise.variances[0] == 0.0:
        z = np.zeros_like(x)
        y = x.copy()
    else:
        z = sample_noise(noise, x.shape[0], rng)
        y = x + z
    seed_out = int(seed) if isinstance(seed, (int, np.integer)) else None
    if keep_components:
        return Trajectory(y, T, seed_out, x=x, z=z)
    return Trajectory(y, T, seed_out)


def empirical_snr(
    spec: ParSpec, noise: NoiseSpec, n_rep: int, seed: int, burn_in: int = 100
) -> np.ndarray:
    """Per-phase ratio ``Var(X_t) / Var(Z_t)`` across independent replications."""
    if n_rep < 100:
        raise ValueError("n_rep must be >= 100")
    if noise.total_variance == 0.0:
        raise ValueError("SNR is undefined for zero noise variance")
    T = spec.T
    xs = np.empty((n_rep, T))
    zs = np.empty((n_rep, T))
    for r in range(n_rep):
        traj = simulate(spec, noise, 2, burn_in, substream(seed, r), keep_components=True)
        xs[r] = traj.x[-T:]
        zs[r] = traj.z[-T:]
    return xs.var(axis=0, ddof=1) / zs.var(axis=0, ddof=1)
