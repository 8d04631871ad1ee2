"""Errors-in-variables estimation of a PAR model observed with white noise.

Low-order periodic Yule-Walker equations are biased by the noise variance
``sigma_z2`` on their diagonal, while high-order equations (lags beyond
``p``) are not.  The noise variance is chosen so that the coefficients
solved from the bias-corrected low-order system also satisfy the
high-order system as closely as possible; the search is confined to
``[0, zeta]`` where ``zeta`` is the smallest eigenvalue among the per-phase
autocovariance matrices ``G_v``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import ParSpec, Trajectory

__all__ = [
    "PacvfTable",
    "EstimationResult",
    "empirical_pacvf",
    "build_low_order_yw",
    "build_high_order_yw",
    "zeta_bound",
    "eiv_cost",
    "estimate_eiv",
]

GRID_POINTS = 200
GOLDEN_ITERATIONS = 60
ILL_POSED_COND = 1e10
SIGMA_XI2_FLOOR = 1e-8


def _values(traj) -> np.ndarray:
    return traj.values if isinstance(traj, Trajectory) else np.asarray(traj, dtype=float)


def empirical_pacvf(traj, T: int, w: int, k: int) -> float:
    """Sample periodic autocovariance ``(1/N) sum_n y_{nT+w} y_{nT+w-k}``.

    ``n`` runs over every index keeping both times inside ``1..len(y)``;
    ``N = len(y) / T``.  Negative lags are allowed.
    """
    y = _values(traj)
    n_obs = y.shape[0]
    lo = max(math.ceil((1 - w) / T), math.ceil((1 - (w - k)) / T))
    hi = min(math.floor((n_obs - w) / T), math.floor((n_obs - (w - k)) / T))
    if hi < lo:
        warnings.warn(f"empty summation range for pacvf(w={w}, k={k})", RuntimeWarning, stacklevel=2)
        return 0.0
    t = w + T * np.arange(lo, hi + 1)
    return float(np.dot(y[t - 1], y[t - k - 1]) / (n_obs / T))


@dataclass
class PacvfTable:
    """Sample periodic autocovariances for phases ``1..T`` and lags ``k_min..k_max``."""

    values: np.ndarray
    T: int
    k_min: int
    k_max: int
    n_obs: int

    @classmethod
    def from_series(cls, traj, T: int, k_max: int, k_min: int = 0) -> "PacvfTable":
        y = _values(traj)
        vals = np.empty((T, k_max - k_min + 1))
        for w in range(1, T + 1):
            for k in range(k_min, k_max + 1):
                vals[w - 1, k - k_min] = empirical_pacvf(y, T, w, k)
        return cls(vals, T, k_min, k_max, y.shape[0])

    def __call__(self, w: int, k: int) -> float:
        if not self.k_min <= k <= self.k_max:
            raise ValueError(f"lag {k} outside the tabulated range {self.k_min}..{self.k_max}")
        return float(self.values[(w - 1) % self.T, k - self.k_min])


def _table_for(traj, T: int, p: int, s: int) -> PacvfTable:
    return PacvfTable.from_series(traj, T, k_max=p + s, k_min=min(0, 1 - p))


def build_low_order_yw(pacvf: PacvfTable, v: int, p: int):
    """``(Gamma_v, gamma_v)`` with ``Gamma_v[i, j] = g(v-i, j-i)`` and ``gamma_v[i] = g(v, i)``."""
    gam = np.array([[pacvf(v - i, j - i) for j in range(1, p + 1)] for i in range(1, p + 1)])
    vec = np.array([pacvf(v, i) for i in range(1, p + 1)])
    return gam, vec


def build_high_order_yw(pacvf: PacvfTable, v: int, p: int, s: int):
    """``s x p`` matrix ``g(v-j, p+i-j)`` and vector ``g(v, p+1..p+s)``."""
    if s < p:
        raise ValueError("s must be >= p")
    gam = np.array([[pacvf(v - j, p + i - j) for j in range(1, p + 1)] for i in range(1, s + 1)])
    vec = np.array([pacvf(v, p + i) for i in range(1, s + 1)])
    return gam, vec


def _g_matrix(pacvf: PacvfTable, v: int, p: int) -> np.ndarray:
    gam, vec = build_low_order_yw(pacvf, v, p)
    g = np.empty((p + 1, p + 1))
    g[0, 0] = pacvf(v, 0)
    g[0, 1:] = vec
    g[1:, 0] = vec
    g[1:, 1:] = gam
    return g


def zeta_bound(pacvf: PacvfTable, p: int) -> float:
    """Upper end of the noise-variance search interval (clipped at 0)."""
    return max(_raw_zeta(pacvf, p), 0.0)


def _raw_zeta(pacvf: PacvfTable, p: int) -> float:
    return float(
        min(np.linalg.eigvalsh(0.5 * (g + g.T))[0] for g in (_g_matrix(pacvf, v, p) for v in range(1, pacvf.T + 1)))
    )


class _Systems:
    """Stacked per-phase Yule-Walker systems for vectorised cost evaluation."""

    def __init__(self, pacvf: PacvfTable, p: int, s: int):
        T = pacvf.T
        low = [build_low_order_yw(pacvf, v, p) for v in range(1, T + 1)]
        high = [build_high_order_yw(pacvf, v, p, s) for v in range(1, T + 1)]
        self.p = p
        self.gam = np.stack([g for g, _ in low])
        self.vec = np.stack([g for _, g in low])
        self.hgam = np.stack([g for g, _ in high])
        self.hvec = np.stack([g for _, g in high])
        self.g0 = np.array([pacvf(v, 0) for v in range(1, T + 1)])

    def cost(self, sigma2) -> np.ndarray:
        sig = np.atleast_1d(np.asarray(sigma2, dtype=float))
        mats = self.gam[None] - sig[:, None, None, None] * np.eye(self.p)
        rhs = np.broadcast_to(self.vec[None, :, :, None], mats.shape[:-1] + (1,))
        try:
            phi = np.linalg.solve(mats, rhs)[..., 0]
        except np.linalg.LinAlgError:
            out = np.empty(sig.shape[0])
            for i, s2 in enumerate(sig):
                out[i] = self.cost(s2)[0] if _all_regular(mats[i]) else np.inf
            return out
        resid = np.einsum("tij,gtj->gti", self.hgam, phi) - self.hvec[None]
        out = np.sum(resid**2, axis=(1, 2))
        out[~np.isfinite(out)] = np.inf
        return out

    def slope(self, sigma2: float) -> float:
        """Derivative of the cost; ``dphi/dsigma2 = (Gamma - sigma2 I)^{-1} phi``."""
        mats = self.gam - sigma2 * np.eye(self.p)
        phi = np.linalg.solve(mats, self.vec[..., None])
        dphi = np.linalg.solve(mats, phi)[..., 0]
        resid = np.einsum("tij,tj->ti", self.hgam, phi[..., 0]) - self.hvec
        return float(2.0 * np.sum(resid * np.einsum("tij,tj->ti", self.hgam, dphi)))


def _all_regular(mats) -> bool:
    return all(np.linalg.matrix_rank(m) == m.shape[0] for m in mats)


def eiv_cost(pacvf: PacvfTable, p: int, s: int, sigma_z2_star: float) -> float:
    """Sum over phases of the squared high-order Yule-Walker misfit.

    Returns ``inf`` where a bias-corrected low-order matrix is singular.
    """
    return float(_Systems(pacvf, p, s).cost(sigma_z2_star)[0])


def _golden(f, a: float, b: float, iterations: int = GOLDEN_ITERATIONS):
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iterations):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def _polish(systems: _Systems, x: float, lo: float, hi: float, zeta: float) -> float:
    # Near its minimum the cost is flat to ~1e-7 relative, so comparing cost
    # values pins the minimiser down only to ~sqrt(eps).  The derivative
    # crosses zero linearly there, and locating that crossing is accurate
    # to rounding level (this is what makes the estimate scale-equivariant).
    try:
        with np.errstate(all="ignore"):
            s_lo, s_hi = systems.slope(lo), systems.slope(hi)
            if not (np.isfinite(s_lo) and np.isfinite(s_hi)):
                return x
            if s_lo >= 0 and lo == 0.0:
                return 0.0  # cost increasing from the left end of [0, zeta]
            if s_hi <= 0 and hi == zeta:
                return zeta
            if s_lo > 0 or s_hi < 0:
                return x
            if s_lo == 0.0:
                return lo
            if s_hi == 0.0:
                return hi
            root = brentq(systems.slope, lo, hi, xtol=1e-15 * zeta, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (np.linalg.LinAlgError, ValueError, RuntimeError):
        return x
    return root if systems.cost(root)[0] <= systems.cost(x)[0] * (1 + 1e-12) else x


@dataclass
class EstimationResult:
    phi_hat: np.ndarray
    sigma_z2_hat: float
    sigma_xi2_hat_per_phase: np.ndarray
    sigma_xi2_hat: float
    zeta: float
    cost_curve: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.phi_hat.shape[0]

    @property
    def p(self) -> int:
        return self.phi_hat.shape[1]

    def to_spec(self) -> ParSpec:
        """Fitted model with the innovation variance clamped to a positive floor."""
        return ParSpec(self.phi_hat, max(self.sigma_xi2_hat, SIGMA_XI2_FLOOR))

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "p": self.p,
            "phi_hat": self.phi_hat.tolist(),
            "sigma_z2_hat": self.sigma_z2_hat,
            "sigma_xi2_hat_per_phase": self.sigma_xi2_hat_per_phase.tolist(),
            "sigma_xi2_hat": self.sigma_xi2_hat,
            "zeta": self.zeta,
            "cost_curve": [[float(a), float(b) if np.isfinite(b) else None] for a, b in self.cost_curve],
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def estimate_eiv(traj, p: int, T: int | None = None, s: int | None = None) -> EstimationResult:
    """Fit PAR(p) coefficients, innovation and noise variances.

    Parameters
    ----------
    traj : Trajectory or array_like
        Observed series, first value at phase 1.
    p : int
        Model order, ``1 <= p < T``.
    T : int, optional
        Period; taken from ``traj`` when omitted.
    s : int, optional
        Number of high-order equations per phase (default ``p``).

    Notes
    -----
    The cost is first evaluated on 200 evenly spaced points of ``[0, zeta]``
    and then refined by golden-section search inside the bracket around
    the best grid point; the stationary point is finally located as a root
    of the analytic derivative of the cost, which keeps the estimate
    scale-equivariant to rounding level.
    """
    if T is None:
        T = traj.T
    s = p if s is None else s
    if not 1 <= p < T:
        raise ValueError(f"need 1 <= p < T, got p={p}, T={T}")
    if s < p:
        raise ValueError("s must be >= p")
    y = _values(traj)
    if y.shape[0] // T < p + s + 1:
        raise ValueError(f"series of length {y.shape[0]} is too short: need at least {p + s + 1} full periods")
    if y.shape[0] < 10 * T * p:
        warnings.warn("series is short for the requested order and period", RuntimeWarning, stacklevel=2)

    pacvf = _table_for(y, T, p, s)
    systems = _Systems(pacvf, p, s)
    raw_zeta = _raw_zeta(pacvf, p)
    zeta = max(raw_zeta, 0.0)
    scale = float(np.mean(np.abs(systems.g0))) if np.any(systems.g0) else 0.0
    diagnostics = {"degenerate_bound": False, "raw_zeta": raw_zeta}

    if zeta <= 1e-10 * scale or scale == 0.0:
        diagnostics["degenerate_bound"] = True
        sigma_z2 = 0.0
        grid = np.array([0.0])
        curve = np.column_stack([grid, systems.cost(grid)])
    else:
        grid = np.linspace(0.0, zeta, GRID_POINTS)
        costs = systems.cost(grid)
        curve = np.column_stack([grid, costs])
        finite = np.isfinite(costs)
        if not np.any(finite):
            diagnostics["all_costs_infinite"] = True
            sigma_z2 = 0.0
        else:
            i = int(np.argmin(np.where(finite, costs, np.inf)))
            lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, GRID_POINTS - 1)]
            cand, fcand = _golden(lambda x: float(systems.cost(x)[0]), lo, hi)
            sigma_z2 = cand if fcand < costs[i] else float(grid[i])
            sigma_z2 = _polish(systems, sigma_z2, lo, hi, zeta)

    eye = np.eye(p)
    phi_hat = np.empty((T, p))
    conds = []
    ill = []
    for v in range(T):
        mat = systems.gam[v] - sigma_z2 * eye
        cond = float(np.linalg.cond(mat))
        conds.append(cond)
        if not np.isfinite(cond) or cond > ILL_POSED_COND:
            ill.append(v + 1)
        try:
            phi_hat[v] = np.linalg.solve(mat, systems.vec[v])
        except np.linalg.LinAlgError:
            phi_hat[v] = np.linalg.lstsq(mat, systems.vec[v], rcond=None)[0]
    xi_v = systems.g0 - np.einsum("vi,vi->v", phi_hat, systems.vec) - sigma_z2
    diagnostics.update(
        {
            "condition_numbers": conds,
            "ill_posed_phases": ill,
            "negative_sigma_xi2_phases": [int(v + 1) for v in np.flatnonzero(xi_v < 0)],
            "trailing_samples": int(y.shape[0] % T),
        }
    )
    return EstimationResult(
        phi_hat=phi_hat,
        sigma_z2_hat=float(sigma_z2),
        sigma_xi2_hat_per_phase=xi_v,
        sigma_xi2_hat=float(np.mean(xi_v)),
        zeta=zeta,
        cost_curve=curve,
        diagnostics=diagnostics,
    )
