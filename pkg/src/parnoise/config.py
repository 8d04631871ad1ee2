"""Experiment configuration files (TOML).

Example::

    [experiment]
    kind = "order-id"
    seed = 1
    replications = 200
    n_obs = 1200

    [model]
    benchmark = 1          # or: phi = [[...], ...]
    sigma_xi2 = 1.0

    [noise]
    family = "gaussian"
    sigma2 = 0.2

    [identification]
    p_max = 3
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import MIXTURE_SHAPE, NoiseSpec, ParSpec, benchmark_spec
from .validation import TGrid

KINDS = ("order-id", "joint-id", "power", "single-fit", "simulate")
DENSITY_PATHS = ("closed", "inversion")

_SCHEMA = {
    "experiment": {"kind", "seed", "replications", "n_obs", "burn_in", "threads", "out"},
    "model": {"benchmark", "phi", "sigma_xi2"},
    "noise": {"family", "sigma2", "weights", "variances"},
    "identification": {"p", "p_max", "T_max", "density_path"},
    "validation": {"bound", "step", "m_boot", "alpha", "variances", "h0"},
    "data": {"path", "T"},
}


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    spec: Optional[ParSpec] = None
    noise: Optional[NoiseSpec] = None
    replications: int = 200
    n_obs: int = 1200
    burn_in: int = 100
    threads: int = 1
    out: Optional[str] = None
    p: Optional[int] = None
    p_max: int = 3
    T_max: int = 5
    density_path: str = "closed"
    grid_bound: float = 10.0
    grid_step: float = 0.1
    m_boot: int = 200
    alpha: float = 0.05
    variances: list = field(default_factory=list)
    h0: str = "known"
    data_path: Optional[str] = None
    data_T: Optional[int] = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def noise_shape(self) -> NoiseSpec:
        """Unit-variance shape of the configured noise family."""
        if self.noise is None or self.noise.is_gaussian:
            return NoiseSpec.gaussian(1.0)
        return self.noise.scaled_to(1.0)

    @property
    def T(self) -> int:
        if self.spec is not None:
            return self.spec.T
        if self.data_T is not None:
            return self.data_T
        raise ConfigError("period T is unknown: give [model] or [data].T")

    def grid(self, dim: int) -> TGrid:
        return TGrid(self.grid_bound, self.grid_step, dim)

    def echo(self) -> dict:
        return self.raw


def _parse_noise(sec: dict) -> NoiseSpec:
    family = sec.get("family", "gaussian")
    if "sigma2" not in sec:
        raise ConfigError("noise.sigma2 is required")
    sigma2 = float(sec["sigma2"])
    if family == "gaussian":
        return NoiseSpec.gaussian(sigma2)
    if family == "mixture":
        if "weights" in sec or "variances" in sec:
            if not ("weights" in sec and "variances" in sec):
                raise ConfigError("mixture noise needs both noise.weights and noise.variances")
            shape = NoiseSpec.mixture(sec["weights"], sec["variances"])
        else:
            shape = MIXTURE_SHAPE
        return shape.scaled_to(sigma2)
    raise ConfigError(f"noise.family must be 'gaussian' or 'mixture', got {family!r}")


def _parse_model(sec: dict) -> ParSpec:
    if ("benchmark" in sec) == ("phi" in sec):
        raise ConfigError("model needs exactly one of model.benchmark or model.phi")
    sigma_xi2 = float(sec.get("sigma_xi2", 1.0))
    if "benchmark" in sec:
        p = int(sec["benchmark"])
        if p not in (1, 2, 3):
            raise ConfigError("model.benchmark must be 1, 2 or 3")
        return ParSpec(benchmark_spec(p).phi, sigma_xi2)
    return ParSpec(sec["phi"], sigma_xi2)


def parse_config(doc: dict) -> ExperimentConfig:
    """Validate a parsed TOML document and build the configuration."""
    for name, sec in doc.items():
        if name not in _SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        if not isinstance(sec, dict):
            raise ConfigError(f"[{name}] must be a table")
        unknown = set(sec) - _SCHEMA[name]
        if unknown:
            raise ConfigError(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    exp = doc.get("experiment", {})
    kind = exp.get("kind", "single-fit")
    if kind not in KINDS:
        raise ConfigError(f"experiment.kind must be one of {KINDS}, got {kind!r}")
    if "seed" not in exp:
        raise ConfigError("experiment.seed is required")
    try:
        cfg = ExperimentConfig(kind=kind, seed=int(exp["seed"]), raw=doc)
        if cfg.seed < 0:
            raise ConfigError("experiment.seed must be nonnegative")
        cfg.replications = int(exp.get("replications", cfg.replications))
        # joint selection needs (length - T_max) divisible by every candidate period
        cfg.n_obs = int(exp.get("n_obs", 1205 if kind == "joint-id" else cfg.n_obs))
        cfg.burn_in = int(exp.get("burn_in", cfg.burn_in))
        cfg.threads = int(exp.get("threads", cfg.threads))
        cfg.out = exp.get("out")
        if "model" in doc:
            cfg.spec = _parse_model(doc["model"])
        if "noise" in doc:
            cfg.noise = _parse_noise(doc["noise"])
        ident = doc.get("identification", {})
        cfg.p = int(ident["p"]) if "p" in ident else None
        cfg.p_max = int(ident.get("p_max", cfg.p_max))
        cfg.T_max = int(ident.get("T_max", cfg.T_max))
        cfg.density_path = ident.get("density_path", cfg.density_path)
        val = doc.get("validation", {})
        cfg.grid_bound = float(val.get("bound", cfg.grid_bound))
        cfg.grid_step = float(val.get("step", cfg.grid_step))
        cfg.m_boot = int(val.get("m_boot", cfg.m_boot))
        cfg.alpha = float(val.get("alpha", cfg.alpha))
        cfg.variances = [float(v) for v in val.get("variances", [])]
        cfg.h0 = val.get("h0", cfg.h0)
        data = doc.get("data", {})
        cfg.data_path = data.get("path")
        cfg.data_T = int(data["T"]) if "T" in data else None
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    _check(cfg)
    return cfg


def _check(cfg: ExperimentConfig) -> None:
    if cfg.replications < 1:
        raise ConfigError("experiment.replications must be >= 1")
    if cfg.threads < 1:
        raise ConfigError("experiment.threads must be >= 1")
    if cfg.density_path not in DENSITY_PATHS:
        raise ConfigError(f"identification.density_path must be one of {DENSITY_PATHS}")
    if cfg.h0 not in ("known", "fitted"):
        raise ConfigError("validation.h0 must be 'known' or 'fitted'")
    if cfg.m_boot < 20:
        raise ConfigError("validation.m_boot must be >= 20")
    if not 0.0 <= cfg.alpha <= 1.0:
        raise ConfigError("validation.alpha must lie in [0, 1]")
    needs_model = {"order-id", "joint-id", "power", "simulate"}
    if cfg.kind in needs_model and (cfg.spec is None or cfg.noise is None):
        raise ConfigError(f"experiment kind {cfg.kind!r} needs [model] and [noise] sections")
    if cfg.kind == "single-fit" and cfg.data_path is None and (cfg.spec is None or cfg.noise is None):
        raise ConfigError("single-fit needs either [data].path or [model] and [noise]")
    if cfg.kind == "power" and not cfg.variances:
        raise ConfigError("power experiments need validation.variances")
    if cfg.kind == "order-id" and cfg.p_max >= cfg.spec.T:
        raise ConfigError("identification.p_max must be smaller than T")
    if cfg.kind == "joint-id" and cfg.T_max < 2:
        raise ConfigError("identification.T_max must be >= 2")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return parse_config(doc)
