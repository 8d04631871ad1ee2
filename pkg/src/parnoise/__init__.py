"""Identification and validation of periodic autoregressive models observed in additive noise."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    BENCHMARK_PHI,
    MIXTURE_SHAPE,
    NoiseSpec,
    ParSpec,
    Trajectory,
    benchmark_spec,
    simulate,
)
from .residuals import block_residuals, compute_residuals, residual_cov_direct, residual_cov_matrixform  # noqa: E402
from .charfn import empirical_cf, invert_cf_to_pdf, theoretical_cf  # noqa: E402
from .estimation import EstimationResult, estimate_eiv  # noqa: E402
from .identification import BicTable, select_joint, select_order_known_T  # noqa: E402
from .validation import GofTestResult, H0Model, TGrid, cf_distance, gof_test  # noqa: E402

__all__ = [
    "__version__",
    "BENCHMARK_PHI",
    "MIXTURE_SHAPE",
    "NoiseSpec",
    "ParSpec",
    "Trajectory",
    "benchmark_spec",
    "simulate",
    "block_residuals",
    "compute_residuals",
    "residual_cov_direct",
    "residual_cov_matrixform",
    "empirical_cf",
    "invert_cf_to_pdf",
    "theoretical_cf",
    "EstimationResult",
    "estimate_eiv",
    "BicTable",
    "select_joint",
    "select_order_known_T",
    "GofTestResult",
    "H0Model",
    "TGrid",
    "cf_distance",
    "gof_test",
]
