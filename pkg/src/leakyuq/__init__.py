"""Uncertainty propagation through leaky-ReLU networks by linearization.

A uniform input perturbation ``f = mu + z`` is pushed through the tangent
model ``g ~= m + Q z``; marginals follow from sinc-product inversion, the
joint law from a Gaussian copula, and the exact linearization error from a
layer recursion with a priori bounds.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    CapabilityError,
    DegenerateLawError,
    DimensionError,
    FactorizationError,
    LeakyUQError,
    ParseError,
    TrainingError,
    ValidationError,
)
from .network import FeedForwardNet, forward, init_net  # noqa: E402
from .linearization import SensitivityModel, linear_predict, sensitivity  # noqa: E402
from .marginals import MarginalLaw, MomentSummary, marginal_laws, moments  # noqa: E402
from .copula import CopulaModel, build_copula  # noqa: E402
from .error_analysis import deterministic_bound, error_statistics, exact_error  # noqa: E402
from .montecarlo import Ensemble, push_forward, run_ensemble, sample_perturbations  # noqa: E402
from .spectral import apply_operator, generate_dataset, gll_grid  # noqa: E402
from .training import TrainConfig, train_adam  # noqa: E402

__all__ = [
    "__version__",
    "CapabilityError",
    "DegenerateLawError",
    "DimensionError",
    "FactorizationError",
    "LeakyUQError",
    "ParseError",
    "TrainingError",
    "ValidationError",
    "FeedForwardNet",
    "forward",
    "init_net",
    "SensitivityModel",
    "linear_predict",
    "sensitivity",
    "MarginalLaw",
    "MomentSummary",
    "marginal_laws",
    "moments",
    "CopulaModel",
    "build_copula",
    "deterministic_bound",
    "error_statistics",
    "exact_error",
    "Ensemble",
    "push_forward",
    "run_ensemble",
    "sample_perturbations",
    "apply_operator",
    "generate_dataset",
    "gll_grid",
    "TrainConfig",
    "train_adam",
]
