"""Coupled two-cell Brusselator: simulation, dissipation diagnostics and dimension bounds."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BrusselatorError,
    ConfigError,
    DegeneracyError,
    DivergenceError,
    InvalidArgumentError,
    NumericalError,
)
from .discretization import Grid, build_grid, estimate_embedding_constant, sine_mode  # noqa: E402
from .fields import FieldQuartet, ModelParams, grouping, norms, tail_mass, masked_grad_sq  # noqa: E402
from .dynamics import StepperConfig, Trajectory, initial_data, simulate, simulate_single_cell  # noqa: E402
from .diagnostics import absorbing_constants  # noqa: E402
from .variational import DimensionInputs, dimension_bound, trace_qm  # noqa: E402
from .config import ExperimentConfig, parse_config  # noqa: E402

__all__ = [
    "BrusselatorError", "ConfigError", "DegeneracyError", "DivergenceError", "InvalidArgumentError",
    "NumericalError", "Grid", "build_grid", "estimate_embedding_constant", "sine_mode",
    "FieldQuartet", "ModelParams", "grouping", "norms", "tail_mass", "masked_grad_sq",
    "StepperConfig", "Trajectory", "initial_data", "simulate", "simulate_single_cell",
    "absorbing_constants", "DimensionInputs", "dimension_bound", "trace_qm",
    "ExperimentConfig", "parse_config",
]
