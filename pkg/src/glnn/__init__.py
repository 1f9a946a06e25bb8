"""Generalized Lagrangian neural networks for dissipative mechanical systems."""

import jax

# Every derivative check in this package relies on 64-bit arithmetic.
jax.config.update("jax_enable_x64", True)

from glnn.errors import (  # noqa: E402
    ConfigError,
    DatasetFormatError,
    DivergenceError,
    GlnnError,
    ModelFormatError,
    ModelVersionError,
    NumericError,
    NumericOverflowError,
    SingularMassMatrixError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DatasetFormatError",
    "DivergenceError",
    "GlnnError",
    "ModelFormatError",
    "ModelVersionError",
    "NumericError",
    "NumericOverflowError",
    "SingularMassMatrixError",
    "__version__",
]
