"""Response functions of non-adiabatic vibronic models.

Analytical perturbative series for the propagators and optical response
functions of displaced-oscillator models with a non-adiabatic coupling,
cross-validated against brute-force references at every layer.
"""

from .model import (
    ElectronicPattern,
    ModelError,
    ModelSpec,
    load_config,
    model_a_example,
    model_b_example,
    symmetric_dimer_example,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "ElectronicPattern",
    "ModelError",
    "ModelSpec",
    "load_config",
    "model_a_example",
    "model_b_example",
    "symmetric_dimer_example",
    "validate",
    "__version__",
]
