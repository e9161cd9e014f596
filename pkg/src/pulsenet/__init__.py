"""Neural-network surrogates for single-qubit pulse synthesis.

Pipeline: optimize B-spline pulses for ``Rx(beta)`` gates, fit a small MLP
mapping ``beta`` to pulse coefficients, emulate its fixed-point inference
bit-exactly, and score everything with gate fidelity.
"""

__version__ = "0.1.0"

from .quantum import bloch_coords, gate_fidelity, rx_gate
from .pulse import PulseConfig, bspline_basis, envelope, fidelity_gradient, propagate, propagate_trajectory
from .optimizer import (
    ConvergenceError,
    Dataset,
    OptimizerConfig,
    generate_dataset,
    optimize_pulse,
    split_dataset,
)
