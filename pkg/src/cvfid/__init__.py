"""Average fidelities for Gaussian teleportation and light-atom memory protocols.

Four independent routes compute the same numbers: closed forms, a
covariance-matrix pipeline, a polynomial-times-Gaussian Wigner engine and a
Monte-Carlo oracle.
"""

from .gaussian import (
    GaussianState,
    LinearMap,
    MeasurementSpec,
    NumericalError,
    UnphysicalStateWarning,
    ValidationError,
    VariableLabel,
    apply_map,
    average_over_outcomes,
    condition_on_measurement,
    fidelity_vs_coherent,
    fidelity_vs_vacuum,
    pseudo_inverse,
)
from .protocols import (
    FidelityResult,
    MemoryParams,
    TeleportationParams,
    memory_fidelity_analytic,
    memory_pipeline,
    optimal_gain_memory,
    optimal_gain_teleport,
    optimize_gain,
    teleport_fidelity_analytic,
    teleport_pipeline,
)
from .polygauss import PolyGaussWigner
from .fock import (
    FockEnsembleParams,
    displaced_fock_teleport_fidelity,
    fock_ensemble_fidelity,
    fock_teleport_fidelity,
)
from .montecarlo import McConfig, McEstimate, mc_memory, mc_teleport

__version__ = "0.1.0"
