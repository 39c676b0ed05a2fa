"""Transfer of single-photon entangled states to coherent-state qubits in circuit QED."""

__version__ = "0.1.0"

from .hilbert import (  # noqa: E402
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
    coherent_state,
    fidelity,
)
from .device import DeviceParams, derive, validate_dispersive  # noqa: E402
from .config import ConfigError, TIERS, load_preset  # noqa: E402
from .protocol import (  # noqa: E402
    ProtocolPlan,
    ProtocolStep,
    StepOutcome,
    initial_state,
    plan,
    run_ideal,
    run_numeric,
    run_reverse,
    target_state,
)

__all__ = [
    "__version__",
    "DensityMatrix",
    "HilbertSpace",
    "Operator",
    "StateVector",
    "coherent_state",
    "fidelity",
    "DeviceParams",
    "derive",
    "validate_dispersive",
    "ConfigError",
    "TIERS",
    "load_preset",
    "ProtocolPlan",
    "ProtocolStep",
    "StepOutcome",
    "initial_state",
    "plan",
    "run_ideal",
    "run_numeric",
    "run_reverse",
    "target_state",
]
