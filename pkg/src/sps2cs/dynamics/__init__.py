from .analytic import (
    SupportError,
    apply_local,
    apply_pair,
    conditional_drive_unitary,
    evolve_conditional_drive_map,
    evolve_dispersive_map,
    evolve_rabi,
)
from .frames import (
    ELIMINATION_CUTOFF,
    BlockPropagator,
    Dressing,
    FrameError,
    StaticFrame,
    dressing,
    eliminate_fast,
    frame_hamiltonian,
    solve_static_frame,
)
from .solvers import (
    IntegrationError,
    LossyPropagator,
    MemoryBudgetError,
    PropagationConfig,
    PropagationResult,
    TrajectoryConfig,
    TrajectoryEnsemble,
    export_samples_csv,
    expectation_series,
    liouvillian,
    propagate_lindblad,
    propagate_schrodinger,
    propagate_trajectories,
)
