"""Luenberger observers and back-and-forth nudging for periodic 1D transport."""

from bfnobs.function_space import (
    GridFunction,
    ObservationGrid,
    PeriodicGrid,
    from_closure,
    inner_product,
    norm,
    periodic_wrap,
)
from bfnobs.transport import (
    TransportPropagator,
    VelocityProfile,
    characteristic_foot,
    constant_profile,
    cumulative_growth,
    evolution_distance,
    generator_apply,
    propagate,
    relaxing_profile,
    sinusoidal_profile,
)
from bfnobs.observation import (
    CldKernelObserver,
    WindowObserver,
    adjoint_apply,
    apply,
    fbrm_kernel,
    kernel_injectivity_margin,
)
from bfnobs.gramian import (
    GramianAnalysis,
    assemble_gramian,
    exact_observability_margin,
    geometric_condition,
    observable_subspace,
    project_observable,
)
from bfnobs.observers import (
    BfnRun,
    ObserverConfig,
    ObserverTrajectory,
    OutputRecord,
    barbalat_diagnostic,
    duhamel_residual,
    observer_step,
    run_bfn,
    run_forward_observer,
)

from bfnobs.crystallization import (
    CrystallizationScenario,
    ReconstructionReport,
    extend_initial_state,
    reconstruct_csd,
    synthesize_cld,
)

__version__ = "0.1.0"
