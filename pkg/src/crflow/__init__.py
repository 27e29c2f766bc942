"""Consumer-resource evolutionary dynamics on discrete measures.

The state of the system is a pair (S, mu): a scalar resource level and a
population distribution over a finite strategy space. The package provides
the flat (bounded-Lipschitz dual) norm on signed measures, mutation-kernel
algebra, vital-rate families, two independent time integrators, and
diagnostics tying trajectories to conservation and boundedness properties.
"""

__version__ = "0.1.0"

from crflow.space import StrategySpace, build_grid, diameter
from crflow.measure import (
    AtomFunction,
    DiscreteMeasure,
    bl_dual_norm,
    bl_norm_fn,
    bullet_fn,
    bullet_kernel,
    flat_distance,
    pair,
)
from crflow.kernel import (
    MutationKernel,
    kernel_lipschitz_bound,
    local_mutation_kernel,
    pure_selection_kernel,
    validate_stochastic,
)
from crflow.rates import (
    MortalitySpec,
    UptakeSpec,
    VitalRates,
    mortality_floor,
    truncate,
    validate_assumptions,
)
from crflow.dynamics import (
    StepControl,
    SystemState,
    Trajectory,
    integrate,
    picard_solve,
    semiflow,
    step_rk4,
    vector_field,
)
from crflow.analysis import (
    breakeven,
    compare_to_ode,
    concentration,
    diagnostics,
    dissipativity_bound,
)
