"""Shadow-energy tracking for splitting integrators of separable Hamiltonians.

The numerical trajectory of an explicit splitting method is integrated in
extended precision together with an auxiliary scalar, and the value of the
modified Hamiltonian at each step is recovered from central differences
accelerated by Richardson extrapolation.
"""

from shadowham.xnum import (
    DomainError,
    PrecisionError,
    format_decimal,
    get_working_precision,
    nth_root,
    parse_decimal,
    set_working_precision,
    working_precision,
    xreal,
)
from shadowham.problems import (
    InitialState,
    SeparableHamiltonian,
    SingularityError,
    energy,
    free_particle,
    harmonic_oscillator,
    henon_heiles,
    kepler,
    pendulum,
)
from shadowham.integrator import (
    IntegrationFault,
    PhaseState,
    SplittingScheme,
    Trajectory,
    augmented_step,
    blanes_moan4,
    integrate,
    jacobian_determinant,
    observed_order,
    stormer_verlet,
    yoshida4,
)
from shadowham.shadow import (
    OrderPolicy,
    RichardsonDiagonal,
    ShadowEstimate,
    ShadowSeries,
    central_diff_weights,
    drift,
    first_column_entry,
    richardson_diagonal,
    select_order,
    shadow_fixed,
    shadow_series,
)

__version__ = "0.1.0"
