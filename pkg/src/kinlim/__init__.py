"""kinlim: desk-scale simulation and verification of kinetic scaling limits.

Hard-sphere dynamics against the Boltzmann equation (low density), weakly
coupled smooth-potential dynamics against the Landau equation, stochastic and
deterministic kinetic solvers, and the estimators that tie them together.
"""

__version__ = "0.1.0"

from .state import (
    FreeSpace,
    Mode,
    ParticleEnsemble,
    PeriodicBox,
    RadialPotential,
    RegimeKind,
    ScalingRegime,
    bump_potential,
    effective_potential,
    gaussian_potential,
    make_regime,
    minimal_image,
)
from .sampling import (
    InitialLaw,
    MaxwellianParams,
    MixtureOfMaxwellians,
    maxwellian_density,
    sample_factorized_hardcore,
    sample_velocity,
    two_beam_mixture,
)
from .hardsphere import (
    CollisionEvent,
    EventLog,
    EventQueue,
    elastic_collide,
    evolve,
    next_contact_time,
    reverse_test,
)
from .weakcoupling import ForceField, accelerations, integrate, total_energy, verlet_step
from .scattering import (
    KineticConstant,
    TransferMatrix,
    drift_vector,
    grazing_weak_form,
    kinetic_constant,
    landau_matrix,
    transfer_matrix_oracle,
    two_body_transfer,
)
from .landau import (
    VelocityGrid,
    grid_from_law,
    h_functional_grid,
    landau_step,
    maxwellian_grid,
    ql_apply,
)
from .dsmc import (
    DsmcState,
    dsmc_collision_step,
    make_homogeneous_state,
    make_spatial_state,
    qb_quadrature,
    transport_step,
)
from .diagnostics import (
    ChaosMetric,
    DiagnosticsRecord,
    HistogramSpec,
    Histogram3D,
    chaos_metric,
    empirical_marginal_1,
    h_estimate,
    maxwellian_distance,
    moments,
)
from .series import (
    SeriesMode,
    SeriesTermSpec,
    boltzmann_series_term,
    first_order_landau_prediction,
    series_prefactor,
)
from . import rng
