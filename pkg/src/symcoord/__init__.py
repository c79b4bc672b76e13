"""Geometric integration experiments on coordinate choice for symplectic methods."""

from .core import (
    FirstIntegral,
    HamiltonianSystem,
    OdeState,
    OdeSystem,
    PhaseState,
    SeparableHamiltonian,
    Trajectory,
    fd_gradient,
    fd_jacobian,
    validate_system,
)
from .diagnostics import (
    delta_hpq,
    drift_order,
    dvf1_explicit_euler,
    elementary_hpq,
    first_integral_condition,
    invariant_drift,
)
from .integrators import (
    RowlandsConfig,
    StepperConfig,
    explicit_euler_step,
    reference_solve,
    rowlands_solve,
    solve,
    stormer_verlet_step,
    symplectic_euler_adjoint_step,
    symplectic_euler_step,
    symplecticity_defect,
)
from .transforms import (
    PointTransform,
    VariableTransform,
    affine_point_transform,
    cartesian_to_polar,
    compensating_transform_1d,
    induced_momentum_forward,
    induced_momentum_inverse,
    ndcomp_residual,
    polar_to_cartesian,
    transform_hamiltonian,
    transform_ode,
)

__version__ = "0.1.0"
