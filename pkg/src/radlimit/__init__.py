"""Grey radiative transfer in the diffusion limit.

Kernel special functions, the half-line boundary-layer (Milne) problem,
the domain transport equation, its elliptic limit, and the study harness.
"""

from .absorption import AbsorptionField
from .elliptic import LimitField, LimitSolver, compare_fields
from .geometry import ConvexDomain, RigidMotion, Slab
from .milne import (BoundaryTemperatureMap, HalfLineGrid, HalfLineProfile, MilneOperator,
                    MilneSolver, assemble_operator, solve_milne, temperature_from_u)
from .sources import (ConeSource, IsotropicSource, TabulatedSource, make_source,
                      planar_source)
from .specfun import (exp_integral_e1, exp_integral_e2, head_from, kernel_fourier,
                      kernel_K, tail_from)
from .study import RunConfig, run_convergence_study, run_kernel_table
from .transport import (CartesianMesh, RadialMesh, SlabSolver, TransportSolver,
                        flux_divergence_residual, solve_ueps)
from .verify import SupersolutionParams, check_supersolution, phi_eps, positivity_harness

__version__ = "0.1.0"

__all__ = [
    "AbsorptionField", "BoundaryTemperatureMap", "CartesianMesh", "ConeSource",
    "ConvexDomain", "HalfLineGrid", "HalfLineProfile", "IsotropicSource", "LimitField",
    "LimitSolver", "MilneOperator", "MilneSolver", "RadialMesh", "RigidMotion", "RunConfig",
    "Slab", "SlabSolver", "SupersolutionParams", "TabulatedSource", "TransportSolver",
    "assemble_operator", "check_supersolution", "compare_fields", "exp_integral_e1",
    "exp_integral_e2", "flux_divergence_residual", "head_from", "kernel_K", "kernel_fourier",
    "make_source", "phi_eps", "planar_source", "positivity_harness", "run_convergence_study",
    "run_kernel_table", "solve_milne", "solve_ueps", "tail_from", "temperature_from_u",
]
