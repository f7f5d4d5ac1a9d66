"""Wave scattering by many small impedance particles and its effective-medium limit.

Modules
-------
medium     domains, speed profiles, incident fields, grid fields
greens     Green's kernels and the exact box potential
cloud      particle placement and regime audit
foldy      Foldy-type system for the effective field at the centres
continuum  Nystrom solver for the limiting volume integral equation
limits     Riemann-type sums of singular functions
design     inverse design of a refraction coefficient
oracle     exact sphere solution and surface quadrature identities
study      particle-versus-continuum convergence studies
cli        batch command-line front end
"""

__version__ = "0.1.0"

from .cloud import ParticleCloud, RegimeViolation, audit_regime, count_in_subdomain, generate_cloud
from .continuum import (ContinuumProblem, ContinuumSolution, effective_refraction, pde_residual,
                        solve_limit_equation)
from .design import DesignInfeasible, MaterialRecipe, design_material, recipe_to_cloud, verify_design
from .foldy import FoldySolution, FoldySystem, assemble, charges, evaluate_field, solve
from .greens import GreensKernel, KernelTable, green_eval
from .limits import Plane, PointSet, Segment, SingularFunction, cutoff_sum, limit_study, reference_integral, \
    weighted_sum
from .medium import Ball, Box, Constant, Expression, InputError, Medium, PlaneWave, PointSource
from .oracle import (extract_monopole_charge, normal_derivative_layer_identity, single_layer_sphere_identity,
                     solve_sphere_exact)
from .study import compare_limit, probe_points

__all__ = [
    "Ball", "Box", "Constant", "ContinuumProblem", "ContinuumSolution", "DesignInfeasible", "Expression",
    "FoldySolution", "FoldySystem", "GreensKernel", "InputError", "KernelTable", "MaterialRecipe", "Medium",
    "ParticleCloud", "Plane", "PlaneWave", "PointSet", "PointSource", "RegimeViolation", "Segment",
    "SingularFunction", "assemble", "audit_regime", "charges", "compare_limit", "count_in_subdomain",
    "cutoff_sum", "design_material", "effective_refraction", "evaluate_field", "extract_monopole_charge",
    "generate_cloud", "green_eval", "limit_study", "normal_derivative_layer_identity", "pde_residual",
    "probe_points", "recipe_to_cloud", "reference_integral", "single_layer_sphere_identity", "solve",
    "solve_limit_equation", "solve_sphere_exact", "verify_design", "weighted_sum", "__version__",
]
