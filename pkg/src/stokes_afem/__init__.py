"""Adaptive interior-penalty DG solver for the Stokes eigenvalue problem."""

__version__ = "0.1.0"

from .mesh import (
    MeshError,
    SimplicialMesh,
    affine_maps,
    bisect,
    generate_domain,
    min_angle,
)
from .space import (
    BrokenSpaceLayout,
    ReferenceBasis,
    prolongation_matrices,
    segment_rule,
    triangle_rule,
)
from .assembly import AssembledSystem, assemble, assemble_load
from .solver import (
    EigenSolution,
    SolverError,
    SourceSolution,
    rayleigh_quotient,
    solve_eigen,
    solve_source,
)
from .estimator import (
    IndicatorField,
    element_residual,
    estimate,
    face_residual,
    jump_indicator,
    write_indicator_csv,
)
from .adapt import AdaptiveTrace, adaptive_loop, dorfler_mark
from .verify import (
    REFERENCE_EIGENVALUES,
    ManufacturedCase,
    dg_error,
    eoc,
    exact_weak_action,
    manufactured_case,
    project_pressure,
    project_velocity,
    velocity_l2_error,
)
from .vtkio import write_vtk
