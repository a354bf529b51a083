"""Nonconforming virtual element methods for fourth order problems.

The package builds discrete spaces on general polygonal meshes from a
five-entry dof tuple, constructs per-cell value/edge/gradient/hessian
projections that are computable from the dofs alone, assembles the stabilized
bilinear form, and drives manufactured-solution convergence studies for the
perturbation and varying-coefficient model problems.
"""

from .assembly import CoefficientField, assemble_global, assemble_local, dump_matrix
from .dofspace import (
    DofTuple,
    PRESETS,
    SpacePreset,
    build_global_numbering,
    dofs_of_function,
    dofs_of_polynomial,
    dof_matrix,
    extended_dof_count,
    local_dof_count,
)
from .harness import ConvergenceRecord, RunConfig, compute_errors, run_study, solve_once
from .mesh import (
    MeshError,
    PolyMesh,
    build_polymesh,
    build_remapped_hexagons,
    build_structured_triangles,
    check_regularity,
    load_mesh,
    make_cell,
    save_mesh,
)
from .polykernel import (
    CellBasis,
    EdgeBasis,
    basis_derivatives,
    cell_basis,
    cell_quadrature,
    edge_basis,
    edge_quadrature,
    l2_project_cell,
)
from .problems import (
    ModelProblem,
    exact_error_data,
    perturbation_problem,
    varying_coefficient_problem,
)
from .projections import CellProjections, UnisolvenceError, build_cell_projections

__version__ = "0.1.0"
