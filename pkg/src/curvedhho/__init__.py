"""Hybrid high-order diffusion solver on meshes with exactly curved faces."""

from .geometry import (
    CircularArc,
    CurveDomainError,
    EllipseArc,
    Face,
    Element,
    GeometryError,
    IncidenceError,
    Mesh,
    MeshFormatError,
    Segment,
    StructureError,
    curve_eval,
    point_in_element,
    polygon_mesh,
    read_mesh,
    validate_mesh,
    write_mesh,
)
from .quadrature import (
    EdgeRule,
    ElemRule,
    Rule1D,
    choose_base_vertex,
    edge_rule,
    element_rule,
    gauss_legendre,
    integrate,
)
from .spaces import (
    CellBasis,
    ConditioningError,
    FaceSpace,
    build_cell_basis,
    build_face_space,
    elliptic_project,
    l2_project_cell,
    l2_project_face,
    space_dim,
)
from .hho import (
    Diffusion,
    Discretization,
    ElementContext,
    LocalOperators,
    build_discretization,
    interpolate,
    local_stiffness,
    potential_reconstruction,
    stabilisation,
)
from .meshgen import (
    BOUNDARY_CUT,
    INTERFACE_CUT,
    CutLoop,
    CutSpec,
    DegenerateCutError,
    MeshGenError,
    cut_cartesian,
    mesh_sequence,
    straighten,
)
from .solver import (
    AssemblyError,
    DiscreteSolution,
    DofMap,
    DofVector,
    GlobalSystem,
    SolverError,
    assemble,
    energy_norm,
    interpolate_global,
    solve,
)
from .harness import (
    HarnessError,
    RunResult,
    TestCase,
    case_mesh,
    check_result,
    ellipse_case,
    emit_dat,
    error_measures,
    hetero_case,
    reference_functionals,
    run_convergence,
    solve_case,
)

__version__ = "0.1.0"
