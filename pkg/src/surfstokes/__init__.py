"""Stream-function interior-penalty toolkit for Stokes flow on closed surfaces."""

from .analysis import (
    ErrorRecord,
    observed_orders,
    stream_error,
    velocity_error,
    verify_global_ibp,
    verify_hessian_identities,
)
from .assembly import (
    AssembledSystem,
    assemble_rhs,
    assemble_system,
    manufactured_force,
    velocity_values,
)
from .cli import ConvergenceReport, StudyConfig, run_convergence_study, run_verification
from .fe_space import (
    DofMap,
    FeSpace,
    QuadRule,
    ReferenceBasis,
    build_dof_map,
    build_fe_space,
    edge_quadrature,
    triangle_quadrature,
)
from .geometry import (
    LevelSetSurface,
    SurfacePointFrame,
    approx_frame,
    eval_level_set,
    project_to_surface,
)
from .jets import FieldExpr, Jet3
from .linalg import (
    SparseSymmetricMatrix,
    dense_eigen_min,
    matvec,
    solve_dense_kkt,
    solve_mean_zero,
)
from .mesh import (
    BaseMesh,
    MappedMesh,
    build_base_mesh,
    build_mapped_mesh,
    dump_off,
    mesh_size,
    refine,
)
from .surface_ops import (
    EdgeFrame,
    GeometryFrame,
    edge_frame,
    element_geometry,
    hess_like,
    skew,
    surface_curl,
    surface_gradient,
    surface_hessian,
    verify_hess_like_equiv,
)

__version__ = "0.1.0"
