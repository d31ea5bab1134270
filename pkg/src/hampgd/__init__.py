"""Space-time PGD reduced-order solver for linear elastodynamics in Hamiltonian form."""

from .fullorder import (
    Trajectory,
    ZeroReferenceError,
    energy_norm,
    hamiltonian_energy,
    modal_reference,
    rom_error,
    save_trajectory,
    solve_fom,
    svd_reference,
)
from .harness import (
    ComparisonTable,
    ExperimentConfig,
    RunReport,
    compare_runs,
    load_config,
    load_report,
    run_assemble,
    run_experiment,
)
from .mesh_fem import (
    DIRICHLET,
    FREE,
    NEUMANN,
    AssemblyError,
    Material,
    Mesh,
    SeparatedLoad,
    assemble_neumann_load,
    assemble_operators,
    build_beam_mesh,
    export_operators_mm,
    write_vtk_mesh,
    write_vtk_point_field,
)
from .pgd import (
    FixedPointState,
    GreedyResult,
    LuPgdProblem,
    ModeCollapseError,
    PgdConfig,
    ResonanceError,
    RitzPgdProblem,
    SeparatedSolution,
    aitken_relax,
    allocation_guard,
    build_space_rhs,
    export_modes_vtk,
    export_temporal_csv,
    fixed_point_enrich,
    greedy_solve,
    orthonormalize,
    project_previous,
    save_solution,
    space_step_lu,
    space_step_ritz,
    stagnation,
    temporal_update,
    time_step_march,
)
from .ritz import (
    EigenConvergenceError,
    RitzBasis,
    SymplecticMap,
    build_symplectic_map,
    compute_ritz_pairs,
    load_ritz_basis,
    project_load,
    save_ritz_basis,
)
from .sparsela import SingularOperatorError, SpdFactor
from .symplectic_post import (
    BiorthogonalFactors,
    apply_factors,
    biorthogonalize,
    symplectic_defect,
)
from .timegrid import (
    TimeCoeffs,
    TimeGrid,
    TimeOperators,
    TriangleSignal,
    build_time_operators,
    time_coeffs,
    triangle_signal,
)

__version__ = "0.1.0"
