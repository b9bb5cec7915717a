"""Forward and inverse spectral problems for matrix Sturm-Liouville operators on [0, pi]."""
from .errors import (
    DimensionError,
    GapError,
    IllConditionedError,
    IntegrationDivergenceError,
    LocalizationError,
    MSLError,
    NearPoleError,
    ResolutionError,
    SchemaError,
    ValidationError,
)
from .forward import (
    asymptotics_report,
    assemble_spectral_data,
    locate_eigenvalues,
    normalize_to_A_omega,
    residue_matrix,
)
from .inverse import (
    build_system,
    compute_xi,
    derivative_system,
    epsilon_derivative,
    identity_residual,
    model_spectral_data,
    reconstruct,
    recover_phi,
    solve_main_equation,
    weyl_from_data,
)
from .operator_core import (
    Grid,
    MatrixSolution,
    OmegaClass,
    Problem,
    boundary_form_U,
    boundary_form_V,
    characteristic_function,
    d_kernel,
    integrate_solution,
    model_problem,
    model_solution,
    phi_solution,
    s_solution,
    weyl_matrix,
    weyl_solution,
)
from .potentials import ClosedFormPotential, GridPotential, CallablePotential, Term
from .spectral_data import SpectralData
from .validator import (
    check_condition1,
    check_condition2,
    check_condition3,
    validate,
    verify_against_problem,
)

__version__ = "0.1.0"
