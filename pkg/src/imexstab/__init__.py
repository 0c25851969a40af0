"""IMEX SBDF2 time stepping, adaptive VSSBDF2 control and linear stability thresholds.

The main entry points are :func:`integrate` for adaptive runs,
:func:`find_threshold` / :func:`analyze` for the companion-matrix threshold
search, the analytic scalar theory in :mod:`imexstab.scalar_models` and the
PNP model with generalized Frumkin-Butler-Volmer boundary kinetics in
:mod:`imexstab.pnp_fbv`.
"""

__version__ = "0.1.0"

from .errors import NumericFailure, StepFailure
from .mesh import (
    GHOST_CLOSED,
    INTERIOR_ONLY,
    DiffOp,
    Mesh,
    build_piecewise,
    build_uniform,
    dirichlet_reduced,
    dxx_extreme_eigenvalues,
    dxx_matrix,
)
from .imex_core import (
    ImexProblem,
    SplitProblem,
    StepperHistory,
    bootstrap_step,
    run_sbdf2,
    sbdf2_step,
    vssbdf2_coefficients,
    vssbdf2_step,
)
from .adaptive import (
    AdaptiveConfig,
    AdaptiveStepper,
    PlateauStop,
    StepRecord,
    Trajectory,
    advance_one,
    estimate_lte,
    integrate,
    richardson_combine,
)
from .scalar_models import (
    ScalarSplit,
    Stability,
    classify_stability,
    discriminant_roots,
    logistic_problem,
    logistic_threshold,
    rho_roots,
    sink_diffusion_threshold,
    split_diffusion_threshold,
    stability_case,
)
from .pnp_fbv import PnpFbvProblem, PnpParams, PnpState, fbv_fluxes, solve_poisson
from .stability import (
    StabilityReport,
    analyze,
    build_companion,
    find_threshold,
    numeric_jacobian_f,
    spectral_radius,
    variable_step_growth_rate,
)
from .steady import find_steady_state
from .sweep import (
    SweepPoint,
    detect_features,
    epsilon_sweep,
    extract_dt_infinity,
    fit_power_law,
    richardson_comparison,
)
