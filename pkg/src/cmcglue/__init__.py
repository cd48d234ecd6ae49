"""cmcglue: numerical gluing of CMC initial data for the vacuum Einstein
constraints, with momentum repair, a conformal-factor solver, and a
shrink-parameter rate harness."""

__version__ = "0.1.0"

from .radial import (
    CmcExtrinsicCurvature,
    DegenerateMetricError,
    DiagRadialTensor,
    GridError,
    RadialGrid,
    RadialMetric,
    RadialVectorField,
    TraceFreeRadialTensor,
    conformal_killing_apply,
    fd_derivative,
    hamiltonian_residual,
    momentum_residual,
    scalar_curvature,
    vector_laplacian_apply,
)
from .models import (
    AEProfile,
    MSideModel,
    SdSParams,
    ae_decay_constants,
    bowen_york_ae,
    bowen_york_mu,
    cosmological_background,
    flat_ae,
    load_ae_profile,
    ode_residual,
    save_ae_profile,
    scale_ae_data,
    schwarzschild_ae,
    sds_profile,
)
from .gluing import (
    ChartSample,
    Cutoff,
    GluedData,
    GluingConfig,
    WeightFunction,
    build_glued_data,
    chart_rescaled_metric,
    cutoff_eval,
    glue_metric,
    glue_mu,
    region_classify,
    weight_eval,
    weight_for_config,
)
from .norms import NormSpec, norm_monotonicity_gap, weighted_norm
from .modes import (
    KernelFamilyTag,
    ModeIndex,
    ModeVectorField,
    apply_flat_mode,
    kernel_mode,
    repair_momentum,
    solve_mode_bvp,
)
from .lichnerowicz import (
    KidCandidate,
    LichnerowiczProblem,
    SolveReport,
    conformal_transform,
    injectivity_spectrum,
    injectivity_spectrum_polar,
    kid_residual,
    linearized_apply,
    n_residual,
    picard_solve,
    q_remainder,
    transformed_hamiltonian_residual,
    transformed_momentum_residual,
)
from .sweep import (
    RateFit,
    RunResult,
    SweepConfig,
    check_acceptance,
    emit_report,
    fit_rate,
    limit_errors,
    run_case,
    run_sweep,
)
