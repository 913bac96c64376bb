"""Model-free inference for discrete physical systems from empirical data.

The library works directly on measured material states instead of a fitted
constitutive law.  Deterministic solvers find the closest pair between the
data and the set of states allowed by compatibility and equilibrium;
thermalized estimators turn weighted data clouds into expectations whose
concentration is controlled by an inverse temperature, and quenching
schedules couple that temperature to the data resolution so the estimates
converge to the deterministic limit.  Closed-form Gaussian truss oracles and
sliding-Gaussian pair models provide exact references for every estimator.
"""

from .config import (
    format_config,
    parse_config,
    parse_config_file,
    schedule_from_config,
    schedule_to_config,
    truss_from_config,
    truss_to_config,
)
from .datasets import DatasetFile, emit_dataset, format_float, parse_dataset
from .geometry import (
    AffineSubspace,
    Metric,
    PhaseVector,
    as_phase_array,
    metric_orthonormalize,
    nullspace_basis,
    project_affine,
    weighted_norm,
)
from .harness import (
    ExperimentReport,
    LevelRecord,
    NonTransversalError,
    QuenchSchedule,
    default_sliding_schedule,
    default_truss_schedule,
    grid_transport,
    make_empirical,
    qoi_diagonal_moment,
    qoi_displacement,
    run_convergence_study,
    schedule_validate,
    shifting_error_experiment,
    sliding_moment_study,
    truss_displacement_study,
)
from .inference import (
    InferenceResult,
    LocalQuadrature,
    QuantityOfInterest,
    expect_det_loading,
    expect_random_loading,
    local_gaussian_average,
    marginal_gap,
    qoi_coordinate,
    qoi_member_component,
    qoi_polynomial,
    qoi_quadratic,
)
from .measures import (
    CustomLikelihood,
    DegenerateThermalizationError,
    DiscreteEmpiricalLikelihood,
    EmpiricalMeasure,
    GaussianGraphLikelihood,
    LikelihoodModel,
    ProductLocalLikelihood,
    SlidingGaussianLikelihood,
    SlidingGaussianReference,
    ThermalizationParams,
    gaussian_mass,
    kl_divergence,
    log_gaussian_mass,
    log_subspace_gaussian_mass,
    log_thermal_weight,
    material_potential,
    offdiagonal_mass,
    sliding_gaussian_reference,
    subspace_gaussian_mass,
    thermal_weight,
    thermalize_against_subspace,
    thermalize_discrete,
    total_variation,
)
from .solver import (
    DDSolution,
    MaterialPointSet,
    coercivity_check,
    dd_solve_exact,
    dd_solve_fixed_point,
    distance_to_linear_graph,
    linear_graph_distance_report,
)
from .truss import (
    GaussianTrussOracle,
    TrussModel,
    UnequilibrableLoadError,
    build_constraint_set,
    compatibility_matrix,
    displacement_of_state,
    gaussian_truss_oracle,
    minimum_norm_stress,
    oracle_density,
    self_stress_basis,
    truss_metric,
)

__version__ = "0.1.0"

__all__ = [
    "AffineSubspace",
    "CustomLikelihood",
    "DDSolution",
    "DatasetFile",
    "DegenerateThermalizationError",
    "DiscreteEmpiricalLikelihood",
    "EmpiricalMeasure",
    "ExperimentReport",
    "GaussianGraphLikelihood",
    "GaussianTrussOracle",
    "InferenceResult",
    "LevelRecord",
    "LikelihoodModel",
    "LocalQuadrature",
    "MaterialPointSet",
    "Metric",
    "NonTransversalError",
    "PhaseVector",
    "ProductLocalLikelihood",
    "QuantityOfInterest",
    "QuenchSchedule",
    "SlidingGaussianLikelihood",
    "SlidingGaussianReference",
    "ThermalizationParams",
    "TrussModel",
    "UnequilibrableLoadError",
    "as_phase_array",
    "build_constraint_set",
    "coercivity_check",
    "compatibility_matrix",
    "dd_solve_exact",
    "dd_solve_fixed_point",
    "default_sliding_schedule",
    "default_truss_schedule",
    "displacement_of_state",
    "distance_to_linear_graph",
    "emit_dataset",
    "expect_det_loading",
    "expect_random_loading",
    "format_config",
    "format_float",
    "gaussian_mass",
    "gaussian_truss_oracle",
    "grid_transport",
    "kl_divergence",
    "linear_graph_distance_report",
    "local_gaussian_average",
    "log_gaussian_mass",
    "log_subspace_gaussian_mass",
    "log_thermal_weight",
    "make_empirical",
    "marginal_gap",
    "material_potential",
    "metric_orthonormalize",
    "minimum_norm_stress",
    "nullspace_basis",
    "offdiagonal_mass",
    "oracle_density",
    "parse_config",
    "parse_config_file",
    "parse_dataset",
    "project_affine",
    "qoi_coordinate",
    "qoi_diagonal_moment",
    "qoi_displacement",
    "qoi_member_component",
    "qoi_polynomial",
    "qoi_quadratic",
    "run_convergence_study",
    "schedule_from_config",
    "schedule_to_config",
    "schedule_validate",
    "self_stress_basis",
    "shifting_error_experiment",
    "sliding_gaussian_reference",
    "sliding_moment_study",
    "subspace_gaussian_mass",
    "thermal_weight",
    "thermalize_against_subspace",
    "thermalize_discrete",
    "total_variation",
    "truss_displacement_study",
    "truss_from_config",
    "truss_metric",
    "truss_to_config",
    "weighted_norm",
]
