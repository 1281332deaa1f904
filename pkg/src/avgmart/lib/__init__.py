"""Models, simulation, analytics and experiments."""

from .averaging import (
    AveragingReport,
    TwoTimescaleParams,
    Variant,
    averaged_filter_path,
    averaging_experiment,
    covariance_slow_fast,
    gradient_scaling_report,
    h_kernel,
    ou2_time_average_law,
    y_mse_formula,
    ybar_bm_mse_formula,
)
from .chain import (
    ChainModel,
    ChainPath,
    compose_transitions,
    enumerate_expectation,
    gamma_discrete,
    load_chain,
    martingale_increments,
    qv_discrete,
    r_discrete,
)
from .concentration import (
    ConcentrationReport,
    GradientBound,
    empirical_tail,
    gaussian_tail,
    variance_proxy,
    w1_deviation_bound,
    w1_point_to_gaussian,
)
from .experiments import (
    BUILTIN_EXPERIMENTS,
    ExperimentConfig,
    ExperimentOutcome,
    ResultTable,
    Tolerances,
)
from .linear_analytics import (
    eigenvalues_two_timescale,
    evolution_affine,
    expm_neg_At,
    gradient_evolution,
    poisson_resolvent,
    r_operator_affine,
)
from .martingale import (
    GradRProvider,
    MartingaleRecord,
    carre_du_champ,
    centered_decomposition,
    decomposition_residual,
    martingale_path,
    mixing_identity,
    pathwise_sup_check,
)
from .model import (
    AffineObservable,
    Ensemble,
    GeneralModel,
    LinearModel,
    TimeGrid,
    Trajectory,
    make_linear_ab,
    make_time_grid,
    make_two_timescale,
)
from .simulate import (
    CouplingSpec,
    euler_maruyama_path,
    simulate_coupled,
    simulate_ensemble,
)
from .writers import (
    DirectoryResultWriter,
    NoOpResultWriter,
    OutputError,
    write_outputs,
)

__all__ = [
    "BUILTIN_EXPERIMENTS",
    "AffineObservable",
    "AveragingReport",
    "ChainModel",
    "ChainPath",
    "ConcentrationReport",
    "CouplingSpec",
    "DirectoryResultWriter",
    "Ensemble",
    "ExperimentConfig",
    "ExperimentOutcome",
    "GeneralModel",
    "GradRProvider",
    "GradientBound",
    "LinearModel",
    "MartingaleRecord",
    "NoOpResultWriter",
    "OutputError",
    "ResultTable",
    "TimeGrid",
    "Tolerances",
    "Trajectory",
    "TwoTimescaleParams",
    "Variant",
    "averaged_filter_path",
    "averaging_experiment",
    "carre_du_champ",
    "centered_decomposition",
    "compose_transitions",
    "covariance_slow_fast",
    "decomposition_residual",
    "eigenvalues_two_timescale",
    "empirical_tail",
    "enumerate_expectation",
    "euler_maruyama_path",
    "evolution_affine",
    "expm_neg_At",
    "gamma_discrete",
    "gaussian_tail",
    "gradient_evolution",
    "gradient_scaling_report",
    "h_kernel",
    "load_chain",
    "make_linear_ab",
    "make_time_grid",
    "make_two_timescale",
    "martingale_increments",
    "martingale_path",
    "mixing_identity",
    "ou2_time_average_law",
    "pathwise_sup_check",
    "poisson_resolvent",
    "qv_discrete",
    "r_discrete",
    "r_operator_affine",
    "simulate_coupled",
    "simulate_ensemble",
    "variance_proxy",
    "w1_deviation_bound",
    "w1_point_to_gaussian",
    "write_outputs",
    "y_mse_formula",
    "ybar_bm_mse_formula",
]
