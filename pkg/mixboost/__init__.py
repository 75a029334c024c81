from mixboost.boosting import (
    AdaganRun,
    BaselineKind,
    BaselineVariant,
    BetaSchedule,
    IterationRecord,
    LearnerConfig,
    LearnerKind,
    ScheduleKind,
    baseline_history,
    choose_beta_for_ratio,
    run_adagan,
    run_baseline,
    update_training_weights,
)
from mixboost.divergence import (
    DiscreteDistribution,
    FDivergenceKind,
    FFunction,
    density_ratio_from_discriminator,
    f_divergence,
    js_decomposition_check,
)
from mixboost.exceptions import (
    BoostingError,
    ComputationError,
    ConfigError,
    DomainError,
    Error,
    FittingError,
    InfeasibleError,
    InterfaceError,
    MixboostWarning,
    StructuralError,
    ValidationError,
)
from mixboost.generators import (
    GaussianGenerator,
    GaussianMixtureGenerator,
    Generator,
    GeneratorMixture,
    WeightedSample,
    fit_discriminator,
    fit_gaussian,
    fit_gaussian_mixture_em,
    generator_from_dict,
    weighted_em,
)
from mixboost.metrics import coverage_c, kde_fit, log_likelihood_l
from mixboost.theory import (
    finite_convergence_bound,
    g_lambda,
    greedy_optimal_iteration,
    lambda_star_empirical,
    solve_lambda_dagger,
    solve_lambda_star,
)
from mixboost.verify import run_verification

__version__ = "0.1.0"

__all__ = [
    "AdaganRun",
    "BaselineKind",
    "BaselineVariant",
    "BetaSchedule",
    "BoostingError",
    "ComputationError",
    "ConfigError",
    "DiscreteDistribution",
    "DomainError",
    "Error",
    "FDivergenceKind",
    "FFunction",
    "FittingError",
    "GaussianGenerator",
    "GaussianMixtureGenerator",
    "Generator",
    "GeneratorMixture",
    "InfeasibleError",
    "InterfaceError",
    "IterationRecord",
    "LearnerConfig",
    "LearnerKind",
    "MixboostWarning",
    "ScheduleKind",
    "StructuralError",
    "ValidationError",
    "WeightedSample",
    "baseline_history",
    "choose_beta_for_ratio",
    "coverage_c",
    "density_ratio_from_discriminator",
    "f_divergence",
    "finite_convergence_bound",
    "fit_discriminator",
    "fit_gaussian",
    "fit_gaussian_mixture_em",
    "g_lambda",
    "generator_from_dict",
    "greedy_optimal_iteration",
    "js_decomposition_check",
    "kde_fit",
    "lambda_star_empirical",
    "log_likelihood_l",
    "run_adagan",
    "run_baseline",
    "run_verification",
    "solve_lambda_dagger",
    "solve_lambda_star",
    "update_training_weights",
    "weighted_em",
]
