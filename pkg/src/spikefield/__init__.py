"""Event-driven simulation of excitatory spiking networks and their mean-field limit."""

__version__ = "0.1.0"

from .acceptance import ROOT_SEED, CriterionResult, run_acceptance, run_criterion
from .benchmarks import BENCHMARKS, CRIT, SUB, SUPER
from .coupling import ChaosPoint, CoupledResult, chaos_error_curve, optimal_coupling_map, simulate_coupled_system
from .errors import (
    AllSilent,
    ConfigError,
    EmptyDistribution,
    EmptyReference,
    NoConvergence,
    NonPositiveValue,
    OutOfDomain,
    RangeTooLarge,
    SpikefieldError,
    TooFewSamples,
    UnknownScenario,
)
from .experiments import (
    OUT_ENV,
    SCENARIOS,
    ExperimentConfig,
    RunManifest,
    config_from_dict,
    load_config,
    run_scenario,
)
from .meanfield import (
    EnsembleSnapshots,
    MeanFieldObservables,
    MeanFieldSolution,
    MomentResidual,
    QuantileTable,
    SelfConsistentResult,
    generate_reference_table,
    h_curve_closed_form,
    limiting_exp_moment,
    moment_bound_chain,
    moment_residual,
    picard_solve,
    resting_fraction_closed_form,
    resting_fraction_limit,
    simulate_linearized,
    simulate_self_consistent,
)
from .metrics import FitResult, MeanCI, fit_log_scaling, ks_two_sample, mean_omega, mean_with_ci, w1_empirical
from .network import (
    EventLog,
    ResidualResult,
    Trajectory,
    death_time_samples,
    generator_residual,
    simulate_embedded,
    simulate_no_reset,
    simulate_thinning,
)
from .params import (
    ModelParams,
    Regime,
    chaos_threshold,
    classify_regime,
    omega_distance,
    reproduction_number,
)
from .sampling import (
    ConstantInit,
    RateCurve,
    RngStream,
    sample_excited_subset,
    sample_firing_index,
    sample_firing_wait,
    sample_inhomogeneous_event,
)
