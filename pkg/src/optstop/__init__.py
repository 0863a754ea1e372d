"""Optimal-stopping policies from simulated trajectories.

Simulates correlated geometric Brownian motion, scores knock-out max-call
payoffs, and learns linear stopping policies two ways: a least-squares
Monte Carlo baseline and a backward pass of smoothed (sigmoid) stage
problems solved with full-batch Adam. Closed-form complexity bounds and a
replicated benchmark CLI round out the toolkit.
"""

from .basis import BasisFamily, BasisSpec, FeatureTensor, build_features
from .bounds import BoundInputs, NormType, generalization_lower_bound, rademacher_bound
from .experiment import (
    ExperimentConfig,
    InstanceConfig,
    MethodSpec,
    RunFlags,
    SampleConfig,
    load_config,
    run_experiment,
)
from .gbm import GbmModel, TrajectorySet, simulate_gbm
from .lsm import LastPeriodRule, LsmWeights, eval_lsm, lsm_fit, lsm_to_linear_policy
from .payoff import RewardSet, knockout_indicators, maxcall_rewards
from .policy import (
    ThresholdForm,
    WeightMatrix,
    eval_deterministic,
    eval_randomized,
    extract_thresholds,
    logistic,
    stop_distribution,
    stopping_times_deterministic,
)
from .rng import derive_seed
from .rpo import (
    AdamConfig,
    StageProblem,
    adam_maximize,
    rpo_backward_fit,
    stage_gradient,
    stage_objective,
)

__version__ = "0.1.0"

__all__ = [
    "AdamConfig",
    "BasisFamily",
    "BasisSpec",
    "BoundInputs",
    "ExperimentConfig",
    "FeatureTensor",
    "GbmModel",
    "InstanceConfig",
    "LastPeriodRule",
    "LsmWeights",
    "MethodSpec",
    "NormType",
    "RewardSet",
    "RunFlags",
    "SampleConfig",
    "StageProblem",
    "ThresholdForm",
    "TrajectorySet",
    "WeightMatrix",
    "adam_maximize",
    "build_features",
    "derive_seed",
    "eval_deterministic",
    "eval_lsm",
    "eval_randomized",
    "extract_thresholds",
    "generalization_lower_bound",
    "knockout_indicators",
    "load_config",
    "logistic",
    "lsm_fit",
    "lsm_to_linear_policy",
    "maxcall_rewards",
    "rademacher_bound",
    "rpo_backward_fit",
    "run_experiment",
    "simulate_gbm",
    "stage_gradient",
    "stage_objective",
    "stop_distribution",
    "stopping_times_deterministic",
]
