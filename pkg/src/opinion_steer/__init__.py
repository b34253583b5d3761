"""Sampling-based model-predictive steering of bounded-confidence opinion
populations: simulate a partially actuated population, search over open-loop,
feedback and adaptive-feedback policies by weighted stochastic search, and
reproduce the steering and polarized experiments end to end."""

from .dynamics import (
    CostSpec,
    ModelParams,
    PopulationState,
    Rollout,
    center_of_bias,
    centers_of_bias,
    neighborhood,
    rollout,
    step,
)
from .experiments import (
    ExperimentRecord,
    Metrics,
    Scenario,
    UniformMixture,
    build_scenario,
    compute_metrics,
    read_trajectory,
    write_outputs,
)
from .mpc import ControllerState, make_controller, mpc_step, recede, run_controller, run_experiment
from .optimizer import (
    ShapeSpec,
    bernoulli_update,
    gaussian_mean_update,
    normalize_actuation,
    shape_exponential,
    shape_soft_elite,
    shape_weights,
)
from .policies import (
    PolicyKind,
    PolicyParams,
    SamplerState,
    baseline_control,
    eval_policy,
    sample_indicators,
    sample_policy_params,
)

__version__ = "0.1.0"
