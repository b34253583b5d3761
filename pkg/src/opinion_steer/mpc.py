"""Receding-horizon control by stochastic search.

Each MPC step samples M candidate rollouts from the current policy
distribution (actuation indicators from the per-agent Bernoullis for the
adaptive kind, parameters from the Gaussian, one noise realization per
rollout), shapes the realized costs into weights, moves the Gaussian means
toward the weighted sample average (and, for the adaptive kind, updates and
re-normalizes the actuation probabilities), executes the updated slot-0 mean
on the true population, and finally shifts the mean schedule left one slot,
re-initializing the last slot to zero.

Randomness is keyed so results are a pure function of (scenario, config,
policy kind, seed): streams derive from (seed, domain, step) with domains
init / plan / exec / env, and within one planning step the plan stream draws
the indicator uniforms (M, N), the parameter normals (M, T, P) and the noise
normals (M, T, N) in that fixed order, rollout m consuming row m of each
block. Execution indicators and environment noise come from their own
streams, so the true population never reuses planning noise, and the
baseline / uncontrolled paths never touch the optimizer at all.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dynamics import (
    CostSpec,
    ModelParams,
    PopulationState,
    batch_rollout_costs,
    step,
)
from .experiments import ExperimentRecord, Scenario, scenario_to_dict
from .optimizer import (
    ShapeSpec,
    bernoulli_update,
    gaussian_mean_update,
    normalize_actuation,
    shape_weights,
)
from .policies import (
    PolicyKind,
    PolicyParams,
    SamplerState,
    baseline_control,
    eval_policy_batch,
    sample_indicators,
    slots_from_indicators,
)
from .rng import substream

__all__ = [
    "ControllerState", "CostSpec", "make_controller", "mpc_step", "recede",
    "run_controller", "run_experiment",
]

# stream domains within one experiment seed
_INIT, _PLAN, _EXEC, _ENV = 0, 1, 2, 3


@dataclass
class ControllerState:
    """Sampler plus the fixed constants of the receding-horizon loop."""

    sampler: SamplerState | None
    model: ModelParams
    cost: CostSpec
    planning_horizon: int
    mpc_horizon: int
    n_samples: int
    step_size: float
    shape: ShapeSpec
    fixed_active_set: np.ndarray | None = None
    opt_iterations: int = 1

    def __post_init__(self):
        if self.planning_horizon < 1 or self.mpc_horizon < 1:
            raise ValueError("horizons must be at least 1")
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        # step_size 0 is allowed: the update degenerates to a no-op
        if self.step_size < 0.0:
            raise ValueError("step_size must be non-negative")
        if self.opt_iterations < 1:
            raise ValueError("opt_iterations must be at least 1")
        if self.sampler is not None and self.sampler.horizon != self.planning_horizon:
            raise ValueError("sampler horizon must equal the planning horizon")
        if self.fixed_active_set is not None:
            self.fixed_active_set = np.asarray(self.fixed_active_set, dtype=np.int64)
            n = self.model.n_agents
            if self.fixed_active_set.ndim != 1 or (
                self.fixed_active_set.size
                and (self.fixed_active_set.min() < 0 or self.fixed_active_set.max() >= n)
            ):
                raise ValueError("fixed active set holds agent indices")


def recede(means: np.ndarray) -> np.ndarray:
    """Shift the mean schedule one slot left; the freed final slot returns
    to the initial policy mean (zero)."""
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[0] < 1:
        raise ValueError("means must have shape (horizon, n_params)")
    out = np.empty_like(means)
    out[:-1] = means[1:]
    out[-1] = 0.0
    return out


def _fixed_mask(controller: ControllerState) -> np.ndarray:
    if controller.fixed_active_set is None:
        raise ValueError(f"{controller.sampler.kind.value} requires a fixed active set")
    mask = np.zeros(controller.model.n_agents, dtype=bool)
    mask[controller.fixed_active_set] = True
    return mask


def mpc_step(
    controller: ControllerState,
    current: PopulationState,
    rng_root: np.random.SeedSequence,
) -> tuple[np.ndarray, ControllerState, np.ndarray]:
    """One planning-and-execution cycle.

    Returns the executed controls (zero outside the chosen actuation set),
    the controller with updated and receded sampler state, and the actuation
    indicators used for execution (fresh Bernoulli draws for the adaptive
    kind, the fixed active set otherwise).
    """
    sampler = controller.sampler
    if sampler is None:
        raise ValueError("mpc_step requires a sampled policy kind")
    kind = sampler.kind
    model = controller.model
    n = model.n_agents
    if current.n_agents != n:
        raise ValueError("population size does not match the controller model")
    M = controller.n_samples
    T = controller.planning_horizon

    ss_plan, ss_exec = rng_root.spawn(2)
    plan = np.random.Generator(np.random.PCG64(ss_plan))

    adaptive = kind is PolicyKind.ADAPTIVE
    if adaptive:
        probs = sampler.actuation_probs
        slots = None
        fixed = None
    else:
        probs = None
        fixed = _fixed_mask(controller)
        slots = slots_from_indicators(fixed) if kind is PolicyKind.OPEN_LOOP else None

    means = sampler.means
    std = np.sqrt(sampler.covariance)
    x0 = current.opinions
    for _ in range(controller.opt_iterations):
        if adaptive:
            masks = plan.random((M, n)) < probs[None, :]
        else:
            masks = np.broadcast_to(fixed, (M, n))
        samples = means[None, :, :] + std * plan.standard_normal((M, T, means.shape[1]))
        noise = model.sigma * plan.standard_normal((M, T, n))
        costs = batch_rollout_costs(
            x0, masks, kind, samples, model, controller.cost, noise, slots=slots,
        )
        weights = shape_weights(costs, controller.shape)
        means = gaussian_mean_update(means, samples, weights, controller.step_size)
        if adaptive:
            raw = bernoulli_update(probs, masks, weights, controller.step_size, sampler.p_min)
            probs = normalize_actuation(raw, sampler.active_fraction, sampler.p_min)

    if adaptive:
        exec_rng = np.random.Generator(np.random.PCG64(ss_exec))
        chosen = sample_indicators(probs, exec_rng)
    else:
        chosen = fixed
    executed = eval_policy_batch(PolicyParams(kind, means), x0, slots, 0, chosen)

    new_sampler = replace(
        sampler,
        means=recede(means),
        actuation_probs=probs if adaptive else None,
    )
    return executed, replace(controller, sampler=new_sampler), chosen


def make_controller(scenario: Scenario, policy_kind: PolicyKind | str) -> ControllerState:
    """Controller template for a scenario; per-seed state is reset by
    run_controller."""
    kind = PolicyKind(policy_kind)
    cfg = scenario.controller
    n = scenario.model.n_agents
    sampler = None
    if kind.is_sampled:
        if kind is PolicyKind.OPEN_LOOP:
            width = int(scenario.active_fraction * n)
            if width < 1:
                raise ValueError("active fraction yields no actuated agents to schedule")
        elif kind is PolicyKind.FEEDBACK:
            width = 2
        else:
            width = 1
        probs = None
        if kind is PolicyKind.ADAPTIVE:
            p0 = cfg.initial_actuation_prob
            if p0 is None:
                p0 = scenario.active_fraction
            p0 = min(max(p0, cfg.p_min), 1.0 - cfg.p_min)
            probs = np.full(n, p0)
        sampler = SamplerState(
            kind=kind,
            means=np.zeros((cfg.planning_horizon, width)),
            covariance=np.full(width, cfg.sampling_std**2),
            active_fraction=scenario.active_fraction,
            actuation_probs=probs,
            p_min=cfg.p_min,
        )
    return ControllerState(
        sampler=sampler,
        model=scenario.model,
        cost=scenario.cost,
        planning_horizon=cfg.planning_horizon,
        mpc_horizon=cfg.mpc_horizon,
        n_samples=cfg.n_samples,
        step_size=cfg.step_size,
        shape=cfg.shape,
        fixed_active_set=None,
        opt_iterations=cfg.opt_iterations,
    )


def run_controller(
    controller: ControllerState,
    scenario: Scenario,
    policy_kind: PolicyKind | str,
    seed: int,
) -> ExperimentRecord:
    """Run one full experiment; a pure function of its arguments.

    The init stream (seed domain 0) draws the initial opinions and then, for
    the kinds that use one, the fixed active set of exactly
    floor(active_fraction * N) agents. Each MPC step then uses its own plan /
    exec / env streams as described in the module docstring.
    """
    kind = PolicyKind(policy_kind)
    if int(seed) != seed or seed < 0:
        raise ValueError("seed must be a non-negative integer")
    seed = int(seed)
    model = controller.model
    n = model.n_agents
    if kind.is_sampled:
        if controller.sampler is None or controller.sampler.kind is not kind:
            raise ValueError(f"controller sampler does not match policy kind {kind.value}")

    init_rng = substream(seed, _INIT)
    x = scenario.init.sample(n, init_rng, even_split=scenario.even_mode_split)

    fixed_set = None
    if kind in (PolicyKind.OPEN_LOOP, PolicyKind.FEEDBACK, PolicyKind.BASELINE):
        k = int(scenario.active_fraction * n)
        fixed_set = np.sort(init_rng.permutation(n)[:k])
    ctrl = replace(controller, fixed_active_set=fixed_set)

    steps = controller.mpc_horizon
    states = np.empty((steps + 1, n))
    controls = np.empty((steps, n))
    indicators = np.empty((steps, n), dtype=bool)
    adaptive = kind is PolicyKind.ADAPTIVE
    probs_hist = np.empty((steps, n)) if adaptive else None

    states[0] = x
    current = PopulationState(opinions=x, active_mask=np.zeros(n, dtype=bool))
    target = controller.cost.target
    for t in range(steps):
        if kind.is_sampled:
            u, ctrl, mask = mpc_step(ctrl, current, np.random.SeedSequence([seed, _PLAN, t]))
            if adaptive:
                probs_hist[t] = ctrl.sampler.actuation_probs
        elif kind is PolicyKind.BASELINE:
            mask = np.zeros(n, dtype=bool)
            mask[fixed_set] = True
            u = np.where(mask, baseline_control(current.opinions, target), 0.0)
        else:  # uncontrolled
            mask = np.zeros(n, dtype=bool)
            u = np.zeros(n)
        env_noise = model.sigma * substream(seed, _ENV, t).standard_normal(n)
        current = step(
            PopulationState(opinions=current.opinions, active_mask=mask),
            u, model, env_noise,
        )
        states[t + 1] = current.opinions
        controls[t] = np.where(mask, u, 0.0)
        indicators[t] = mask

    return ExperimentRecord(
        scenario_name=scenario.name,
        policy=kind.value,
        seed=seed,
        states=states,
        controls=controls,
        indicators=indicators,
        actuation_probs=probs_hist,
        config={"scenario": scenario_to_dict(scenario), "policy": kind.value, "seed": seed},
    )


def run_experiment(
    scenario: Scenario,
    policy_kind: PolicyKind | str,
    seed: int,
) -> ExperimentRecord:
    """Build the controller for a scenario and run one seed."""
    return run_controller(make_controller(scenario, policy_kind), scenario, policy_kind, seed)
