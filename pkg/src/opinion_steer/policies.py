"""Control policies for the actuated agents.

A policy is a small array of parameters plus a rule turning an actuated
agent's current opinion into a control input. Three parameterized families
are searched over by the optimizer:

  open_loop   one feedforward value per timestep and actuated-agent slot
  feedback    a shared affine law u = K_t * x + k_t
  adaptive    a shared linear law u = K_t * x, paired with per-agent
              actuation probabilities maintained by the sampler

Two reference behaviors complete the set: ``baseline`` (one-step pull
toward the target, u = target - x) and ``uncontrolled`` (no input). Within
one rollout the same (K_t, k_t) realization is shared by every actuated
agent; non-actuated agents receive exactly zero control from every policy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class PolicyKind(str, Enum):
    OPEN_LOOP = "open_loop"
    FEEDBACK = "feedback"
    ADAPTIVE = "adaptive"
    BASELINE = "baseline"
    UNCONTROLLED = "uncontrolled"

    @property
    def is_sampled(self) -> bool:
        """True for the kinds the stochastic search optimizes."""
        return self in (PolicyKind.OPEN_LOOP, PolicyKind.FEEDBACK, PolicyKind.ADAPTIVE)


def _param_width(kind: PolicyKind) -> int | None:
    # open_loop width is the number of actuated slots, fixed by the caller
    if kind is PolicyKind.FEEDBACK:
        return 2
    if kind is PolicyKind.ADAPTIVE:
        return 1
    return None


@dataclass
class PolicyParams:
    """One realization of a sampled policy.

    ``values`` has shape (T, P): open_loop stores a feedforward per slot
    (P = number of actuated agents), feedback stores columns (K_t, k_t),
    adaptive stores the single column K_t.
    """

    kind: PolicyKind
    values: np.ndarray

    def __post_init__(self):
        self.kind = PolicyKind(self.kind)
        if not self.kind.is_sampled:
            raise ValueError(f"policy kind {self.kind.value} carries no sampled parameters")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("policy values must have shape (horizon, n_params)")
        width = _param_width(self.kind)
        if width is not None and self.values.shape[1] != width:
            raise ValueError(
                f"{self.kind.value} expects {width} parameter(s) per timestep, "
                f"got {self.values.shape[1]}"
            )
        if self.kind is PolicyKind.OPEN_LOOP and self.values.shape[1] < 1:
            raise ValueError("open_loop needs at least one feedforward slot")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("policy values must be finite")

    @property
    def horizon(self) -> int:
        return self.values.shape[0]


def eval_policy(
    params: PolicyParams,
    opinion: float,
    agent_slot: int | None,
    t: int,
    actuated: bool,
) -> float:
    """Control input for one agent at planning timestep t.

    Returns exactly 0.0 whenever ``actuated`` is false. ``agent_slot`` is the
    agent's position within the actuated set and is only consulted by the
    open_loop family.
    """
    if not actuated:
        return 0.0
    if not 0 <= t < params.horizon:
        raise ValueError(f"timestep {t} outside policy horizon {params.horizon}")
    if params.kind is PolicyKind.OPEN_LOOP:
        if agent_slot is None or not 0 <= agent_slot < params.values.shape[1]:
            raise ValueError(
                f"open_loop policy evaluated for an agent without a feedforward slot "
                f"(slot {agent_slot!r}, {params.values.shape[1]} slots)"
            )
        return float(params.values[t, agent_slot])
    if params.kind is PolicyKind.FEEDBACK:
        k_gain, k_off = params.values[t]
        return float(k_gain * opinion + k_off)
    # adaptive: shared gain, no offset
    return float(params.values[t, 0] * opinion)


def eval_policy_batch(
    params: PolicyParams,
    opinions: np.ndarray,
    slots: np.ndarray | None,
    t: int,
    actuated: np.ndarray,
) -> np.ndarray:
    """Vectorized eval_policy over a population; same shared parameters."""
    opinions = np.asarray(opinions, dtype=np.float64)
    actuated = np.asarray(actuated, dtype=bool)
    if not 0 <= t < params.horizon:
        raise ValueError(f"timestep {t} outside policy horizon {params.horizon}")
    if params.kind is PolicyKind.OPEN_LOOP:
        if slots is None:
            raise ValueError("open_loop evaluation requires slot indices")
        slots = np.asarray(slots, dtype=np.int64)
        if np.any(slots[actuated] < 0) or np.any(slots[actuated] >= params.values.shape[1]):
            raise ValueError("actuated agent without a feedforward slot")
        u = np.zeros_like(opinions)
        u[actuated] = params.values[t, slots[actuated]]
        return u
    if params.kind is PolicyKind.FEEDBACK:
        u = params.values[t, 0] * opinions + params.values[t, 1]
    else:
        u = params.values[t, 0] * opinions
    return np.where(actuated, u, 0.0)


def slots_from_indicators(indicators: np.ndarray) -> np.ndarray:
    """Slot index of each agent within the actuated set, -1 for the rest.

    Slots are assigned in ascending agent order, so the mapping is stable for
    a fixed actuated set.
    """
    indicators = np.asarray(indicators, dtype=bool)
    slots = np.full(indicators.shape[0], -1, dtype=np.int64)
    slots[indicators] = np.arange(int(indicators.sum()), dtype=np.int64)
    return slots


def baseline_control(opinions, target: float):
    """One-step pull toward the target: u = target - x."""
    return target - np.asarray(opinions, dtype=np.float64)


# ---------------------------------------------------------------------------
# sampling distribution state


@dataclass
class SamplerState:
    """Search distribution over policy parameters.

    ``means`` has the (T, P) layout of PolicyParams.values for ``kind``;
    ``covariance`` is the fixed diagonal of the Gaussian (variances, one per
    parameter column). The adaptive kind additionally carries per-agent
    Bernoulli actuation probabilities, kept inside [p_min, 1 - p_min] with
    mean equal to ``active_fraction`` (up to clamping) by the optimizer's
    normalization step.
    """

    kind: PolicyKind
    means: np.ndarray
    covariance: np.ndarray
    active_fraction: float
    actuation_probs: np.ndarray | None = None
    p_min: float = 0.01

    def __post_init__(self):
        self.kind = PolicyKind(self.kind)
        if not self.kind.is_sampled:
            raise ValueError(f"sampler kind must be a sampled policy, got {self.kind.value}")
        self.means = np.asarray(self.means, dtype=np.float64)
        if self.means.ndim != 2 or self.means.shape[0] < 1:
            raise ValueError("sampler means must have shape (horizon, n_params)")
        width = _param_width(self.kind)
        if width is not None and self.means.shape[1] != width:
            raise ValueError(f"{self.kind.value} sampler expects {width} parameter column(s)")
        self.covariance = np.broadcast_to(
            np.asarray(self.covariance, dtype=np.float64), (self.means.shape[1],)
        ).copy()
        if np.any(self.covariance <= 0) or not np.all(np.isfinite(self.covariance)):
            raise ValueError("covariance diagonal must be strictly positive and finite")
        if not 0.0 < self.active_fraction <= 1.0:
            raise ValueError("active_fraction must lie in (0, 1]")
        if not 0.0 < self.p_min < 0.5:
            raise ValueError("p_min must lie in (0, 0.5)")
        if self.kind is PolicyKind.ADAPTIVE:
            if self.actuation_probs is None:
                raise ValueError("adaptive sampler requires actuation probabilities")
            self.actuation_probs = np.asarray(self.actuation_probs, dtype=np.float64)
            if self.actuation_probs.ndim != 1:
                raise ValueError("actuation probabilities must be a 1-D agent vector")
            lo, hi = self.p_min - 1e-12, 1.0 - self.p_min + 1e-12
            if np.any(self.actuation_probs < lo) or np.any(self.actuation_probs > hi):
                raise ValueError("actuation probabilities outside [p_min, 1 - p_min]")
        elif self.actuation_probs is not None:
            raise ValueError("only the adaptive sampler carries actuation probabilities")

    @property
    def horizon(self) -> int:
        return self.means.shape[0]


def sample_policy_params(sampler: SamplerState, rng: np.random.Generator) -> PolicyParams:
    """Draw one parameter realization from N(means, diag(covariance))."""
    std = np.sqrt(sampler.covariance)
    values = sampler.means + std * rng.standard_normal(sampler.means.shape)
    return PolicyParams(kind=sampler.kind, values=values)


def sample_indicators(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli draw per agent; True marks an actuated agent."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0.0) or np.any(probs > 1.0) or not np.all(np.isfinite(probs)):
        raise ValueError("actuation probabilities must lie in [0, 1]")
    return rng.random(probs.shape) < probs
