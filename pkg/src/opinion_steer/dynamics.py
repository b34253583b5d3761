"""Bounded-confidence opinion dynamics with a partially actuated population.

Each of N agents holds a scalar opinion. At every step an agent averages
toward the mean opinion of the peers inside its confidence radius epsilon
(its own opinion when no peer is that close), actuated agents additionally
receive a control input, and everyone is perturbed by Gaussian noise:

    x_next = (1 - alpha) * x + alpha * center_of_bias(x) [+ u] + w

Opinions are clipped to the state bounds after the noise is applied; the
noise is never re-drawn. All functions are pure: noise enters only through
explicit arguments, so a fixed noise stream gives bit-identical results
regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .policies import PolicyKind, PolicyParams, eval_policy_batch, slots_from_indicators

# ---------------------------------------------------------------------------
# types


@dataclass
class ModelParams:
    """Population model constants."""

    n_agents: int = 200
    alpha: float = 0.8
    sigma: float = 0.1
    epsilon: float = 1.0
    state_bounds: tuple[float, float] = (-3.0, 3.0)
    state_dim: int = 1

    def __post_init__(self):
        if int(self.n_agents) != self.n_agents or self.n_agents < 1:
            raise ValueError("n_agents must be a positive integer")
        self.n_agents = int(self.n_agents)
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.sigma < 0.0:
            raise ValueError("sigma must be non-negative")
        if self.epsilon < 0.0:
            raise ValueError("epsilon must be non-negative")
        lo, hi = self.state_bounds
        if not lo < hi:
            raise ValueError("state_bounds must satisfy lo < hi")
        self.state_bounds = (float(lo), float(hi))
        if int(self.state_dim) != self.state_dim or self.state_dim < 1:
            raise ValueError("state_dim must be a positive integer")
        self.state_dim = int(self.state_dim)


@dataclass
class CostSpec:
    """Quadratic stage cost: q * |x - target|^2 per agent plus r * |u|^2
    per actuated agent, accumulated over the horizon (the initial state is
    not charged)."""

    q: float = 5.0
    r: float = 0.1
    target: float = 0.0

    def __post_init__(self):
        if self.q < 0.0 or self.r < 0.0:
            raise ValueError("cost weights must be non-negative")
        if not np.isfinite(self.target):
            raise ValueError("cost target must be finite")


@dataclass
class PopulationState:
    """Opinions plus the actuated/passive partition of the agents."""

    opinions: np.ndarray
    active_mask: np.ndarray

    def __post_init__(self):
        self.opinions = np.asarray(self.opinions, dtype=np.float64)
        self.active_mask = np.asarray(self.active_mask, dtype=bool)
        if self.opinions.ndim != 1 or self.active_mask.shape != self.opinions.shape:
            raise ValueError("opinions and active_mask must be 1-D arrays of equal length")
        if not np.all(np.isfinite(self.opinions)):
            raise ValueError("opinions must be finite")

    @property
    def n_agents(self) -> int:
        return self.opinions.shape[0]


@dataclass
class Rollout:
    """One simulated trajectory: states (T+1, N), controls (T, N), the
    actuation indicators held fixed over the horizon, and the realized cost."""

    states: np.ndarray
    controls: np.ndarray
    indicators: np.ndarray
    cost: float


# ---------------------------------------------------------------------------
# neighborhoods

def neighborhood(opinions: np.ndarray, i: int, epsilon: float) -> set[int]:
    """Indices of the agents within distance epsilon of agent i, excluding i.

    Ties at exactly epsilon count as neighbors.
    """
    opinions = np.asarray(opinions, dtype=np.float64)
    if not 0 <= i < opinions.shape[0]:
        raise IndexError(f"agent index {i} out of range for {opinions.shape[0]} agents")
    close = np.abs(opinions - opinions[i]) <= epsilon
    close[i] = False
    return set(np.flatnonzero(close).tolist())


def center_of_bias(opinions: np.ndarray, i: int, epsilon: float) -> float:
    """Mean opinion over agent i's neighborhood, or x_i itself when empty."""
    opinions = np.asarray(opinions, dtype=np.float64)
    nbrs = neighborhood(opinions, i, epsilon)
    if not nbrs:
        return float(opinions[i])
    return float(np.mean(opinions[sorted(nbrs)]))


def centers_of_bias(opinions: np.ndarray, epsilon: float) -> np.ndarray:
    """All agents' centers of bias at once (brute-force pairwise distances)."""
    x = np.asarray(opinions, dtype=np.float64)
    close = np.abs(x[:, None] - x[None, :]) <= epsilon
    np.fill_diagonal(close, False)
    counts = close.sum(axis=1)
    sums = close @ x
    return np.where(counts > 0, sums / np.maximum(counts, 1), x)


def neighbor_sets_sorted(opinions: np.ndarray, epsilon: float) -> list[set[int]]:
    """Accelerated neighborhoods via sorted interval queries.

    Equivalent to calling ``neighborhood`` per agent; used by the planning
    kernel, which relies on the same sorted-window arithmetic.
    """
    x = np.asarray(opinions, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    lo = np.searchsorted(xs, x - epsilon, side="left")
    hi = np.searchsorted(xs, x + epsilon, side="right")
    out: list[set[int]] = []
    for i in range(x.shape[0]):
        members = set(order[lo[i]:hi[i]].tolist())
        members.discard(i)
        out.append(members)
    return out


# ---------------------------------------------------------------------------
# propagation

def step(
    state: PopulationState,
    controls: np.ndarray,
    params: ModelParams,
    noise: np.ndarray,
) -> PopulationState:
    """Advance the population one step.

    ``controls`` is an N-vector, zero outside the actuated set (enforced by
    masking, matching the model: passive agents never receive input).
    ``noise`` is the realized fluctuation, drawn by the caller with standard
    deviation params.sigma; it is added as-is. Clipping to the state bounds
    happens after the noise is added.
    """
    if params.state_dim != 1:
        raise ValueError("only scalar opinions are supported (state_dim = 1)")
    x = state.opinions
    if x.shape[0] != params.n_agents:
        raise ValueError("state size does not match params.n_agents")
    controls = np.asarray(controls, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if controls.shape != x.shape or noise.shape != x.shape:
        raise ValueError("controls and noise must match the population size")
    u = np.where(state.active_mask, controls, 0.0)
    drift = (1.0 - params.alpha) * x + params.alpha * centers_of_bias(x, params.epsilon)
    lo, hi = params.state_bounds
    nxt = np.clip(drift + u + noise, lo, hi)
    return PopulationState(opinions=nxt, active_mask=state.active_mask.copy())


def rollout(
    init: PopulationState,
    policy: PolicyParams,
    indicators: np.ndarray,
    params: ModelParams,
    cost: CostSpec,
    noise_stream: np.ndarray,
    horizon: int,
) -> Rollout:
    """Simulate ``horizon`` steps under one policy realization.

    The indicator set is fixed over the whole horizon. After each of the T
    propagations the cost charges q * (x - target)^2 over all agents plus
    r * u^2 over the actuated agents for the control just applied; the
    initial state is not charged.
    """
    indicators = np.asarray(indicators, dtype=bool)
    noise_stream = np.asarray(noise_stream, dtype=np.float64)
    n = init.n_agents
    if indicators.shape != (n,):
        raise ValueError("indicators must be a length-N boolean vector")
    if noise_stream.shape != (horizon, n):
        raise ValueError(f"noise stream must have shape ({horizon}, {n})")
    if policy.horizon < horizon:
        raise ValueError("policy horizon shorter than rollout horizon")

    slots = slots_from_indicators(indicators) if policy.kind is PolicyKind.OPEN_LOOP else None
    states = np.empty((horizon + 1, n))
    controls = np.empty((horizon, n))
    states[0] = init.opinions
    current = PopulationState(opinions=init.opinions.copy(), active_mask=indicators.copy())
    total = 0.0
    for t in range(horizon):
        u = eval_policy_batch(policy, current.opinions, slots, t, indicators)
        current = step(current, u, params, noise_stream[t])
        states[t + 1] = current.opinions
        controls[t] = u
        total += cost.q * float(np.sum((current.opinions - cost.target) ** 2))
        total += cost.r * float(np.sum(u[indicators] ** 2))
    return Rollout(states=states, controls=controls, indicators=indicators.copy(), cost=total)


# ---------------------------------------------------------------------------
# batched planning rollouts

_OPEN_LOOP, _FEEDBACK, _ADAPTIVE = 0, 1, 2


@njit(cache=True)
def _batch_costs_kernel(
    x0, masks, slots, feeds, gains, offs, noise,
    alpha, eps, lo_b, hi_b, q, r, target, variant,
):
    # One rollout per row of masks/noise. Each rollout keeps its opinions in
    # sorted order (insertion repair per step, opinions move little) so the
    # confidence windows come from a two-pointer sweep; window membership is
    # identical to the brute-force pairwise rule, including boundary ties.
    M, T, N = noise.shape
    costs = np.zeros(M)
    base_order = np.argsort(x0, kind="mergesort")
    for m in range(M):
        order = base_order.copy()
        xs = np.empty(N)
        xn = np.empty(N)
        for j in range(N):
            xs[j] = x0[order[j]]
        prefix = np.empty(N + 1)
        prefix[0] = 0.0
        c = 0.0
        for t in range(T):
            for j in range(N):
                prefix[j + 1] = prefix[j] + xs[j]
            k_t = gains[m, t]
            b_t = offs[m, t]
            lo = 0
            hi = 0
            sq = 0.0
            cu = 0.0
            for j in range(N):
                xj = xs[j]
                while xs[lo] < xj - eps:
                    lo += 1
                while hi < N and xs[hi] <= xj + eps:
                    hi += 1
                cnt = hi - lo - 1
                if cnt <= 0:
                    f = xj
                else:
                    f = (prefix[hi] - prefix[lo] - xj) / cnt
                i = order[j]
                u = 0.0
                if masks[m, i]:
                    if variant == 0:
                        u = feeds[m, t, slots[i]]
                    elif variant == 1:
                        u = k_t * xj + b_t
                    else:
                        u = k_t * xj
                v = (1.0 - alpha) * xj + alpha * f + u + noise[m, t, i]
                if v < lo_b:
                    v = lo_b
                elif v > hi_b:
                    v = hi_b
                xn[j] = v
                cu += u * u
                d = v - target
                sq += d * d
            c += q * sq + r * cu
            for j in range(N):
                xs[j] = xn[j]
            for j in range(1, N):
                v = xs[j]
                oi = order[j]
                p = j - 1
                while p >= 0 and xs[p] > v:
                    xs[p + 1] = xs[p]
                    order[p + 1] = order[p]
                    p -= 1
                xs[p + 1] = v
                order[p + 1] = oi
        costs[m] = c
    return costs


def batch_rollout_costs(
    x0: np.ndarray,
    masks: np.ndarray,
    kind: PolicyKind,
    values: np.ndarray,
    params: ModelParams,
    cost: CostSpec,
    noise: np.ndarray,
    slots: np.ndarray | None = None,
) -> np.ndarray:
    """Realized cost of M rollouts sharing one initial opinion vector.

    ``masks`` (M, N) carries each rollout's actuation indicators, ``values``
    (M, T, P) the policy parameter realizations in the PolicyParams layout,
    and ``noise`` (M, T, N) the pre-drawn fluctuations (std sigma). Results
    match ``rollout`` per row up to floating-point summation order.
    """
    if params.state_dim != 1:
        raise ValueError("only scalar opinions are supported (state_dim = 1)")
    x0 = np.ascontiguousarray(x0, dtype=np.float64)
    masks = np.ascontiguousarray(masks, dtype=np.bool_)
    values = np.ascontiguousarray(values, dtype=np.float64)
    noise = np.ascontiguousarray(noise, dtype=np.float64)
    M, T, N = noise.shape
    if x0.shape != (N,) or masks.shape != (M, N) or values.shape[:2] != (M, T):
        raise ValueError("inconsistent batch shapes")
    kind = PolicyKind(kind)
    if kind is PolicyKind.OPEN_LOOP:
        if slots is None:
            raise ValueError("open_loop batch requires slot indices")
        slots = np.ascontiguousarray(slots, dtype=np.int64)
        n_slots = values.shape[2]
        actuated_slots = slots[masks.any(axis=0)]
        if np.any(actuated_slots < 0) or np.any(actuated_slots >= n_slots):
            raise ValueError("actuated agent without a feedforward slot")
        variant = _OPEN_LOOP
        feeds = values
        gains = np.zeros((M, T))
        offs = np.zeros((M, T))
    else:
        slots = np.full(N, -1, dtype=np.int64)
        feeds = np.zeros((M, T, 1))
        if kind is PolicyKind.FEEDBACK:
            variant = _FEEDBACK
            gains = np.ascontiguousarray(values[:, :, 0])
            offs = np.ascontiguousarray(values[:, :, 1])
        elif kind is PolicyKind.ADAPTIVE:
            variant = _ADAPTIVE
            gains = np.ascontiguousarray(values[:, :, 0])
            offs = np.zeros((M, T))
        else:
            raise ValueError(f"batch rollouts need a sampled policy kind, got {kind.value}")
    lo, hi = params.state_bounds
    return _batch_costs_kernel(
        x0, masks, slots, feeds, gains, offs, noise,
        params.alpha, params.epsilon, lo, hi,
        cost.q, cost.r, cost.target, variant,
    )
