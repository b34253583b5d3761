"""Stochastic-search updates for the policy sampling distribution.

Rollout costs J are turned into normalized weights through a monotone,
strictly positive shape function S(-J), and the weights drive exponential-
family parameter updates:

  Gaussian means   mu <- mu + beta * sum_m w_m * (phi_m - mu)
  Bernoulli probs  p  <- logistic(logit(p) + beta * sum_m w_m * (a_m - p))

computed in logit space for numerical stability. A final normalization
rescales the actuation probabilities so their mean matches the target
active fraction, then clamps into [p_min, 1 - p_min].

Two shape functions are provided. "exponential" is S(y) = exp(lam * y)
(softmax weights; with a Gaussian mean step of size 1 this reduces to the
classic noise-weighted average update). "soft_elite" is the sigmoid shape
S(y) = (y - y_lb) / (1 + exp(-lam * (y - psi))) with psi the empirical
(1 - elite_fraction) quantile of y = -J, y_lb = min(y) - 1e-6 and
lam = sharpness / (std(y) + 1e-12), which concentrates weight on the elite
samples without discarding the rest.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_Y_LB_MARGIN = 1e-6
_STD_FLOOR = 1e-12


@dataclass
class ShapeSpec:
    """Shape-function choice and its constants."""

    kind: str = "soft_elite"
    lam: float = 1.0
    elite_fraction: float = 0.1
    sharpness: float = 10.0

    def __post_init__(self):
        if self.kind not in ("exponential", "soft_elite"):
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if self.lam <= 0.0:
            raise ValueError("lam must be positive")
        if not 0.0 < self.elite_fraction < 1.0:
            raise ValueError("elite_fraction must lie in (0, 1)")
        if self.sharpness <= 0.0:
            raise ValueError("sharpness must be positive")


def _checked_costs(costs: np.ndarray, min_samples: int) -> np.ndarray:
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 1 or costs.shape[0] < min_samples:
        raise ValueError(f"costs must be a vector of at least {min_samples} samples")
    if not np.any(np.isfinite(costs)):
        raise ValueError("all rollout costs are non-finite")
    return costs


def shape_exponential(costs: np.ndarray, lam: float) -> np.ndarray:
    """Softmax weights of -J at inverse temperature lam.

    The max of lam * (-J) is subtracted before exponentiation so large cost
    spreads cannot overflow. Non-finite costs get weight zero.
    """
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    costs = _checked_costs(costs, min_samples=1)
    y = np.where(np.isfinite(costs), -lam * costs, -np.inf)
    s = np.exp(y - np.max(y))
    return s / np.sum(s)


def _soft_elite_values(costs: np.ndarray, spec: ShapeSpec):
    """Unnormalized sigmoid-shape values plus the constants derived from the
    cost batch (elite threshold psi, lower bound y_lb, slope lam)."""
    y = -costs
    psi = float(np.quantile(y, 1.0 - spec.elite_fraction))
    y_lb = float(np.min(y)) - _Y_LB_MARGIN
    lam = spec.sharpness / (float(np.std(y)) + _STD_FLOOR)
    s = (y - y_lb) / (1.0 + np.exp(-lam * (y - psi)))
    return s, psi, y_lb, lam


def shape_soft_elite(costs: np.ndarray, spec: ShapeSpec) -> np.ndarray:
    """Sigmoid-shaped weights concentrating on the elite cost quantile."""
    costs = _checked_costs(costs, min_samples=2)
    if not np.all(np.isfinite(costs)):
        raise ValueError("soft elite weights require finite costs")
    if np.std(costs) == 0.0:
        # all rollouts tied; no elite to prefer
        return np.full(costs.shape[0], 1.0 / costs.shape[0])
    s, _, _, _ = _soft_elite_values(costs, spec)
    return s / np.sum(s)


def shape_weights(costs: np.ndarray, spec: ShapeSpec) -> np.ndarray:
    if spec.kind == "exponential":
        return shape_exponential(costs, spec.lam)
    return shape_soft_elite(costs, spec)


def _checked_weights(weights: np.ndarray, n: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (n,):
        raise ValueError("weights must match the number of samples")
    if np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
        raise ValueError("weights must be non-negative and finite")
    if abs(float(np.sum(weights)) - 1.0) > 1e-8:
        raise ValueError("weights must be normalized")
    return weights


def gaussian_mean_update(
    means: np.ndarray,
    samples: np.ndarray,
    weights: np.ndarray,
    step_size: float,
) -> np.ndarray:
    """Move the Gaussian means toward the weighted sample average.

    ``samples`` stacks M parameter realizations along axis 0; the update is
    mu + step_size * sum_m w_m (phi_m - mu), elementwise over the remaining
    axes. The covariance is not touched. step_size = 0 returns the means
    unchanged; step_size = 1 lands exactly on the weighted average.
    """
    if step_size < 0.0:
        raise ValueError("step_size must be non-negative")
    means = np.asarray(means, dtype=np.float64)
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[1:] != means.shape:
        raise ValueError("samples must stack arrays shaped like means")
    weights = _checked_weights(weights, samples.shape[0])
    drift = np.tensordot(weights, samples - means[None, ...], axes=(0, 0))
    return means + step_size * drift


def bernoulli_update(
    probs: np.ndarray,
    indicator_samples: np.ndarray,
    weights: np.ndarray,
    step_size: float,
    p_min: float = 0.01,
) -> np.ndarray:
    """Natural-parameter step for the per-agent actuation Bernoullis.

    With g_i = sum_m w_m (a_im - p_i), the new probability is
    logistic(logit(p_i) + step_size * g_i), then clamped into
    [p_min, 1 - p_min]. Computing in logit space keeps the result in (0, 1)
    for any step size.
    """
    if step_size < 0.0:
        raise ValueError("step_size must be non-negative")
    if not 0.0 < p_min < 0.5:
        raise ValueError("p_min must lie in (0, 0.5)")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1:
        raise ValueError("probs must be a 1-D agent vector")
    if np.any(probs <= 0.0) or np.any(probs >= 1.0):
        raise ValueError("probs must lie strictly inside (0, 1)")
    a = np.asarray(indicator_samples, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != probs.shape[0]:
        raise ValueError("indicator samples must have shape (M, N)")
    weights = _checked_weights(weights, a.shape[0])
    g = np.tensordot(weights, a - probs[None, :], axes=(0, 0))
    z = np.log(probs / (1.0 - probs)) + step_size * g
    new = 1.0 / (1.0 + np.exp(-z))
    return np.clip(new, p_min, 1.0 - p_min)


def normalize_actuation(
    probs: np.ndarray,
    active_fraction: float,
    p_min: float = 0.01,
) -> np.ndarray:
    """Rescale probabilities so their mean is the active fraction.

    p_i <- active_fraction * N * p_i / sum_j p_j, then clamp into
    [p_min, 1 - p_min]. Before the clamp bites, the mean is exactly the
    active fraction.
    """
    if not 0.0 < active_fraction <= 1.0:
        raise ValueError("active_fraction must lie in (0, 1]")
    if not 0.0 < p_min < 0.5:
        raise ValueError("p_min must lie in (0, 0.5)")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or probs.shape[0] < 1:
        raise ValueError("probs must be a non-empty 1-D vector")
    if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
        raise ValueError("probs must be non-negative and finite")
    total = float(np.sum(probs))
    if total <= 0.0:
        raise ValueError("probabilities sum to zero; nothing to normalize")
    scaled = active_fraction * probs.shape[0] * probs / total
    return np.clip(scaled, p_min, 1.0 - p_min)
