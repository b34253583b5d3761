import numpy as np
import pytest

from opinion_steer.dynamics import (
    CostSpec,
    ModelParams,
    PopulationState,
    Rollout,
    batch_rollout_costs,
    center_of_bias,
    centers_of_bias,
    neighbor_sets_sorted,
    neighborhood,
    rollout,
    step,
)
from opinion_steer.policies import PolicyKind, PolicyParams, slots_from_indicators


def make_state(opinions, active=None):
    opinions = np.asarray(opinions, dtype=float)
    if active is None:
        active = np.zeros(opinions.shape[0], dtype=bool)
    return PopulationState(opinions=opinions, active_mask=np.asarray(active, dtype=bool))


# ---------------------------------------------------------------------------
# neighborhoods


def test_neighborhood_radius_and_exclusion():
    x = [0.0, 0.5, 2.0]
    assert neighborhood(x, 0, 1.0) == {1}
    assert neighborhood(x, 1, 1.0) == {0}
    assert neighborhood(x, 2, 1.0) == set()


def test_neighborhood_boundary_tie_counts():
    assert neighborhood([0.0, 1.0], 0, 1.0) == {1}


def test_neighborhood_bad_index():
    with pytest.raises(IndexError):
        neighborhood([0.0, 1.0], 2, 1.0)


def test_center_of_bias_mean_and_fallback():
    x = [0.0, 0.5, 2.0]
    assert center_of_bias(x, 0, 1.0) == 0.5
    assert center_of_bias(x, 2, 1.0) == 2.0  # empty neighborhood keeps own opinion


def test_centers_match_per_agent_definition():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = rng.integers(2, 40)
        x = rng.uniform(-3, 3, n)
        eps = rng.uniform(0.0, 2.5)
        batch = centers_of_bias(x, eps)
        single = np.array([center_of_bias(x, i, eps) for i in range(n)])
        np.testing.assert_allclose(batch, single, rtol=0, atol=1e-12)


def test_neighborhood_symmetry():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = rng.integers(2, 30)
        x = rng.uniform(-3, 3, n)
        eps = rng.uniform(0.0, 2.0)
        sets = [neighborhood(x, i, eps) for i in range(n)]
        for i in range(n):
            for j in sets[i]:
                assert i in sets[j]


def test_sorted_neighborhoods_match_brute_force_exactly():
    # 1000 random populations, duplicates and boundary ties included
    rng = np.random.default_rng(1234)
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        x = rng.uniform(-3, 3, n)
        if n > 2 and rng.random() < 0.3:
            x[rng.integers(0, n)] = x[rng.integers(0, n)]  # force a duplicate
        eps = float(rng.choice([0.0, rng.uniform(0, 0.5), rng.uniform(0.5, 3.0)]))
        fast = neighbor_sets_sorted(x, eps)
        for i in range(n):
            assert fast[i] == neighborhood(x, i, eps)


# ---------------------------------------------------------------------------
# single step


def test_step_two_agents_hand_value():
    # both agents see each other: next = 0.2 * x + 0.8 * other
    state = make_state([0.0, 0.5])
    params = ModelParams(n_agents=2, alpha=0.8, sigma=0.0, epsilon=1.0)
    nxt = step(state, np.zeros(2), params, np.zeros(2))
    np.testing.assert_allclose(nxt.opinions, [0.4, 0.1], rtol=0, atol=1e-15)


def test_step_isolated_agent_keeps_opinion():
    state = make_state([0.0, 2.5])
    params = ModelParams(n_agents=2, alpha=0.8, sigma=0.0, epsilon=1.0)
    nxt = step(state, np.zeros(2), params, np.zeros(2))
    np.testing.assert_array_equal(nxt.opinions, state.opinions)


def test_step_clips_to_bounds_after_noise():
    state = make_state([2.9, -2.9])
    params = ModelParams(n_agents=2, alpha=0.0, sigma=1.0, epsilon=0.0)
    nxt = step(state, np.zeros(2), params, np.array([5.0, -5.0]))
    np.testing.assert_array_equal(nxt.opinions, [3.0, -3.0])


def test_step_masks_control_outside_active_set():
    state = make_state([0.0, 0.0], active=[True, False])
    params = ModelParams(n_agents=2, alpha=0.0, sigma=0.0, epsilon=0.0)
    nxt = step(state, np.array([1.0, 1.0]), params, np.zeros(2))
    np.testing.assert_array_equal(nxt.opinions, [1.0, 0.0])


def test_step_rejects_mismatched_shapes():
    state = make_state([0.0, 0.0])
    params = ModelParams(n_agents=2)
    with pytest.raises(ValueError):
        step(state, np.zeros(3), params, np.zeros(2))
    with pytest.raises(ValueError):
        step(state, np.zeros(2), params, np.zeros(1))


def test_step_boundedness_under_noise():
    rng = np.random.default_rng(3)
    params = ModelParams(n_agents=25, alpha=0.8, sigma=0.5, epsilon=1.0)
    lo, hi = params.state_bounds
    state = make_state(rng.uniform(lo, hi, 25), active=rng.random(25) < 0.3)
    for _ in range(50):
        state = step(state, rng.normal(0, 2, 25), params, rng.normal(0, 0.5, 25))
        assert np.all(state.opinions >= lo) and np.all(state.opinions <= hi)


def test_step_convexity_without_noise_or_control():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = rng.integers(2, 40)
        x = rng.uniform(-3, 3, n)
        params = ModelParams(n_agents=int(n), alpha=float(rng.uniform(0, 1)),
                             sigma=0.0, epsilon=float(rng.uniform(0, 3)))
        nxt = step(make_state(x), np.zeros(n), params, np.zeros(n))
        assert nxt.opinions.min() >= x.min() - 1e-12
        assert nxt.opinions.max() <= x.max() + 1e-12


def test_step_consensus_fixed_point():
    # dyadic opinions make the neighbor means exact
    state = make_state(np.full(5, 0.5))
    params = ModelParams(n_agents=5, alpha=0.8, sigma=0.0, epsilon=1.0)
    nxt = step(state, np.zeros(5), params, np.zeros(5))
    np.testing.assert_array_equal(nxt.opinions, state.opinions)
    # generic common value stays put to rounding
    state = make_state(np.full(7, 0.7))
    params = ModelParams(n_agents=7, alpha=0.6, sigma=0.0, epsilon=1.0)
    nxt = step(state, np.zeros(7), params, np.zeros(7))
    np.testing.assert_allclose(nxt.opinions, state.opinions, rtol=0, atol=1e-15)


def test_step_permutation_equivariance():
    rng = np.random.default_rng(17)
    n = 30
    params = ModelParams(n_agents=n, alpha=0.8, sigma=0.1, epsilon=1.0)
    x = rng.uniform(-3, 3, n)
    active = rng.random(n) < 0.25
    u = np.where(active, rng.normal(0, 1, n), 0.0)
    w = rng.normal(0, 0.1, n)
    perm = rng.permutation(n)
    base = step(make_state(x, active), u, params, w).opinions
    permuted = step(make_state(x[perm], active[perm]), u[perm], params, w[perm]).opinions
    np.testing.assert_allclose(permuted, base[perm], rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# rollout


def test_rollout_single_agent_hand_cost():
    # isolated agent, u = 1: x1 = 0 + 1 = 1, cost = 5 * (1 - 2)^2 + 0.1 * 1^2
    init = make_state([0.0])
    policy = PolicyParams(PolicyKind.OPEN_LOOP, np.array([[1.0]]))
    params = ModelParams(n_agents=1, alpha=0.8, sigma=0.0, epsilon=1.0)
    cost = CostSpec(q=5.0, r=0.1, target=2.0)
    out = rollout(init, policy, np.array([True]), params, cost, np.zeros((1, 1)), horizon=1)
    assert out.states.shape == (2, 1)
    np.testing.assert_allclose(out.states[1], [1.0], rtol=0, atol=1e-15)
    assert out.cost == pytest.approx(5.1, abs=1e-12)


def test_rollout_zero_control_outside_indicators():
    rng = np.random.default_rng(23)
    n, horizon = 12, 6
    indicators = rng.random(n) < 0.4
    policy = PolicyParams(PolicyKind.FEEDBACK, rng.normal(0, 1, (horizon, 2)))
    params = ModelParams(n_agents=n)
    out = rollout(
        make_state(rng.uniform(-1, 1, n)), policy, indicators, params,
        CostSpec(target=1.0), rng.normal(0, 0.1, (horizon, n)), horizon,
    )
    assert np.all(out.controls[:, ~indicators] == 0.0)
    assert out.cost >= 0.0


def test_rollout_cost_matches_recomputation():
    rng = np.random.default_rng(29)
    n, horizon = 8, 5
    indicators = rng.random(n) < 0.5
    policy = PolicyParams(PolicyKind.ADAPTIVE, rng.normal(0, 0.4, (horizon, 1)))
    params = ModelParams(n_agents=n, sigma=0.1)
    cost = CostSpec(q=2.0, r=0.3, target=0.5)
    noise = rng.normal(0, params.sigma, (horizon, n))
    out = rollout(make_state(rng.uniform(-1, 1, n)), policy, indicators, params, cost, noise, horizon)
    expected = 0.0
    for t in range(horizon):
        expected += cost.q * np.sum((out.states[t + 1] - cost.target) ** 2)
        expected += cost.r * np.sum(out.controls[t, indicators] ** 2)
    assert out.cost == pytest.approx(expected, rel=1e-12)


def test_rollout_uncontrolled_charges_no_control_cost():
    n, horizon = 6, 4
    policy = PolicyParams(PolicyKind.FEEDBACK, np.zeros((horizon, 2)))
    params = ModelParams(n_agents=n, sigma=0.0)
    cost = CostSpec(q=0.0, r=5.0, target=0.0)
    out = rollout(
        make_state(np.linspace(-1, 1, n)), policy, np.zeros(n, dtype=bool), params,
        cost, np.zeros((horizon, n)), horizon,
    )
    assert out.cost == 0.0


def test_rollout_validates_noise_shape():
    policy = PolicyParams(PolicyKind.ADAPTIVE, np.zeros((3, 1)))
    params = ModelParams(n_agents=2)
    with pytest.raises(ValueError):
        rollout(make_state([0.0, 0.0]), policy, np.zeros(2, bool), params,
                CostSpec(), np.zeros((2, 2)), horizon=3)


# ---------------------------------------------------------------------------
# batched planning rollouts


@pytest.mark.parametrize("kind", [PolicyKind.OPEN_LOOP, PolicyKind.FEEDBACK, PolicyKind.ADAPTIVE])
def test_batch_costs_match_reference_rollouts(kind):
    rng = np.random.default_rng(hash(kind.value) % 2**32)
    n, horizon, m = 20, 7, 12
    params = ModelParams(n_agents=n, alpha=0.8, sigma=0.1, epsilon=1.0)
    cost = CostSpec(q=5.0, r=0.1, target=1.5)
    x0 = rng.uniform(-2, 2, n)
    if kind is PolicyKind.OPEN_LOOP:
        fixed = np.zeros(n, dtype=bool)
        fixed[rng.permutation(n)[:5]] = True
        masks = np.broadcast_to(fixed, (m, n))
        slots = slots_from_indicators(fixed)
        values = rng.normal(0, 0.5, (m, horizon, 5))
    else:
        masks = rng.random((m, n)) < 0.3
        slots = None
        width = 2 if kind is PolicyKind.FEEDBACK else 1
        values = rng.normal(0, 0.5, (m, horizon, width))
    noise = rng.normal(0, params.sigma, (m, horizon, n))
    batch = batch_rollout_costs(x0, masks, kind, values, params, cost, noise, slots=slots)
    for i in range(m):
        ref = rollout(
            make_state(x0.copy(), masks[i]), PolicyParams(kind, values[i]),
            masks[i], params, cost, noise[i], horizon,
        )
        assert batch[i] == pytest.approx(ref.cost, rel=1e-9, abs=1e-9)


def test_batch_costs_deterministic_across_calls():
    rng = np.random.default_rng(41)
    n, horizon, m = 15, 5, 9
    params = ModelParams(n_agents=n)
    cost = CostSpec(target=1.0)
    x0 = rng.uniform(-2, 2, n)
    masks = rng.random((m, n)) < 0.4
    values = rng.normal(0, 0.3, (m, horizon, 2))
    noise = rng.normal(0, 0.1, (m, horizon, n))
    a = batch_rollout_costs(x0, masks, PolicyKind.FEEDBACK, values, params, cost, noise)
    b = batch_rollout_costs(x0, masks, PolicyKind.FEEDBACK, values, params, cost, noise)
    np.testing.assert_array_equal(a, b)


def test_batch_costs_open_loop_needs_slots():
    params = ModelParams(n_agents=3)
    with pytest.raises(ValueError):
        batch_rollout_costs(
            np.zeros(3), np.ones((2, 3), bool), PolicyKind.OPEN_LOOP,
            np.zeros((2, 4, 2)), params, CostSpec(), np.zeros((2, 4, 3)),
        )


# ---------------------------------------------------------------------------
# parameter validation


def test_model_params_validation():
    with pytest.raises(ValueError):
        ModelParams(alpha=1.5)
    with pytest.raises(ValueError):
        ModelParams(sigma=-0.1)
    with pytest.raises(ValueError):
        ModelParams(epsilon=-1.0)
    with pytest.raises(ValueError):
        ModelParams(state_bounds=(1.0, -1.0))
    with pytest.raises(ValueError):
        ModelParams(n_agents=0)


def test_cost_spec_validation():
    with pytest.raises(ValueError):
        CostSpec(q=-1.0)
    with pytest.raises(ValueError):
        CostSpec(r=-0.5)
