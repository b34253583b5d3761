import dataclasses
import json

import numpy as np
import pytest

from opinion_steer.experiments import (
    ExperimentRecord,
    TRAJ_COLUMNS,
    UniformMixture,
    build_scenario,
    compute_metrics,
    read_trajectory,
    run_basename,
    scenario_from_dict,
    scenario_to_dict,
    write_outputs,
)


# ---------------------------------------------------------------------------
# scenario construction


def test_steering_defaults():
    s = build_scenario("steering")
    assert s.name == "steering"
    assert s.model.n_agents == 200
    assert s.model.alpha == 0.8
    assert s.model.sigma == 0.1
    assert s.model.epsilon == 1.0
    assert s.model.state_bounds == (-3.0, 3.0)
    assert s.cost.q == 5.0
    assert s.cost.r == 0.1
    assert s.target == 2.0
    assert s.active_fraction == 0.25
    assert s.controller.planning_horizon == 10
    assert s.controller.mpc_horizon == 150
    assert s.controller.n_samples == 500
    assert s.controller.step_size == 1.0
    assert s.controller.sampling_std == 0.3
    assert s.controller.shape.kind == "soft_elite"
    assert s.controller.shape.elite_fraction == 0.1
    assert s.init.support == (-1.0, 1.0)


def test_polarized_defaults():
    s = build_scenario("polarized")
    assert s.target == 0.0
    assert s.init.support == (-3.0, 3.0)
    assert s.init.weights == (0.5, 0.5)
    assert sorted(zip(s.init.lows, s.init.highs)) == [(-3.0, -2.0), (2.0, 3.0)]


def test_unknown_scenario_lists_names():
    with pytest.raises(ValueError, match="steering"):
        build_scenario("no_such_scenario")


def test_overrides_apply():
    s = build_scenario("steering", {
        "model.alpha": "0.5",
        "controller.n_samples": "32",
        "active_fraction": "0.1",
        "model.state_bounds": "-2,2",
    })
    assert s.model.alpha == 0.5
    assert s.controller.n_samples == 32
    assert s.active_fraction == 0.1
    assert s.model.state_bounds == (-2.0, 2.0)


def test_override_unknown_field():
    with pytest.raises(ValueError, match="unknown config field"):
        build_scenario("steering", {"model.nope": "1"})
    with pytest.raises(ValueError, match="unknown config field"):
        build_scenario("steering", {"bogus": "1"})


def test_override_bad_value():
    with pytest.raises(ValueError):
        build_scenario("steering", {"model.alpha": "fast"})


def test_override_cross_field_revalidation():
    # shrinking the bounds leaves the target outside; must be rejected
    with pytest.raises(ValueError):
        build_scenario("steering", {"model.state_bounds": "-1,1"})


def test_scenario_dict_round_trip(tmp_path):
    s = build_scenario("polarized", {"controller.mpc_horizon": "12"})
    d = scenario_to_dict(s)
    rebuilt = scenario_from_dict(json.loads(json.dumps(d)))
    assert scenario_to_dict(rebuilt) == d

    config = tmp_path / "custom.json"
    config.write_text(json.dumps(d))
    from_file = build_scenario(str(config))
    assert scenario_to_dict(from_file) == d


def test_scenario_from_dict_rejects_unknown_keys():
    d = scenario_to_dict(build_scenario("steering"))
    d["model"]["surprise"] = 1
    with pytest.raises(ValueError, match="surprise"):
        scenario_from_dict(d)


# ---------------------------------------------------------------------------
# initial distributions


def test_mixture_validation():
    with pytest.raises(ValueError):
        UniformMixture(weights=(0.4, 0.4), lows=(0.0, 1.0), highs=(0.5, 1.5))
    with pytest.raises(ValueError):
        UniformMixture(weights=(1.0,), lows=(1.0,), highs=(0.0,))
    with pytest.raises(ValueError):
        UniformMixture(weights=(0.5, 0.5), lows=(0.0,), highs=(1.0, 2.0))


def test_mixture_sampling_stays_in_support():
    mix = UniformMixture(weights=(0.5, 0.5), lows=(2.0, -3.0), highs=(3.0, -2.0))
    x = mix.sample(500, np.random.default_rng(0))
    assert x.shape == (500,)
    in_pos = (x >= 2.0) & (x <= 3.0)
    in_neg = (x >= -3.0) & (x <= -2.0)
    assert np.all(in_pos | in_neg)
    # both modes populated with high probability at this size
    assert in_pos.sum() > 150 and in_neg.sum() > 150


def test_mixture_even_split_counts():
    mix = UniformMixture(weights=(0.5, 0.5), lows=(2.0, -3.0), highs=(3.0, -2.0))
    x = mix.sample(200, np.random.default_rng(1), even_split=True)
    assert ((x >= 2.0) & (x <= 3.0)).sum() == 100
    assert ((x >= -3.0) & (x <= -2.0)).sum() == 100
    # odd count: largest-remainder assignment, sizes differ by at most one
    x = mix.sample(5, np.random.default_rng(2), even_split=True)
    pos = int(((x >= 2.0) & (x <= 3.0)).sum())
    assert pos in (2, 3) and pos + int(((x >= -3.0) & (x <= -2.0)).sum()) == 5


# ---------------------------------------------------------------------------
# metrics


def make_record(states, controls=None, indicators=None, probs=None,
                target=0.0, r=0.1, policy="uncontrolled", seed=0):
    states = np.asarray(states, dtype=float)
    steps, n = states.shape[0] - 1, states.shape[1]
    if controls is None:
        controls = np.zeros((steps, n))
    if indicators is None:
        indicators = np.zeros((steps, n), dtype=bool)
    return ExperimentRecord(
        scenario_name="test",
        policy=policy,
        seed=seed,
        states=states,
        controls=controls,
        indicators=indicators,
        actuation_probs=probs,
        config={"scenario": {"cost": {"target": target, "r": r}}},
    )


def test_time_to_threshold_first_hit():
    rec = make_record(np.array([[0.0], [1.0], [1.9], [2.0]]), target=2.0)
    m = compute_metrics(rec, threshold=0.2)
    assert m.time_to_threshold == 2
    assert m.terminal_gap == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(m.mean_opinion, [0.0, 1.0, 1.9, 2.0])


def test_time_to_threshold_none_when_never_reached():
    rec = make_record(np.array([[0.0], [0.5]]), target=2.0)
    m = compute_metrics(rec, threshold=0.2)
    assert m.time_to_threshold is None
    assert m.time_to_mode_threshold is None


def test_all_at_target_from_start():
    rec = make_record(np.full((4, 3), 2.0), target=2.0)
    m = compute_metrics(rec)
    assert m.time_to_threshold == 0
    assert m.terminal_gap == 0.0
    assert m.control_effort == 0.0


def test_mode_partition_by_initial_sign():
    # agent 0 starts negative, agents 1-2 positive (zero counts positive)
    states = np.array([
        [-2.0, 0.0, 2.0],
        [-1.0, 0.5, 1.5],
    ])
    m = compute_metrics(make_record(states))
    assert m.mode_sizes == (1, 2)
    np.testing.assert_allclose(m.mode_means[0], [-2.0, -1.0])
    np.testing.assert_allclose(m.mode_means[1], [1.0, 1.0])


def test_mode_threshold_requires_both_modes():
    # positive mode at target from step 1, negative only from step 2
    states = np.array([
        [-2.0, 2.0],
        [-1.0, 0.1],
        [-0.1, 0.05],
    ])
    m = compute_metrics(make_record(states), threshold=0.2)
    assert m.time_to_mode_threshold == 2


def test_single_mode_population():
    states = np.array([[1.0, 2.0], [0.1, 0.1]])
    m = compute_metrics(make_record(states), threshold=0.2)
    assert m.mode_sizes == (0, 2)
    assert np.isnan(m.mode_means[0]).all()
    assert m.time_to_mode_threshold == 1


def test_control_effort_weighting():
    states = np.zeros((3, 2))
    controls = np.array([[1.0, 0.5], [2.0, 0.0]])
    indicators = np.array([[True, False], [True, False]])
    m = compute_metrics(make_record(states, controls, indicators, r=0.1))
    # only the actuated entries count: 0.1 * (1 + 4)
    assert m.control_effort == pytest.approx(0.5, rel=1e-12)


def test_metrics_threshold_validation():
    with pytest.raises(ValueError):
        compute_metrics(make_record(np.zeros((2, 1))), threshold=0.0)


def test_metrics_to_dict_shapes():
    d = compute_metrics(make_record(np.zeros((3, 2)))).to_dict()
    assert len(d["mean_opinion"]) == 3
    assert set(d["mode_means"]) == {"negative", "positive"}
    assert d["mode_means"]["negative"] == [None, None, None]  # no negative agents
    assert d["threshold"] == 0.2


# ---------------------------------------------------------------------------
# trajectory files


def test_run_basename():
    assert run_basename("steering", "feedback", 3) == "steering_feedback_3"


def test_write_outputs_row_count(tmp_path):
    rec = make_record(np.array([[0.25, -0.5], [0.125, 0.75]]))
    traj, summary = write_outputs(rec, compute_metrics(rec), tmp_path)
    lines = traj.read_text().splitlines()
    assert len(lines) == 1 + 2 * 2  # header + (steps + 1) * agents
    assert lines[0] == ",".join(TRAJ_COLUMNS)
    assert summary.name == "test_uncontrolled_0_summary.json"
    payload = json.loads(summary.read_text())
    assert payload["policy"] == "uncontrolled"
    assert payload["metrics"]["threshold"] == 0.2


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(21)
    states = rng.uniform(-3, 3, (5, 4))
    controls = rng.normal(0, 1, (4, 4))
    indicators = rng.random((4, 4)) < 0.5
    controls[~indicators] = 0.0
    probs = rng.uniform(0.01, 0.99, (4, 4))
    rec = make_record(states, controls, indicators, probs, policy="adaptive")
    traj, _ = write_outputs(rec, compute_metrics(rec), tmp_path)
    back = read_trajectory(traj)
    np.testing.assert_array_equal(back["states"], states)
    np.testing.assert_array_equal(back["controls"], controls)
    np.testing.assert_array_equal(back["indicators"], indicators)
    np.testing.assert_array_equal(back["actuation_probs"], probs)


def test_non_adaptive_file_has_no_probs(tmp_path):
    rec = make_record(np.zeros((3, 2)))
    traj, _ = write_outputs(rec, compute_metrics(rec), tmp_path)
    assert read_trajectory(traj)["actuation_probs"] is None


def test_rewrite_is_byte_identical(tmp_path):
    rng = np.random.default_rng(22)
    rec = make_record(rng.uniform(-3, 3, (4, 3)))
    m = compute_metrics(rec)
    t1, s1 = write_outputs(rec, m, tmp_path / "a")
    t2, s2 = write_outputs(rec, m, tmp_path / "b")
    assert t1.read_bytes() == t2.read_bytes()
    assert s1.read_bytes() == s2.read_bytes()


def test_read_trajectory_diagnostics(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("step,agent_id,opinion\n0,0,1.0\n")
    with pytest.raises(ValueError, match="header"):
        read_trajectory(bad)

    empty = tmp_path / "empty.csv"
    empty.write_text(",".join(TRAJ_COLUMNS) + "\n")
    with pytest.raises(ValueError, match="no data rows"):
        read_trajectory(empty)

    truncated = tmp_path / "trunc.csv"
    truncated.write_text(
        ",".join(TRAJ_COLUMNS) + "\n"
        "0,0,1.0,,,\n"
        "1,1,2.0,,,\n"  # declares 2 agents and 2 steps but carries 2 rows
    )
    with pytest.raises(ValueError, match="rows"):
        read_trajectory(truncated)


def test_record_validation():
    with pytest.raises(ValueError):
        make_record(np.zeros((3, 2)), controls=np.zeros((3, 2)))  # one row too many
    with pytest.raises(ValueError):
        make_record(np.zeros((3, 2)), probs=np.zeros((1, 2)))
