import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vecsim.config import ConfigError, ScenarioConfig
from vecsim.scenario import (Scenario, Status, TaskType, VehicleState, advance_mobility,
                             generate_task, neighbor_sets, spawn_scenario, stream)


def test_spawn_is_deterministic():
    c = ScenarioConfig(vehicle_count=7, seed=42)
    a, b = spawn_scenario(c), spawn_scenario(c)
    assert a.snapshot() == b.snapshot()
    assert np.array_equal(a.alignment, b.alignment)


def test_spawn_ranges():
    c = ScenarioConfig(vehicle_count=15)
    for seed in range(20):
        s = spawn_scenario(c, seed)
        assert s.K == 15
        for v in s.vehicles:
            assert 0 <= v.position <= 500
            assert 1.8e9 <= v.cpu <= 3.6e9
            assert c.speed_range[0] <= v.speed <= c.speed_range[1]
            assert v.queue == []


def test_spawn_rejects_bad_config():
    c = ScenarioConfig()
    c.vehicle_count = 0
    with pytest.raises(ConfigError, match="vehicle_count"):
        spawn_scenario(c)


def test_vehicle_streams_do_not_depend_on_fleet_size():
    small = spawn_scenario(ScenarioConfig(vehicle_count=3), 9)
    big = spawn_scenario(ScenarioConfig(vehicle_count=7), 9)
    for a, b in zip(small.vehicles, big.vehicles):
        assert (a.position, a.speed, a.cpu) == (b.position, b.speed, b.cpu)


def test_named_streams_independent():
    a = stream(1, "tasks/0").random(5)
    b = stream(1, "tasks/1").random(5)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, stream(1, "tasks/0").random(5))


def test_zero_arrival_probability():
    c = ScenarioConfig(arrival_prob=0.0)
    r = np.random.default_rng(0)
    assert all(generate_task(r, c, 0, t) is None for t in range(1000))


def test_type_mix_frequencies():
    # law of large numbers against the configured mix
    c = ScenarioConfig(arrival_prob=1.0)
    r = np.random.default_rng(3)
    counts = np.zeros(3)
    for t in range(100_000):
        counts[int(generate_task(r, c, 0, t).task_type)] += 1
    assert np.all(np.abs(counts / counts.sum() - np.array([0.2, 0.4, 0.4])) <= 0.02)


def test_generated_task_fields():
    c = ScenarioConfig(arrival_prob=1.0)
    r = np.random.default_rng(4)
    for t in range(2000):
        task = generate_task(r, c, 2, t, task_id=t)
        assert 0.2e6 <= task.size <= 1e6
        assert 20 <= task.density <= 50
        assert task.generated_at == t and task.owner == 2 and task.status == Status.QUEUED
        assert task.output_ratio == (0.05 if task.task_type == TaskType.LPA else 0.0)


def test_per_vehicle_mix_override():
    c = ScenarioConfig(arrival_prob=1.0, type_mix_overrides={"1": [1.0, 0.0, 0.0]})
    r = np.random.default_rng(5)
    assert all(generate_task(r, c, 1, t).task_type == TaskType.CA for t in range(200))


def test_variates_consumed_even_without_arrival():
    lo, hi = ScenarioConfig(arrival_prob=0.0), ScenarioConfig(arrival_prob=1.0)
    r1, r2 = np.random.default_rng(8), np.random.default_rng(8)
    for t in range(50):
        generate_task(r1, lo, 0, t)
        generate_task(r2, hi, 0, t)
    assert r1.random() == r2.random()


def test_queue_overflow_counts_drops():
    c = ScenarioConfig(vehicle_count=1, arrival_prob=1.0, queue_capacity=3)
    s = spawn_scenario(c, 0)
    for t in range(5):
        s.arrivals(t)
    assert len(s.vehicles[0].queue) == 3
    assert s.dropped == [2]


def test_mobility_kinematics():
    v = VehicleState(0, 100.0, 20.0, 2e9)
    advance_mobility(v, 1.0, 500)
    assert v.position == pytest.approx(100.02, abs=1e-12)
    assert not v.exited


def test_mobility_exit():
    v = VehicleState(0, 499.99, 20.0, 2e9)
    advance_mobility(v, 1.0, 500)
    assert v.exited


def test_mobility_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        advance_mobility(VehicleState(0, 1.0, 1.0, 1.0), 0.0, 500)


def test_neighbor_threshold():
    assert neighbor_sets([150.0, 349.0], 200) == [frozenset({1}), frozenset({0})]
    assert neighbor_sets([150.0, 351.0], 200) == [frozenset(), frozenset()]


@given(st.lists(st.floats(0, 500), min_size=1, max_size=12))
def test_neighbor_relation_symmetric(pos):
    nb = neighbor_sets(pos, 200.0)
    for k, s in enumerate(nb):
        assert k not in s
        for j in s:
            assert k in nb[j]
            assert abs(pos[k] - pos[j]) <= 200.0


def test_alignment_matrix_symmetric_in_range():
    s = spawn_scenario(ScenarioConfig(vehicle_count=6), 1)
    a = s.alignment
    assert np.array_equal(a, a.T)
    off = a[~np.eye(6, dtype=bool)]
    assert np.all((off >= 0.05) & (off <= 0.2))
    assert np.all(np.diag(a) == 0)


def test_scenario_is_a_scenario():
    assert isinstance(spawn_scenario(ScenarioConfig(vehicle_count=2)), Scenario)
