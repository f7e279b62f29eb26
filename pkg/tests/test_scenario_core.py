import numpy as np
import pytest

from planner_errors import InvalidArgumentError, ScenarioValidationError
from scenario_core import (
    DEPOT,
    GroundUser,
    Scenario,
    TimingTable,
    Tour,
    UavParams,
    arrival_times,
    hop_distance,
    mission_time,
    reach_and_completion_times,
    travel_time_matrix,
)


def test_hop_distance(make_scenario):
    s = make_scenario([(3.0, 4.0, 1.0, 10.0), (200.0, 0.0, 1.0, 10.0)])
    assert hop_distance(DEPOT, 1, s) == pytest.approx(5.0)
    assert hop_distance(0, 2, s) == pytest.approx(200.0)
    assert hop_distance(2, 2, s) == 0.0
    assert hop_distance(1, 2, s) == hop_distance(2, 1, s)


def test_hop_distance_rejects_unknown_node(make_scenario):
    s = make_scenario([(3.0, 4.0, 1.0, 10.0)])
    with pytest.raises(InvalidArgumentError):
        hop_distance(0, 2, s)
    with pytest.raises(InvalidArgumentError):
        hop_distance(-1, 1, s)


def test_distance_matrix_triangle_inequality():
    rng = np.random.default_rng(7)
    users = [
        GroundUser(id=k + 1, position=tuple(rng.uniform(0, 400, 2)), data_bits=1e6, deadline_s=10.0, rate_bps=1e6)
        for k in range(8)
    ]
    s = Scenario.build((0.0, 0.0), users)
    d = s.distance_matrix
    n = len(d)
    for a in range(n):
        for b in range(n):
            for c in range(n):
                assert d[a, c] <= d[a, b] + d[b, c] + 1e-9


def test_travel_time_matrix_entries(make_scenario):
    s = make_scenario([(100.0, 0.0, 0.5, 10.0), (0.0, 0.0, 0.12, 10.0)])
    a = travel_time_matrix(s, 50.0)
    assert a[0, 1] == pytest.approx(2.5)
    # user 2 sits on the depot: only the service time remains
    assert a[0, 2] == pytest.approx(0.12)
    assert np.all(np.isinf(np.diag(a)))


def test_travel_time_matrix_symmetric_for_equal_service(make_scenario):
    s = make_scenario([(100.0, 20.0, 1.0, 10.0), (30.0, 250.0, 1.0, 10.0), (300.0, 300.0, 1.0, 10.0)])
    a = travel_time_matrix(s, 40.0)
    users = a[1:, 1:]
    np.testing.assert_allclose(users, users.T)


def test_travel_time_matrix_rejects_bad_speed(make_scenario):
    s = make_scenario([(100.0, 0.0, 1.0, 10.0)])
    with pytest.raises(InvalidArgumentError):
        travel_time_matrix(s, 0.0)


def test_cost_matrix_from_published_costs(subset_table):
    a = subset_table.cost_matrix
    assert a[0, 1] == 1.0
    assert a[1, 2] == 0.5
    assert a[2, 3] == 2.0
    assert subset_table.k_users == 3
    assert subset_table.deadlines_s[0] == np.inf


def test_timing_table_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        TimingTable(np.zeros((3, 3)), np.zeros(2), np.zeros(3))


def test_arrival_time_single_user_on_depot(make_scenario):
    s = make_scenario([(0.0, 0.0, 1.0, 10.0)])
    assert arrival_times(Tour((1,)), [5.0], s) == [pytest.approx(1.0)]


def test_arrival_times_two_hops(make_scenario):
    s = make_scenario([(10.0, 0.0, 1.0, 10.0), (20.0, 0.0, 1.0, 10.0)])
    reach, done = reach_and_completion_times(Tour((1, 2)), [5.0, 5.0], s)
    assert reach == [pytest.approx(2.0), pytest.approx(5.0)]
    assert done == [pytest.approx(3.0), pytest.approx(6.0)]


def test_arrival_times_accept_return_hop_speed(make_scenario):
    s = make_scenario([(10.0, 0.0, 1.0, 10.0), (20.0, 0.0, 1.0, 10.0)])
    assert arrival_times(Tour((1, 2)), [5.0, 5.0, 1.0], s) == arrival_times(Tour((1, 2)), [5.0, 5.0], s)


def test_arrival_times_length_mismatch(make_scenario):
    s = make_scenario([(10.0, 0.0, 1.0, 10.0), (20.0, 0.0, 1.0, 10.0)])
    with pytest.raises(InvalidArgumentError):
        arrival_times(Tour((1, 2)), [5.0], s)
    with pytest.raises(InvalidArgumentError):
        arrival_times(Tour((1, 2)), [5.0, 0.0], s)


def test_arrival_times_non_increasing_in_speed(make_scenario):
    rng = np.random.default_rng(3)
    s = make_scenario([(float(x), float(y), 1.0, 100.0) for x, y in rng.uniform(0, 400, (5, 2))])
    tour = Tour((3, 1, 5, 2, 4))
    for _ in range(50):
        slow = rng.uniform(1.0, 40.0, 5)
        fast = slow * rng.uniform(1.0, 2.0, 5)
        for t_slow, t_fast in zip(arrival_times(tour, slow, s), arrival_times(tour, fast, s)):
            assert t_fast <= t_slow + 1e-12


def test_mission_time_adds_return_hop(make_scenario):
    s = make_scenario([(30.0, 40.0, 2.0, 100.0)], v_max=10.0)
    tour = Tour((1,))
    assert mission_time(tour, [5.0], s) == pytest.approx(10.0 + 2.0 + 5.0)
    assert mission_time(tour, [5.0, 25.0], s) == pytest.approx(10.0 + 2.0 + 2.0)


def test_timing_table_feasibility_is_inclusive():
    table = TimingTable.from_travel_matrix([[0.0, 1.5], [1.5, 0.0]], [0.5], [2.0])
    assert table.completion_times((1,)) == [2.0]
    assert table.is_feasible((1,))
    assert table.return_time((1,)) == 1.5


def test_build_fills_derived_uav_defaults(make_scenario):
    s = make_scenario([(100.0, 0.0, 1.0, 10.0)], v_max=30.0)
    assert s.uav.delta_v == 30.0
    assert 0.0 < s.uav.v_hover <= 30.0


def test_build_sorts_users_by_id():
    users = [
        GroundUser(id=2, position=(5.0, 5.0), data_bits=1e6, deadline_s=10.0, rate_bps=1e6),
        GroundUser(id=1, position=(1.0, 1.0), data_bits=1e6, deadline_s=10.0, rate_bps=1e6),
    ]
    s = Scenario.build((0.0, 0.0), users)
    assert [u.id for u in s.users] == [1, 2]
    assert s.positions[1].tolist() == [1.0, 1.0]


def test_build_collects_every_problem():
    users = [
        GroundUser(id=1, position=(10.0, 10.0), data_bits=0.0, deadline_s=-1.0),
        GroundUser(id=3, position=(500.0, 10.0), data_bits=1e6, deadline_s=5.0),
    ]
    with pytest.raises(ScenarioValidationError) as info:
        Scenario.build((0.0, 0.0), users, uav=UavParams(v_max=-3.0), area_m=400.0)
    problems = info.value.problems
    assert any("eta_s" in p and "user 1" in p for p in problems)
    assert any("q_bits" in p for p in problems)
    assert any("ids" in p for p in problems)
    assert any("outside" in p for p in problems)
    assert any("uav.v_max" in p for p in problems)
    assert "eta_s" in str(info.value)


def test_service_time_from_channel_rate():
    users = [GroundUser(id=1, position=(10.0, 10.0), data_bits=50e6, deadline_s=10.0)]
    s = Scenario.build((0.0, 0.0), users)
    rate = s.rates_bps[1]
    assert rate > 0
    assert s.service_times[1] == pytest.approx(50e6 / rate)
    assert s.service_times[0] == 0.0
    assert np.isnan(s.rates_bps[0])


def test_tour_validation_and_rendering():
    assert str(Tour((2, 1, 3))) == "0->2->1->3->0"
    assert Tour.parse("2, 1,3").order == (2, 1, 3)
    assert Tour((2, 1)).hops == [(0, 2), (2, 1), (1, 0)]
    with pytest.raises(InvalidArgumentError):
        Tour((1, 1))
    with pytest.raises(InvalidArgumentError):
        Tour(())
    with pytest.raises(InvalidArgumentError):
        Tour.parse("1,x")
    with pytest.raises(InvalidArgumentError):
        Tour((1, 3)).check_users(3)
