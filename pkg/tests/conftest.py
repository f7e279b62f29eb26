import numpy as np
import pytest

from scenario_core import GroundUser, Scenario, TimingTable, UavParams

INF = np.inf


@pytest.fixture
def lookahead_table():
    """Three users, 0.12 s service each, deadlines (2, 2, 5)."""
    travel = [
        [0.0, 1.0, 1.2, 1.3],
        [1.0, 0.0, 0.5, 1.5],
        [1.2, 0.5, 0.0, 2.0],
        [1.3, 1.5, 2.0, 0.0],
    ]
    return TimingTable.from_travel_matrix(travel, [0.12, 0.12, 0.12], [2.0, 2.0, 5.0])


@pytest.fixture
def subset_table():
    """Three users with service folded into the costs, deadlines (2, 2, 4)."""
    cost = [
        [INF, 1.0, 1.4, 1.2],
        [1.0, INF, 0.5, 1.5],
        [1.4, 0.5, INF, 2.0],
        [1.2, 1.5, 2.0, INF],
    ]
    return TimingTable.from_cost_matrix(cost, [2.0, 2.0, 4.0])


@pytest.fixture
def make_scenario():
    """Factory for hand-built scenarios with fixed 1 Mbit/s links.

    users is a list of (x, y, service_s, deadline_s).
    """

    def build(users, depot=(0.0, 0.0), **uav):
        ground = [
            GroundUser(id=i + 1, position=(x, y), data_bits=tau * 1e6, deadline_s=eta, rate_bps=1e6)
            for i, (x, y, tau, eta) in enumerate(users)
        ]
        return Scenario.build(depot, ground, uav=UavParams(**uav))

    return build


@pytest.fixture
def random_table():
    """Factory for random timing tables: points in a 400 m square flown at 40 m/s."""

    def build(rng, k, eta_min=3.0, eta_max=40.0):
        points = rng.uniform(0.0, 400.0, size=(k + 1, 2))
        diff = points[:, None, :] - points[None, :, :]
        travel = np.hypot(diff[..., 0], diff[..., 1]) / 40.0
        service = rng.uniform(0.5, 1.5, size=k)
        deadlines = rng.uniform(eta_min, eta_max, size=k)
        return TimingTable.from_travel_matrix(travel, service, deadlines)

    return build
