#!/usr/bin/env python3
# === scenario_core.py ===
# Problem instance data (depot, ground users, UAV/channel/power parameters) and the
# derived distances and times every planner shares.

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from channel_model import ChannelParams, approx_rate, snr_gain
from energy_model import PowerModelParams, find_v_hover
from planner_errors import InvalidArgumentError, ScenarioValidationError

DEPOT = 0


@dataclass(frozen=True)
class GroundUser:
    id: int
    position: tuple
    data_bits: float
    deadline_s: float
    # Overrides the channel-derived rate (hand-built instances, worked examples)
    rate_bps: float = None

    def problems(self):
        found = []
        if len(self.position) != 2:
            found.append(f"user {self.id}: pos must have 2 coordinates (got {len(self.position)})")
        if not self.data_bits > 0:
            found.append(f"user {self.id}: q_bits must be > 0 (got {self.data_bits})")
        if not self.deadline_s > 0:
            found.append(f"user {self.id}: eta_s must be > 0 (got {self.deadline_s})")
        if self.rate_bps is not None and not self.rate_bps > 0:
            found.append(f"user {self.id}: rate_bps must be > 0 (got {self.rate_bps})")
        return found


@dataclass(frozen=True)
class UavParams:
    """Flight and radio parameters. delta_v and v_hover are filled by Scenario.build when left as None."""

    altitude_m: float = 50.0
    v_max: float = 40.0
    delta_v: float = None
    v_hover: float = None
    p_com_w: float = 5.0
    energy_budget_j: float = 100e3
    v_min: float = 0.1

    def problems(self):
        found = []
        for name in ("altitude_m", "v_max", "delta_v", "v_hover", "p_com_w", "energy_budget_j", "v_min"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                found.append(f"uav.{name} must be > 0 (got {value})")
        if self.v_hover is not None and self.v_hover > self.v_max:
            found.append(f"uav.v_hover must be <= v_max (got {self.v_hover} > {self.v_max})")
        if self.v_min >= self.v_max:
            found.append(f"uav.v_min must be < v_max (got {self.v_min} >= {self.v_max})")
        return found


@dataclass(frozen=True)
class Tour:
    """Visiting order over user indices; the depot endpoints are implied."""

    order: tuple

    def __post_init__(self):
        order = tuple(int(u) for u in self.order)
        object.__setattr__(self, "order", order)
        if not order:
            raise InvalidArgumentError("tour must visit at least one user")
        if len(set(order)) != len(order):
            raise InvalidArgumentError(f"tour visits a user twice: {list(order)}")
        if min(order) < 1:
            raise InvalidArgumentError(f"tour holds a non-user node: {list(order)}")

    @classmethod
    def parse(cls, text):
        try:
            return cls(tuple(int(part) for part in text.split(",") if part.strip()))
        except ValueError:
            raise InvalidArgumentError(f"tour must be comma-separated user ids (got {text!r})") from None

    @property
    def nodes(self):
        return (DEPOT,) + self.order + (DEPOT,)

    @property
    def hops(self):
        nodes = self.nodes
        return list(zip(nodes[:-1], nodes[1:]))

    def check_users(self, k_users):
        if sorted(self.order) != list(range(1, k_users + 1)):
            raise InvalidArgumentError(
                f"tour {list(self.order)} is not a permutation of users 1..{k_users}"
            )

    def __str__(self):
        return "->".join(str(n) for n in self.nodes)


@dataclass(frozen=True, eq=False)
class TimingTable:
    """Times seen by the path planners at a fixed speed.

    travel_s[j, k] is the flight time of hop j->k, service_s[k] the time spent
    serving user k (service_s[0] = 0) and deadlines_s[k] its requested timeout
    (deadlines_s[0] = inf). The planner cost a_jk is travel_s[j, k] + service_s[k].
    """

    travel_s: np.ndarray
    service_s: np.ndarray
    deadlines_s: np.ndarray

    def __post_init__(self):
        n = len(self.service_s)
        if self.travel_s.shape != (n, n) or len(self.deadlines_s) != n:
            raise InvalidArgumentError(
                f"timing table shapes disagree: travel {self.travel_s.shape}, "
                f"service {len(self.service_s)}, deadlines {len(self.deadlines_s)}"
            )
        if n < 2:
            raise InvalidArgumentError("timing table needs the depot and at least one user")

    @classmethod
    def from_travel_matrix(cls, travel, service, deadlines):
        """Build from user-only service times and deadlines (length K)."""
        travel = np.array(travel, dtype=float)
        service = np.concatenate(([0.0], np.asarray(service, dtype=float)))
        deadlines = np.concatenate(([np.inf], np.asarray(deadlines, dtype=float)))
        np.fill_diagonal(travel, 0.0)
        return cls(_frozen(travel), _frozen(service), _frozen(deadlines))

    @classmethod
    def from_cost_matrix(cls, cost, deadlines):
        """Build from a published cost matrix a_jk that already includes service times."""
        cost = np.array(cost, dtype=float)
        return cls.from_travel_matrix(cost, np.zeros(len(cost) - 1), deadlines)

    @property
    def k_users(self):
        return len(self.service_s) - 1

    @cached_property
    def cost_matrix(self):
        cost = self.travel_s + self.service_s[np.newaxis, :]
        np.fill_diagonal(cost, np.inf)
        return _frozen(cost)

    def cost(self, j, k):
        return self.travel_s[j, k] + self.service_s[k]

    def completion_times(self, order):
        times = []
        t, prev = 0.0, DEPOT
        for k in order:
            t += self.cost(prev, k)
            times.append(t)
            prev = k
        return times

    def is_feasible(self, order):
        return all(
            t <= self.deadlines_s[k] for t, k in zip(self.completion_times(order), order)
        )

    def return_time(self, order):
        return self.travel_s[order[-1], DEPOT]


def _frozen(array):
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Scenario:
    depot: tuple
    users: tuple
    uav: UavParams = field(default_factory=UavParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    power: PowerModelParams = field(default_factory=PowerModelParams)
    area_m: float = None

    @classmethod
    def build(cls, depot, users, uav=None, channel=None, power=None, area_m=None):
        """Validate every invariant, sort users by id and fill derived UAV defaults.

        All failures are collected and raised together as ScenarioValidationError.
        """
        uav = uav or UavParams()
        channel = channel or ChannelParams()
        power = power or PowerModelParams()
        users = tuple(sorted(users, key=lambda u: u.id))
        depot = tuple(float(c) for c in depot)

        problems = []
        if not users:
            problems.append("users must not be empty")
        ids = [u.id for u in users]
        if ids != list(range(1, len(users) + 1)):
            problems.append(f"user ids must be unique and cover 1..{len(users)} (got {ids})")
        for user in users:
            problems.extend(user.problems())
        problems.extend(uav.problems())
        problems.extend(channel.problems())
        problems.extend(power.problems())
        if len(depot) != 2:
            problems.append(f"depot must have 2 coordinates (got {len(depot)})")
        if area_m is not None:
            if not area_m > 0:
                problems.append(f"area_m must be > 0 (got {area_m})")
            else:
                for label, pos in [("depot", depot)] + [(f"user {u.id}", u.position) for u in users]:
                    if any(not 0.0 <= c <= area_m for c in pos):
                        problems.append(f"{label}: position {tuple(pos)} outside [0, {area_m}]^2")
        if problems:
            raise ScenarioValidationError(problems)

        if uav.delta_v is None:
            uav = replace(uav, delta_v=uav.v_max)
        if uav.v_hover is None:
            v_hover = find_v_hover(power, uav.v_max)
            logging.debug(f"Filled v_hover={v_hover:.4f} m/s from the power curve")
            uav = replace(uav, v_hover=v_hover)
        users = tuple(replace(u, position=tuple(float(c) for c in u.position)) for u in users)
        return cls(depot, users, uav, channel, power, area_m)

    @property
    def k_users(self):
        return len(self.users)

    @cached_property
    def positions(self):
        return _frozen(np.array([self.depot] + [u.position for u in self.users], dtype=float))

    @cached_property
    def distance_matrix(self):
        diff = self.positions[:, np.newaxis, :] - self.positions[np.newaxis, :, :]
        return _frozen(np.hypot(diff[..., 0], diff[..., 1]))

    @cached_property
    def snr_gain(self):
        return snr_gain(self.channel, self.uav.p_com_w, self.uav.altitude_m)

    @cached_property
    def rates_bps(self):
        """Per-user designed rate; index 0 (depot) is nan."""
        shared = None
        rates = [np.nan]
        for user in self.users:
            if user.rate_bps is not None:
                rates.append(user.rate_bps)
                continue
            if shared is None:
                shared = approx_rate(self.channel, self.snr_gain)
            rates.append(shared)
        return _frozen(np.array(rates, dtype=float))

    @cached_property
    def service_times(self):
        tau = [0.0] + [u.data_bits / r for u, r in zip(self.users, self.rates_bps[1:])]
        return _frozen(np.array(tau, dtype=float))

    @cached_property
    def deadlines(self):
        return _frozen(np.array([np.inf] + [u.deadline_s for u in self.users], dtype=float))

    def timing_table(self, v=None):
        v = self.uav.v_max if v is None else v
        if not v > 0:
            raise InvalidArgumentError(f"speed must be positive (got {v})")
        return TimingTable(
            _frozen(self.distance_matrix / v), self.service_times, self.deadlines
        )


def _check_node(index, s):
    if not 0 <= index <= s.k_users:
        raise InvalidArgumentError(f"node index {index} outside 0..{s.k_users}")


def hop_distance(a, b, s):
    """Euclidean distance between nodes a and b (0 = depot)."""
    _check_node(a, s)
    _check_node(b, s)
    return float(s.distance_matrix[a, b])


def travel_time_matrix(s, v):
    """a_jk = l_jk / v + tau_k with +inf on the diagonal."""
    if not v > 0:
        raise InvalidArgumentError(f"speed must be positive (got {v})")
    return s.timing_table(v).cost_matrix


def _speeds_for(tour, profile):
    speeds = np.asarray(getattr(profile, "speeds", profile), dtype=float)
    k = len(tour.order)
    # the closing hop back to the depot does not affect any deadline
    if len(speeds) not in (k, k + 1):
        raise InvalidArgumentError(
            f"profile has {len(speeds)} speeds for a tour of {k} users (need {k} or {k + 1})"
        )
    if np.any(speeds <= 0):
        raise InvalidArgumentError("every hop speed must be positive")
    return speeds


def reach_and_completion_times(tour, profile, s):
    """Per-user arrival time and service completion time along the tour."""
    speeds = _speeds_for(tour, profile)
    reach, done = [], []
    t = 0.0
    for i, (a, b) in enumerate(tour.hops[: len(tour.order)]):
        _check_node(b, s)
        t += s.distance_matrix[a, b] / speeds[i]
        reach.append(t)
        t += s.service_times[b]
        done.append(t)
    return reach, done


def arrival_times(tour, profile, s):
    """T_k = sum over the first k hops of d_i / v_i + tau_{u_i}."""
    return reach_and_completion_times(tour, profile, s)[1]


def mission_time(tour, profile, s):
    """Completion time at the last user plus the return hop (at v_max when no speed is given)."""
    speeds = _speeds_for(tour, profile)
    last_speed = speeds[-1] if len(speeds) == len(tour.order) + 1 else s.uav.v_max
    return arrival_times(tour, speeds, s)[-1] + s.distance_matrix[tour.order[-1], DEPOT] / last_speed
