#!/usr/bin/env python3
# === velocity_optimizer.py ===
# Minimum-energy hop speeds for a fixed tour (log-barrier Newton method) and the
# selection of the cheapest plan out of a planner's candidate tours.

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import optimize

from energy_model import (
    EnergyBreakdown,
    d2_e_fly,
    d_e_fly,
    fly_energy,
    hop_energy,
    max_range_speed,
    p_fly,
)
from planner_errors import (
    InfeasibleInputError,
    InvalidArgumentError,
    NumericFailureError,
)
from scenario_core import mission_time, reach_and_completion_times

MU_START = 1e-2  # times the objective at the start point
MU_END = 1e-12
MU_FACTOR = 10.0
NEWTON_TOLERANCE = 1e-14  # Newton decrement, relative to the start objective
MAX_NEWTON_STEPS = 100
ARMIJO_FRACTION = 0.25
STEP_SHRINK = 0.5
MIN_STEP = 1e-14
BOUNDARY_FRACTION = 0.99
TIGHT_SLACK_S = 1e-7  # deadline slack at v_max below which the prefix is pinned to v_max
SNAP_MPS = 1e-3
KKT_TOLERANCE = 1e-6
ACTIVE_TOLERANCE = 1e-6


@dataclass(frozen=True)
class VelocityProfile:
    speeds: tuple

    @classmethod
    def constant(cls, v, hops):
        return cls(tuple([float(v)] * hops))

    def to_dict(self):
        return {"speeds_mps": list(self.speeds)}


@dataclass
class OptimizationReport:
    tour: object
    profile: VelocityProfile
    energy: EnergyBreakdown
    iterations: int
    kkt_residual: float
    converged: bool

    def to_dict(self):
        return {
            "tour": list(self.tour.order),
            "speeds_mps": list(self.profile.speeds),
            "energy": self.energy.to_dict(),
            "iterations": self.iterations,
            "kkt_residual": self.kkt_residual,
            "converged": self.converged,
        }


@dataclass
class PlanResult:
    method: str
    tour: object
    profile: VelocityProfile
    energy: EnergyBreakdown
    # completion time at the last user for the planned order at v_max
    travel_time_s: float
    reach_times_s: list = field(default_factory=list)
    completion_times_s: list = field(default_factory=list)
    mission_time_s: float = 0.0
    within_budget: bool = True
    kkt_residual: float = 0.0

    def to_dict(self):
        return {
            "method": self.method,
            "tour": list(self.tour.order),
            "speeds_mps": list(self.profile.speeds),
            "energy": self.energy.to_dict(),
            "travel_time_s": self.travel_time_s,
            "reach_times_s": list(self.reach_times_s),
            "completion_times_s": list(self.completion_times_s),
            "mission_time_s": self.mission_time_s,
            "within_budget": self.within_budget,
            "kkt_residual": self.kkt_residual,
        }


def objective_and_gradient(speeds, distances, p):
    """Total fly energy over hops and its gradient with respect to the hop speeds."""
    v = np.asarray(speeds, dtype=float)
    d = np.asarray(distances, dtype=float)
    if v.shape != d.shape:
        raise InvalidArgumentError(f"{v.size} speeds for {d.size} hops")
    if np.any(v <= 0):
        raise InvalidArgumentError("every hop speed must be positive")
    return float(np.sum(fly_energy(v, d, p))), np.asarray(d_e_fly(v, d, p), dtype=float)


def tour_energy(tour, speeds, s):
    """Fly, hover and communication energy of the whole tour at the given hop speeds."""
    total = EnergyBreakdown()
    for (a, b), v in zip(tour.hops, speeds):
        total = total + hop_energy(s.distance_matrix[a, b], v, s.service_times[b], s.uav, s.power)
    return total


def energy_floor(tour, s, cruise=None):
    """Lower bound on the tour energy: every hop at the max-range speed, deadlines ignored."""
    if cruise is None:
        cruise = max_range_speed(s.power, s.uav.v_max, s.uav.v_min)
    length = sum(s.distance_matrix[a, b] for a, b in tour.hops)
    fixed = (p_fly(s.uav.v_hover, s.power) + s.uav.p_com_w) * float(np.sum(s.service_times))
    return p_fly(cruise, s.power) / cruise * length + fixed


class _BarrierProblem:
    """Hop speeds v_1..v_{K+1} under constraint rows g(v) <= 0.

    Row order: lower speed bounds, upper speed bounds, cumulative deadlines,
    then both signs of the speed changes when delta_v can bind. The lower
    bound is raised to the max-range speed: a slower hop can be sped up to it,
    saving energy and time without widening any speed change.
    """

    def __init__(self, tour, s, cruise):
        k = len(tour.order)
        n = k + 1
        self.power = s.power
        self.distances = np.array([s.distance_matrix[a, b] for a, b in tour.hops])
        served = np.cumsum([s.service_times[u] for u in tour.order])
        # flying time available up to each user once service times are paid
        self.flight_budget = np.array([s.deadlines[u] for u in tour.order]) - served
        self.v_max = s.uav.v_max
        self.delta_v = s.uav.delta_v
        self.lower = max(s.uav.v_min, cruise)
        if self.v_max - self.lower < 1e-9 * self.v_max:
            self.lower = s.uav.v_min
        self.prefix = np.tril(np.ones((k, n)))
        self.eye = np.eye(n)
        if self.delta_v < self.v_max - self.lower:
            self.change = np.diff(self.eye, axis=0)
        else:
            self.change = None  # every in-box profile satisfies it
        self.free = np.ones(n, dtype=bool)
        self.rows = np.ones(len(self.constraints(np.full(n, self.v_max))[0]), dtype=bool)

    @property
    def hops(self):
        return len(self.distances)

    def constraints(self, v):
        fly = self.prefix @ (self.distances / v)
        values = [self.lower - v, v - self.v_max, fly - self.flight_budget]
        jacobian = [-self.eye, self.eye, self.prefix * (-self.distances / v ** 2)]
        if self.change is not None:
            step = self.change @ v
            values += [step - self.delta_v, -step - self.delta_v]
            jacobian += [self.change, -self.change]
        return np.concatenate(values), np.vstack(jacobian)

    def is_feasible(self, v):
        return bool(np.all(self.constraints(v)[0] <= 0.0))

    def objective(self, v):
        return objective_and_gradient(v, self.distances, self.power)[0]

    def barrier(self, v, mu):
        g = self.constraints(v)[0][self.rows]
        if np.any(g >= 0.0):
            return np.inf
        return self.objective(v) - mu * np.sum(np.log(-g))

    def interior_start(self):
        """Pin hops ahead of a deadline with no slack at v_max and back the others off into the interior."""
        n = self.hops
        slack = self.flight_budget - self.prefix @ (self.distances / self.v_max)
        tight = np.flatnonzero(slack <= TIGHT_SLACK_S)
        pinned = int(tight[-1]) + 1 if tight.size else 0
        self.free = np.arange(n) >= pinned
        rows = [self.free, self.free, np.arange(len(slack)) >= pinned]
        if self.change is not None:
            # pinned hops form a prefix, so pair (i, i+1) moves iff hop i+1 is free
            rows += [self.free[1:], self.free[1:]]
        self.rows = np.concatenate(rows)

        room = [0.5 * (self.v_max - self.lower)]
        if self.change is not None:
            room.append(0.5 * self.delta_v)
        length = float(np.sum(self.distances[self.free]))
        if pinned < len(slack) and length > 0.0:
            # slowing every free hop by this much spends half of the smallest remaining slack
            room.append(self.v_max - 1.0 / (1.0 / self.v_max + slack[pinned:].min() / (2.0 * length)))
        v = np.full(n, float(self.v_max))
        v[self.free] -= min(room)
        return v

    def newton_direction(self, v, mu):
        """Newton step on the free speeds; returns (full-length direction, Newton decrement)."""
        f_grad = objective_and_gradient(v, self.distances, self.power)[1]
        g, jac = self.constraints(v)
        g, jac = g[self.rows], jac[self.rows]
        inv_slack = 1.0 / -g
        grad = f_grad + mu * (jac.T @ inv_slack)
        weights = np.zeros(len(self.rows))
        weights[self.rows] = inv_slack
        n = self.hops
        # deadline rows are the only nonlinear ones: d/dv (d/v^2) terms
        deadline_weights = weights[2 * n:2 * n + len(self.flight_budget)]
        curvature = (deadline_weights @ self.prefix) * 2.0 * self.distances / v ** 3
        hess = np.diag(d2_e_fly(v, self.distances, self.power) + mu * curvature) + mu * (
            jac.T @ (jac * np.square(inv_slack)[:, np.newaxis])
        )
        free = self.free
        hess = hess[np.ix_(free, free)]
        grad = grad[free]
        # Jacobi scaling keeps the factorization usable next to a boundary
        scale = 1.0 / np.sqrt(np.diag(hess))
        scaled = hess * scale[:, np.newaxis] * scale[np.newaxis, :]
        try:
            step = scipy.linalg.cho_solve(scipy.linalg.cho_factor(scaled), -grad * scale) * scale
        except (scipy.linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(scaled, -grad * scale, rcond=None)[0] * scale
        direction = np.zeros(n)
        direction[free] = step
        return direction, float(-grad @ step)

    def max_step(self, v, direction):
        """Fraction-to-boundary step length along the linearized rows."""
        g, jac = self.constraints(v)
        rate = jac[self.rows] @ direction
        room = -g[self.rows]
        growing = rate > 0.0
        if not np.any(growing):
            return 1.0
        return min(1.0, BOUNDARY_FRACTION * float(np.min(room[growing] / rate[growing])))

    def solve(self):
        """Follow the barrier path; returns (speeds, Newton steps, whether every centering finished)."""
        v = self.interior_start()
        if not np.isfinite(self.barrier(v, 1.0)):
            raise NumericFailureError(
                "no interior start point", best_iterate=VelocityProfile.constant(self.v_max, self.hops)
            )
        scale = max(self.objective(v), 1.0)
        mu = MU_START * scale
        iterations, centered = 0, True
        while mu >= MU_END * scale * (1.0 - 1e-9):
            v, steps, done = _centering(self, v, mu, scale)
            iterations += steps
            centered = centered and done
            mu /= MU_FACTOR
        return v, iterations, centered

    def snap_to_lower(self, v):
        """Move hops left just above the max-range speed onto it when that keeps every row satisfied."""
        v = v.copy()
        for i in np.flatnonzero((v > self.lower) & (v - self.lower < SNAP_MPS)):
            trial = v.copy()
            trial[i] = self.lower
            if self.is_feasible(trial):
                v = trial
        return v

    def kkt_residual(self, v):
        """Relative stationarity residual with multipliers refit on the near-active rows."""
        f_grad = objective_and_gradient(v, self.distances, self.power)[1]
        g, jac = self.constraints(v)
        residual = f_grad.copy()
        active = -g <= ACTIVE_TOLERANCE
        if np.any(active):
            multipliers, _ = optimize.nnls(jac[active].T, -residual)
            residual = residual + jac[active].T @ multipliers
        return float(np.max(np.abs(residual)) / max(1.0, np.max(np.abs(f_grad))))


def _centering(problem, v, mu, scale):
    """Damped Newton on the barrier function for one mu; returns (v, steps, finished)."""
    for steps in range(1, MAX_NEWTON_STEPS + 1):
        direction, decrement = problem.newton_direction(v, mu)
        if not np.all(np.isfinite(direction)):
            raise NumericFailureError(
                f"non-finite Newton step at mu={mu:g}", best_iterate=VelocityProfile(tuple(float(x) for x in v))
            )
        if decrement / 2.0 <= NEWTON_TOLERANCE * scale:
            return v, steps, True
        current = problem.barrier(v, mu)
        t = problem.max_step(v, direction)
        while t >= MIN_STEP:
            trial = v + t * direction
            value = problem.barrier(trial, mu)
            if np.isfinite(value) and value <= current - ARMIJO_FRACTION * t * decrement:
                break
            t *= STEP_SHRINK
        else:
            logging.debug(f"Line search stalled at mu={mu:g} after {steps} steps")
            return v, steps, True
        v = trial
    logging.debug(f"Centering stopped after {MAX_NEWTON_STEPS} steps at mu={mu:g}")
    return v, MAX_NEWTON_STEPS, False


def _report(tour, s, problem, v, iterations):
    residual = problem.kkt_residual(v)
    profile = VelocityProfile(tuple(float(x) for x in v))
    return OptimizationReport(
        tour=tour,
        profile=profile,
        energy=tour_energy(tour, profile.speeds, s),
        iterations=iterations,
        kkt_residual=residual,
        converged=residual < KKT_TOLERANCE,
    )


def optimize_velocities(tour, s):
    """Minimum fly-energy hop speeds for a fixed tour under deadline, box and speed-change limits.

    When every hop can fly its max-range speed the answer is immediate.
    Otherwise the log-barrier path is followed from a strictly interior start,
    with mu running from 1e-2 to 1e-12 times the starting energy.
    """
    tour.check_users(s.k_users)
    table = s.timing_table()
    if not table.is_feasible(tour.order):
        raise InfeasibleInputError(f"tour {tour} misses a deadline even at v_max={s.uav.v_max}")

    cruise = max_range_speed(s.power, s.uav.v_max, s.uav.v_min)
    problem = _BarrierProblem(tour, s, cruise)
    v = np.full(problem.hops, cruise)
    iterations, centered = 0, True
    if not problem.is_feasible(v):
        v, iterations, centered = problem.solve()
        v = problem.snap_to_lower(v)

    report = _report(tour, s, problem, v, iterations)
    if not report.converged:
        if not centered:
            raise NumericFailureError(
                f"tour {tour}: barrier path did not converge (KKT residual {report.kkt_residual:.3g})",
                best_iterate=report.profile,
            )
        logging.warning(f"Tour {tour}: KKT residual {report.kkt_residual:.3g} above {KKT_TOLERANCE:g}")
    return report


def _optimize_or_none(tour, s):
    try:
        return optimize_velocities(tour, s)
    except InfeasibleInputError as e:
        logging.warning(f"Skipping tour {tour}: {e}")
        return None
    except NumericFailureError as e:
        # iterates stay strictly feasible, so the last one is still a valid plan
        if e.best_iterate is None:
            logging.warning(f"Skipping tour {tour}: {e}")
            return None
        logging.warning(f"{e}; keeping the last feasible iterate")
        problem = _BarrierProblem(tour, s, max_range_speed(s.power, s.uav.v_max, s.uav.v_min))
        return _report(tour, s, problem, np.asarray(e.best_iterate.speeds), 0)


def pick_best_plan(path_set, s, workers=1):
    """Optimize every candidate tour and return the cheapest one within the energy budget.

    Ties on total energy go to the shorter travel time, then the smaller order.
    Returns None when no candidate fits the budget (an outage).
    """
    tours = list(path_set.tours)
    if not tours:
        return None
    budget = s.uav.energy_budget_j
    if workers > 1 and len(tours) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(tours))) as pool:
            reports = list(pool.map(_optimize_or_none, tours, [s] * len(tours)))
    else:
        cruise = max_range_speed(s.power, s.uav.v_max, s.uav.v_min)
        floors = [energy_floor(tour, s, cruise) for tour in tours]
        reports = [None] * len(tours)
        best_energy = budget
        # cheapest floor first so a tour that reaches its floor prunes the rest
        for i in sorted(range(len(tours)), key=lambda i: floors[i]):
            # no speed profile beats every hop flown at the max-range speed
            if floors[i] > best_energy * (1.0 + 1e-9):
                break
            report = _optimize_or_none(tours[i], s)
            if report is not None and report.energy.total_j <= best_energy:
                best_energy = report.energy.total_j
            reports[i] = report

    candidates = []
    for report, travel in zip(reports, path_set.travel_times):
        if report is None:
            continue
        if report.energy.total_j > budget:
            logging.debug(f"Tour {report.tour} needs {report.energy.total_j:.1f} J > budget {budget:.1f} J")
            continue
        candidates.append((report.energy.total_j, travel, report.tour.order, report))
    if not candidates:
        return None

    _, travel, _, best = min(candidates, key=lambda c: c[:3])
    reach, done = reach_and_completion_times(best.tour, best.profile, s)
    return PlanResult(
        method=path_set.method,
        tour=best.tour,
        profile=best.profile,
        energy=best.energy,
        travel_time_s=travel,
        reach_times_s=reach,
        completion_times_s=done,
        mission_time_s=mission_time(best.tour, best.profile, s),
        within_budget=True,
        kkt_residual=best.kkt_residual,
    )
