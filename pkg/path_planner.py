#!/usr/bin/env python3
# === path_planner.py ===
# Visiting-order search under per-user deadlines at maximum speed: exhaustive
# enumeration, one-hop-lookahead heuristic, subset dynamic programming and a
# distance-only TSP baseline.

import heapq
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np

from planner_errors import InvalidArgumentError, ProblemTooLargeError
from scenario_core import DEPOT, TimingTable, Tour

EXHAUSTIVE = "exhaustive"
HEURISTIC = "heuristic"
DP = "dp"
TSP = "tsp"
METHODS = (EXHAUSTIVE, HEURISTIC, DP, TSP)

EXHAUSTIVE_CAP = 10
DP_CAP = 20
TSP_CAP = 20


@dataclass
class FeasiblePathSet:
    method: str
    tours: list = field(default_factory=list)
    # completion time at the last user, per tour, at the planning speed
    travel_times: list = field(default_factory=list)
    # travel_times plus the return hop to the depot
    mission_times: list = field(default_factory=list)
    c1_feasible: list = field(default_factory=list)

    def __len__(self):
        return len(self.tours)

    def add(self, tour, table):
        done = table.completion_times(tour.order)
        self.tours.append(tour)
        self.travel_times.append(done[-1])
        self.mission_times.append(done[-1] + table.return_time(tour.order))
        self.c1_feasible.append(table.is_feasible(tour.order))

    def deadline_feasible(self):
        """Copy holding only the tours that meet every deadline at the planning speed."""
        kept = FeasiblePathSet(self.method)
        for row in zip(self.tours, self.travel_times, self.mission_times, self.c1_feasible):
            if row[3]:
                kept.tours.append(row[0])
                kept.travel_times.append(row[1])
                kept.mission_times.append(row[2])
                kept.c1_feasible.append(True)
        return kept

    def to_dict(self):
        return {
            "method": self.method,
            "tours": [
                {
                    "order": list(tour.order),
                    "travel_time_s": travel,
                    "mission_time_s": mission,
                    "deadline_feasible": ok,
                }
                for tour, travel, mission, ok in zip(
                    self.tours, self.travel_times, self.mission_times, self.c1_feasible
                )
            ],
        }


@dataclass(frozen=True)
class DpState:
    visited: int  # bit k-1 set for user k
    last: int
    cost: float
    parent: int  # previous user, DEPOT for the first hop

    @property
    def users(self):
        return frozenset(k + 1 for k in range(self.visited.bit_length()) if self.visited >> k & 1)


def _timing(s):
    return s if isinstance(s, TimingTable) else s.timing_table()


def _check_cap(k, cap, method):
    if k > cap:
        raise ProblemTooLargeError(
            f"{method} planner refuses K={k} users (cap {cap}); raise the cap explicitly to run it"
        )


def check_first_hop_feasibility(s):
    """Whether every user can be served in time when visited first, plus the a_0k vector."""
    table = _timing(s)
    a = np.array([table.cost(DEPOT, k) for k in range(1, table.k_users + 1)])
    return bool(np.all(a <= table.deadlines_s[1:])), a


def _feasible_orders(table, first, psi):
    """Deadline-feasible orders starting with `first`, keeping the psi best when psi is set."""
    rest = [k for k in range(1, table.k_users + 1) if k != first]
    start = table.cost(DEPOT, first)
    deadlines = table.deadlines_s
    found = []
    for perm in permutations(rest):
        t, prev = start, first
        for k in perm:
            t += table.cost(prev, k)
            if t > deadlines[k]:
                break
            prev = k
        else:
            found.append((t, (first,) + perm))
    if psi is not None:
        found = heapq.nsmallest(psi, found)
    return found


def exhaustive_search(s, psi=None, cap=EXHAUSTIVE_CAP, workers=1):
    """Enumerate every order and keep the psi shortest deadline-feasible ones (all when psi is None).

    Ties on total time fall back to lexicographic order. With workers > 1 the
    enumeration is split by first user across processes and merged afterwards.
    """
    table = _timing(s)
    k = table.k_users
    _check_cap(k, cap, EXHAUSTIVE)
    if psi is not None and psi < 1:
        raise InvalidArgumentError(f"psi must be >= 1 (got {psi})")

    result = FeasiblePathSet(EXHAUSTIVE)
    ok, a = check_first_hop_feasibility(table)
    if not ok:
        logging.debug(f"First-hop check failed: a={a.tolist()}")
        return result

    firsts = list(range(1, k + 1))
    if workers > 1 and k > 1:
        with ProcessPoolExecutor(max_workers=min(workers, k)) as pool:
            chunks = list(pool.map(_feasible_orders, [table] * k, firsts, [psi] * k))
    else:
        chunks = [_feasible_orders(table, first, psi) for first in firsts]

    merged = [item for chunk in chunks for item in chunk]
    chosen = sorted(merged) if psi is None else heapq.nsmallest(psi, merged)
    for _, order in chosen:
        result.add(Tour(order), table)
    logging.debug(f"Exhaustive search kept {len(result)} of {len(merged)} feasible orders")
    return result


def heuristic_search(s):
    """Greedy construction: among reachable users pick the smallest deadline, then the cheapest hop."""
    table = _timing(s)
    result = FeasiblePathSet(HEURISTIC)
    cost = table.cost_matrix
    deadlines = table.deadlines_s
    unvisited = np.ones(table.k_users + 1, dtype=bool)
    unvisited[DEPOT] = False
    order = []
    t, current = 0.0, DEPOT
    while unvisited.any():
        reachable = np.flatnonzero(unvisited & (t + cost[current] <= deadlines))
        if reachable.size == 0:
            logging.debug(f"Heuristic stuck after {order} at t={t:.6g}s")
            return result
        # lexsort keys run last-to-first: deadline, then hop cost, then index
        ranked = np.lexsort((reachable, cost[current, reachable], deadlines[reachable]))
        nxt = int(reachable[ranked[0]])
        t += cost[current, nxt]
        order.append(nxt)
        unvisited[nxt] = False
        current = nxt
    result.add(Tour(order), table)
    return result


def dp_layers(s, cap=DP_CAP):
    """Forward subset DP over (visited set, last user) states.

    Layer m holds the states with m visited users. A state is kept only when
    its cost meets the last user's deadline; per (set, last) the cheapest state
    survives and the first one inserted wins ties.
    """
    table = _timing(s)
    k_users = table.k_users
    _check_cap(k_users, cap, DP)
    deadlines = table.deadlines_s

    first = {}
    for k in range(1, k_users + 1):
        cost = table.cost(DEPOT, k)
        if cost <= deadlines[k]:
            first[(1 << (k - 1), k)] = DpState(1 << (k - 1), k, cost, DEPOT)
    layers = [first]

    for _ in range(1, k_users):
        nxt = {}
        for state in layers[-1].values():
            for k in range(1, k_users + 1):
                bit = 1 << (k - 1)
                if state.visited & bit:
                    continue
                cost = state.cost + table.cost(state.last, k)
                if cost > deadlines[k]:
                    continue
                key = (state.visited | bit, k)
                held = nxt.get(key)
                if held is None or cost < held.cost:
                    nxt[key] = DpState(state.visited | bit, k, cost, state.last)
        layers.append(nxt)
        if not nxt:
            break
    return layers


def _backtrack(layers, state):
    order = [state.last]
    for layer in reversed(layers[:-1]):
        if state.parent == DEPOT:
            break
        state = layer[(state.visited & ~(1 << (state.last - 1)), state.parent)]
        order.append(state.last)
    return tuple(reversed(order))


def dp_search(s, cap=DP_CAP):
    """Deadline-feasible orders recovered from every surviving full-set DP state (at most K)."""
    table = _timing(s)
    layers = dp_layers(table, cap)
    result = FeasiblePathSet(DP)
    if len(layers) < table.k_users or not layers[-1]:
        return result
    terminal = sorted(
        ((state.cost, _backtrack(layers, state)) for state in layers[-1].values())
    )
    for _, order in terminal:
        result.add(Tour(order), table)
    return result


def _popcounts(m):
    masks = np.arange(1 << m, dtype=np.int64)
    counts = np.zeros(1 << m, dtype=np.int64)
    for b in range(m):
        counts += (masks >> b) & 1
    return masks, counts


def tsp_baseline(s, cap=TSP_CAP):
    """Shortest closed tour over hop lengths only (Held-Karp); deadlines are reported, not enforced."""
    table = _timing(s)
    m = table.k_users
    _check_cap(m, cap, TSP)
    result = FeasiblePathSet(TSP)
    if m == 1:
        result.add(Tour((1,)), table)
        return result

    hop = table.travel_s
    between = hop[1:, 1:]
    size = 1 << m
    best = np.full((size, m), np.inf)
    parent = np.full((size, m), -1, dtype=np.int8)
    best[1 << np.arange(m), np.arange(m)] = hop[DEPOT, 1:]

    masks, counts = _popcounts(m)
    for layer in range(1, m):
        layer_masks = masks[counts == layer]
        for k in range(m):
            bit = 1 << k
            sources = layer_masks[(layer_masks & bit) == 0]
            if sources.size == 0:
                continue
            candidates = best[sources] + between[:, k]
            via = np.argmin(candidates, axis=1)
            best[sources | bit, k] = candidates[np.arange(sources.size), via]
            parent[sources | bit, k] = via

    full = size - 1
    closing = best[full] + hop[1:, DEPOT]
    last = int(np.argmin(closing))
    order = []
    mask = full
    while last >= 0:
        order.append(last + 1)
        prev = int(parent[mask, last])
        mask ^= 1 << last
        last = prev
    tour = Tour(tuple(reversed(order)))
    result.add(tour, table)
    logging.debug(f"TSP tour {tour} length-time {closing.min():.6g}s, deadline feasible={result.c1_feasible[0]}")
    return result


def run_planner(method, s, psi=None, exhaustive_cap=EXHAUSTIVE_CAP, dp_cap=DP_CAP, workers=1):
    """Dispatch one planner by name."""
    if method == EXHAUSTIVE:
        return exhaustive_search(s, psi=psi, cap=exhaustive_cap, workers=workers)
    if method == HEURISTIC:
        return heuristic_search(s)
    if method == DP:
        return dp_search(s, cap=dp_cap)
    if method == TSP:
        return tsp_baseline(s, cap=dp_cap)
    raise InvalidArgumentError(f"unknown planner method '{method}' (choose from {', '.join(METHODS)})")
