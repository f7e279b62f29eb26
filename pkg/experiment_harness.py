#!/usr/bin/env python3
# === experiment_harness.py ===
# Monte-Carlo trials over random user topologies: outage, energy and runtime per
# planner, parameter sweeps, combined outage and planner timing benchmarks.

import math
import time
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import pandas as pd

from channel_model import ChannelParams, empirical_outage
from energy_model import PowerModelParams
from path_planner import DP, EXHAUSTIVE, HEURISTIC, METHODS, TSP, run_planner
from planner_errors import InvalidArgumentError, PlannerError
from scenario_core import GroundUser, Scenario, UavParams
from velocity_optimizer import pick_best_plan

SWEEP_PARAMS = ("v_max", "eta_min", "area", "energy_budget", "k_users")
SWEEP_COLUMNS = [
    "sweep_value",
    "method",
    "outage_rate",
    "energy_mean_j",
    "energy_min_j",
    "energy_max_j",
    "runtime_mean_s",
    "trials",
]
BENCH_COLUMNS = ["k_users", "method", "runtime_mean_s", "trials"]
REFERENCE_AREA_M = 400.0
REFERENCE_DEPOT_M = (1.5, 398.0)
BENCH_DEADLINE_S = 1e9


@dataclass(frozen=True)
class ExperimentConfig:
    trials: int = 1000
    k_users: int = 7
    area_m: float = REFERENCE_AREA_M
    eta_min_s: float = 5.0
    eta_max_s: float = 17.0
    data_bits: float = 50e6
    seed: int = 0
    methods: tuple = METHODS
    sweep_param: str = None
    sweep_values: tuple = ()
    # exhaustive keeps every feasible order unless psi is set
    psi: int = None
    uav: UavParams = field(default_factory=UavParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    power: PowerModelParams = field(default_factory=PowerModelParams)
    channel_check_samples: int = 0
    exhaustive_cap: int = 10
    dp_cap: int = 20

    def problems(self):
        found = []
        if self.trials < 1:
            found.append(f"trials must be >= 1 (got {self.trials})")
        if self.k_users < 1:
            found.append(f"k_users must be >= 1 (got {self.k_users})")
        if not self.area_m > 0:
            found.append(f"area_m must be > 0 (got {self.area_m})")
        if self.eta_min_s > self.eta_max_s:
            found.append(f"eta_min_s must be <= eta_max_s (got {self.eta_min_s} > {self.eta_max_s})")
        if self.eta_min_s < 0:
            found.append(f"eta_min_s must be >= 0 (got {self.eta_min_s})")
        if not self.data_bits > 0:
            found.append(f"data_bits must be > 0 (got {self.data_bits})")
        if self.psi is not None and self.psi < 1:
            found.append(f"psi must be >= 1 (got {self.psi})")
        if self.channel_check_samples < 0:
            found.append(f"channel_check_samples must be >= 0 (got {self.channel_check_samples})")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            found.append(f"methods must be a non-empty subset of {list(METHODS)} (got {list(self.methods)})")
        if self.sweep_param is not None and self.sweep_param not in SWEEP_PARAMS:
            found.append(f"sweep.param must be one of {list(SWEEP_PARAMS)} (got {self.sweep_param!r})")
        if self.sweep_param is not None and not self.sweep_values:
            found.append("sweep.values must not be empty")
        largest_k = self.k_users
        if self.sweep_param == "k_users" and self.sweep_values:
            largest_k = max(int(v) for v in self.sweep_values)
        if EXHAUSTIVE in self.methods and largest_k > self.exhaustive_cap:
            found.append(f"exhaustive planner capped at K={self.exhaustive_cap} (config reaches K={largest_k})")
        if any(m in self.methods for m in (DP, TSP)) and largest_k > self.dp_cap:
            found.append(f"dp/tsp planners capped at K={self.dp_cap} (config reaches K={largest_k})")
        found.extend(self.uav.problems())
        found.extend(self.channel.problems())
        found.extend(self.power.problems())
        return found

    def with_value(self, param, value):
        """Copy of the config with one sweep parameter set."""
        if param is None:
            return self
        if param == "v_max":
            return replace(self, uav=replace(self.uav, v_max=float(value)))
        if param == "eta_min":
            return replace(self, eta_min_s=float(value))
        if param == "area":
            return replace(self, area_m=float(value))
        if param == "energy_budget":
            return replace(self, uav=replace(self.uav, energy_budget_j=float(value)))
        if param == "k_users":
            return replace(self, k_users=int(value))
        raise InvalidArgumentError(f"unknown sweep parameter '{param}'")

    def to_dict(self):
        return asdict(self)


@dataclass
class MethodOutcome:
    method: str
    success: bool = False
    # a deadline-feasible order existed (budget not yet applied)
    path_found: bool = False
    energy_j: float = math.nan
    runtime_s: float = math.nan


@dataclass
class TrialResult:
    seed: int
    outcomes: dict
    channel_outage: float = math.nan


@dataclass(frozen=True)
class CombinedOutage:
    infeasible_rate: float
    epsilon: float
    combined: float


@dataclass
class SweepResult:
    table: pd.DataFrame
    details: pd.DataFrame


def trial_seed(master_seed, index):
    """Integer seed of trial `index`, derived from the master seed."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def depot_for_area(area_m):
    scale = area_m / REFERENCE_AREA_M
    return (REFERENCE_DEPOT_M[0] * scale, REFERENCE_DEPOT_M[1] * scale)


def sample_scenario(cfg, rng):
    """Users uniform over the square area, deadlines uniform in [eta_min, eta_max]."""
    positions = rng.uniform(0.0, cfg.area_m, size=(cfg.k_users, 2))
    deadlines = rng.uniform(cfg.eta_min_s, cfg.eta_max_s, size=cfg.k_users)
    users = [
        GroundUser(id=k + 1, position=tuple(positions[k]), data_bits=cfg.data_bits, deadline_s=float(deadlines[k]))
        for k in range(cfg.k_users)
    ]
    return Scenario.build(
        depot_for_area(cfg.area_m),
        users,
        uav=cfg.uav,
        channel=cfg.channel,
        power=cfg.power,
        area_m=cfg.area_m,
    )


def _run_method(method, scenario, cfg):
    outcome = MethodOutcome(method)
    start = time.perf_counter()
    try:
        path_set = run_planner(
            method,
            scenario,
            psi=cfg.psi,
            exhaustive_cap=cfg.exhaustive_cap,
            dp_cap=cfg.dp_cap,
        ).deadline_feasible()
        outcome.path_found = len(path_set) > 0
        plan = pick_best_plan(path_set, scenario)
    except PlannerError as e:
        logging.warning(f"{method} failed inside trial: {e}")
        plan = None
    outcome.runtime_s = time.perf_counter() - start
    if plan is not None:
        outcome.success = True
        outcome.energy_j = plan.energy.total_j
    return outcome


def _channel_check(cfg, scenario, seed):
    rates = []
    for user in scenario.users:
        child = np.random.SeedSequence([seed, user.id])
        rates.append(
            empirical_outage(
                cfg.channel,
                scenario.snr_gain,
                scenario.rates_bps[user.id],
                cfg.channel_check_samples,
                child,
            )
        )
    return float(np.mean(rates))


def run_trial(cfg, seed):
    """One random topology through every configured method; outcome is a function of seed only."""
    rng = np.random.default_rng(seed)
    try:
        scenario = sample_scenario(cfg, rng)
    except PlannerError as e:
        logging.warning(f"Trial seed {seed}: sampled scenario rejected ({e}); outage for all methods")
        return TrialResult(seed, {m: MethodOutcome(m) for m in cfg.methods})

    outcomes = {m: _run_method(m, scenario, cfg) for m in cfg.methods}
    channel = math.nan
    if cfg.channel_check_samples > 0:
        channel = _channel_check(cfg, scenario, seed)
    return TrialResult(seed, outcomes, channel)


def _trial_job(job):
    cfg, seed = job
    return run_trial(cfg, seed)


def combined_outage(infeasible_rate, epsilon):
    """Union of the link outage and the no-feasible-plan event, assuming independence."""
    for name, value in (("infeasible_rate", infeasible_rate), ("epsilon", epsilon)):
        if not 0.0 <= value <= 1.0:
            raise InvalidArgumentError(f"{name} must be in [0, 1] (got {value})")
    return CombinedOutage(
        infeasible_rate=infeasible_rate,
        epsilon=epsilon,
        combined=1.0 - (1.0 - epsilon) * (1.0 - infeasible_rate),
    )


def _summarize(value, method, results, epsilon, record_runtime):
    outcomes = [r.outcomes[method] for r in results]
    energies = np.array([o.energy_j for o in outcomes if o.success])
    trials = len(outcomes)
    no_plan = 1.0 - len(energies) / trials
    no_path = 1.0 - sum(o.path_found for o in outcomes) / trials
    outage = combined_outage(no_plan, epsilon)
    row = {
        "sweep_value": value,
        "method": method,
        "outage_rate": outage.combined,
        "energy_mean_j": float(np.mean(energies)) if energies.size else math.nan,
        "energy_min_j": float(np.min(energies)) if energies.size else math.nan,
        "energy_max_j": float(np.max(energies)) if energies.size else math.nan,
        "runtime_mean_s": float(np.mean([o.runtime_s for o in outcomes])) if record_runtime else math.nan,
        "trials": trials,
    }
    detail = {
        "sweep_value": value,
        "method": method,
        "infeasible_rate": no_plan,
        "no_path_rate": no_path,
        "epsilon": epsilon,
        "combined_outage": outage.combined,
        "channel_outage_empirical": float(np.nanmean([r.channel_outage for r in results]))
        if any(not math.isnan(r.channel_outage) for r in results)
        else math.nan,
    }
    return row, detail


def run_sweep(cfg, workers=1, record_runtime=False):
    """Run cfg.trials trials per sweep value and summarize each method.

    Trial i uses the same seed at every sweep value, so the sweep compares the
    methods on common topologies. Output does not depend on `workers`.
    """
    problems = cfg.problems()
    if problems:
        raise InvalidArgumentError("; ".join(problems))
    values = list(cfg.sweep_values) if cfg.sweep_param else [None]
    seeds = [trial_seed(cfg.seed, i) for i in range(cfg.trials)]
    jobs = [(cfg.with_value(cfg.sweep_param, value), seed) for value in values for seed in seeds]
    logging.info(
        f"Running {len(jobs)} trials ({len(values)} sweep value(s) x {cfg.trials}) on {workers} worker(s)"
    )

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_trial_job(job) for job in jobs]

    rows, details = [], []
    for i, value in enumerate(values):
        chunk = results[i * cfg.trials:(i + 1) * cfg.trials]
        for method in cfg.methods:
            row, detail = _summarize(value, method, chunk, cfg.channel.epsilon, record_runtime)
            rows.append(row)
            details.append(detail)
        logging.info(f"Sweep value {value}: done")
    return SweepResult(
        table=pd.DataFrame(rows, columns=SWEEP_COLUMNS),
        details=pd.DataFrame(details),
    )


def runtime_benchmark(k_range, trials, seed, methods=METHODS, exhaustive_cap=10, dp_cap=20):
    """Mean planner wall-clock time per method and user count, on deadline-free instances.

    Only the path search is timed. Exhaustive keeps psi = K orders. Methods are
    skipped for user counts above their cap.
    """
    if trials < 1:
        raise InvalidArgumentError(f"trials must be >= 1 (got {trials})")
    rows = []
    for k in k_range:
        cfg = ExperimentConfig(k_users=int(k), eta_min_s=BENCH_DEADLINE_S, eta_max_s=BENCH_DEADLINE_S)
        tables = [
            sample_scenario(cfg, np.random.default_rng(trial_seed(seed, i))).timing_table()
            for i in range(trials)
        ]
        for method in methods:
            cap = exhaustive_cap if method == EXHAUSTIVE else dp_cap
            if method != HEURISTIC and k > cap:
                logging.info(f"Skipping {method} at K={k} (cap {cap})")
                continue
            elapsed = []
            for table in tables:
                start = time.perf_counter()
                run_planner(method, table, psi=int(k), exhaustive_cap=exhaustive_cap, dp_cap=dp_cap)
                elapsed.append(time.perf_counter() - start)
            rows.append({"k_users": int(k), "method": method, "runtime_mean_s": float(np.mean(elapsed)), "trials": trials})
            logging.info(f"K={k} {method}: {np.mean(elapsed):.6f}s mean over {trials} instance(s)")
    return pd.DataFrame(rows, columns=BENCH_COLUMNS)


def _preset(trials=200, channel=None, uav=None, **overrides):
    return ExperimentConfig(
        trials=trials,
        channel=channel or ChannelParams(),
        uav=uav or UavParams(),
        **overrides,
    )


WIDE_BAND = ChannelParams(bandwidth_hz=3e6)

PRESETS = {
    "outage-vs-vmax": lambda: _preset(
        k_users=6, eta_min_s=22.0, eta_max_s=60.0, channel=WIDE_BAND,
        uav=UavParams(energy_budget_j=500e3),
        sweep_param="v_max", sweep_values=(20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0),
    ),
    "outage-vs-deadline": lambda: _preset(
        k_users=6, eta_min_s=5.0, eta_max_s=65.0, data_bits=10e6, channel=WIDE_BAND,
        uav=UavParams(v_max=45.0, energy_budget_j=500e3),
        sweep_param="eta_min", sweep_values=(5.0, 10.0, 15.0, 20.0, 25.0),
    ),
    "outage-vs-area": lambda: _preset(
        k_users=7, eta_min_s=15.0, eta_max_s=65.0, data_bits=10e6, channel=WIDE_BAND,
        uav=UavParams(v_max=45.0, energy_budget_j=500e3),
        sweep_param="area", sweep_values=(200.0, 300.0, 400.0, 500.0, 600.0),
    ),
    "outage-vs-budget": lambda: _preset(
        k_users=4, eta_min_s=3.0, eta_max_s=15.0,
        sweep_param="energy_budget", sweep_values=(2e3, 4e3, 6e3, 8e3, 10e3, 12e3),
    ),
    "energy-vs-users": lambda: _preset(
        eta_min_s=3.0, eta_max_s=15.0, data_bits=10e6, uav=UavParams(v_max=100.0),
        sweep_param="k_users", sweep_values=(3, 4, 5, 6, 7),
    ),
    "energy-spread": lambda: _preset(
        eta_min_s=3.0, eta_max_s=15.0, data_bits=10e6, uav=UavParams(v_max=100.0),
        sweep_param="k_users", sweep_values=(3, 4, 5, 6, 7),
    ),
    "energy-vs-area": lambda: _preset(
        k_users=4, psi=4, eta_min_s=15.0, eta_max_s=60.0, data_bits=10e6,
        uav=UavParams(v_max=50.0), methods=(EXHAUSTIVE, HEURISTIC, DP),
        sweep_param="area", sweep_values=(200.0, 300.0, 400.0, 500.0, 600.0),
    ),
    "trajectory-comparison": lambda: _preset(
        k_users=7, eta_min_s=5.0, eta_max_s=17.0, uav=UavParams(v_max=100.0, energy_budget_j=100e3),
        sweep_param="v_max", sweep_values=(100.0,),
    ),
    "runtime-vs-users": lambda: _preset(
        trials=20, sweep_param="k_users", sweep_values=(3, 4, 5, 6, 7, 8, 9),
    ),
}

# numbered names for the published result plots
FIGURE_PRESETS = {
    "fig4": "trajectory-comparison",
    "fig5": "outage-vs-vmax",
    "fig6": "outage-vs-deadline",
    "fig7": "outage-vs-area",
    "fig8": "outage-vs-budget",
    "fig9": "energy-spread",
    "fig10": "energy-vs-users",
    "fig11": "runtime-vs-users",
}
PRESETS.update({alias: PRESETS[name] for alias, name in FIGURE_PRESETS.items()})


def preset_config(name):
    try:
        return PRESETS[name]()
    except KeyError:
        raise InvalidArgumentError(
            f"unknown preset '{name}' (choose from {', '.join(sorted(PRESETS))})"
        ) from None
