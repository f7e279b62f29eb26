#!/usr/bin/env python3
# === master.py ===
# Command line entry point: parses the verb, sets up logging, runs the requested
# planner / optimizer / experiment and maps every failure to an exit code.
#
# Exit codes: 0 success, 1 outage-only result, 2 usage or validation error,
# 3 numeric failure.

import sys
import logging
import traceback
from dataclasses import replace
from datetime import datetime
from pathlib import Path

import numpy as np

import cli_io
from energy_model import PowerModelParams
from experiment_harness import preset_config, run_sweep, runtime_benchmark
from path_planner import METHODS, run_planner
from planner_errors import PlannerError, UsageError
from scenario_core import mission_time, reach_and_completion_times
from shared_tasks import (
    configure_logging,
    git_describe,
    load_settings,
    print_error,
    print_section,
    print_step,
    print_success,
    print_warning,
)
from velocity_optimizer import optimize_velocities, pick_best_plan

EXIT_OK = 0
EXIT_OUTAGE = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def _resolve_seed(seed):
    if seed == "auto":
        seed = int(np.random.SeedSequence().entropy % (2 ** 63))
        print_step(f"Using seed {seed}")
    return seed


def handle_plan(options, settings):
    s = cli_io.load_scenario(options["scenario"])
    methods = METHODS if options["method"] == "all" else (options["method"],)
    psi = options["psi"] if options["psi"] is not None else s.k_users
    results = []
    any_success = False
    for method in methods:
        print_step(f"Running {method} planner on {s.k_users} users")
        path_set = run_planner(
            method,
            s,
            psi=psi,
            exhaustive_cap=settings.exhaustive_cap,
            dp_cap=settings.dp_cap,
            workers=options["workers"],
        )
        entry = {"method": method, "paths": path_set.to_dict()}
        found = any(path_set.c1_feasible)
        if options["optimize"]:
            plan = pick_best_plan(path_set.deadline_feasible(), s)
            entry["plan"] = plan
            entry["outage"] = plan is None
            found = plan is not None
        logging.info(f"{method}: {len(path_set)} order(s), success={found}")
        any_success = any_success or found
        results.append(entry)

    if options["format"] == "csv":
        rows = [
            {
                "method": entry["method"],
                "rank": rank,
                "order": "-".join(str(u) for u in tour["order"]),
                "travel_time_s": tour["travel_time_s"],
                "mission_time_s": tour["mission_time_s"],
                "deadline_feasible": tour["deadline_feasible"],
            }
            for entry in results
            for rank, tour in enumerate(entry["paths"]["tours"], 1)
        ]
        cli_io.emit_results(rows, "csv", options["output"])
    else:
        cli_io.emit_results({"scenario": cli_io.scenario_summary(s), "results": results}, "json", options["output"])
    return EXIT_OK if any_success else EXIT_OUTAGE


def handle_optimize(options, settings):
    s = cli_io.load_scenario(options["scenario"])
    tour = options["tour"]
    report = optimize_velocities(tour, s)
    reach, done = reach_and_completion_times(tour, report.profile, s)
    payload = report.to_dict()
    payload.update(
        {
            "reach_times_s": reach,
            "completion_times_s": done,
            "mission_time_s": mission_time(tour, report.profile, s),
            "energy_budget_j": s.uav.energy_budget_j,
            "within_budget": report.energy.total_j <= s.uav.energy_budget_j,
        }
    )
    if options["format"] == "csv":
        rows = [
            {"hop": i + 1, "from": a, "to": b, "speed_mps": v}
            for i, ((a, b), v) in enumerate(zip(tour.hops, report.profile.speeds))
        ]
        cli_io.emit_results(rows, "csv", options["output"])
    else:
        cli_io.emit_results(payload, "json", options["output"])
    if not payload["within_budget"]:
        print_warning(f"Tour {tour} needs {report.energy.total_j:.1f} J, over the {s.uav.energy_budget_j:.1f} J budget")
        return EXIT_OUTAGE
    return EXIT_OK


def _sidecar_path(options):
    if options["sidecar"]:
        return options["sidecar"]
    if options["output"] and options["output"] != "-":
        return str(Path(options["output"]).with_suffix(".meta.json"))
    return None


def handle_simulate(options, settings):
    if options["config"]:
        cfg = cli_io.load_experiment(options["config"])
    else:
        cfg = preset_config(options["preset"])
    changes = {"exhaustive_cap": settings.exhaustive_cap, "dp_cap": settings.dp_cap}
    if options["trials"] is not None:
        changes["trials"] = options["trials"]
    if options["seed"] is not None:
        changes["seed"] = _resolve_seed(options["seed"])
    cfg = replace(cfg, **changes)
    workers = options["workers"] or settings.threads
    logging.info(f"Simulation seed {cfg.seed}, {cfg.trials} trials, workers {workers}")

    result = run_sweep(cfg, workers=workers, record_runtime=options["record_runtime"])
    cli_io.emit_results(result.table, options["format"], options["output"])

    provenance = {
        "config": cfg.to_dict(),
        "preset": options["preset"],
        "seed": cfg.seed,
        "git_describe": git_describe(),
        "rows": result.details,
    }
    sidecar = _sidecar_path(options)
    if sidecar:
        cli_io.emit_results(provenance, "json", sidecar, exact=True)
        logging.info(f"Wrote provenance to {sidecar}")
    if options["store"] == "mongo":
        import result_store

        result_store.store_sweep_rows(
            result.table.to_dict(orient="records"),
            {"seed": cfg.seed, "preset": options["preset"], "git_describe": provenance["git_describe"]},
        )
    return EXIT_OK


def handle_bench(options, settings):
    preset = preset_config("runtime-vs-users")
    k_range = options["k_range"] or [int(k) for k in preset.sweep_values]
    trials = options["trials"] or preset.trials
    seed = _resolve_seed(options["seed"])
    table = runtime_benchmark(
        k_range,
        trials,
        seed,
        methods=options["methods"],
        exhaustive_cap=settings.exhaustive_cap,
        dp_cap=settings.dp_cap,
    )
    cli_io.emit_results(table, options["format"], options["output"])
    return EXIT_OK


def handle_power_curve(options, settings):
    if options["scenario"]:
        power = cli_io.load_scenario(options["scenario"]).power
    else:
        power = PowerModelParams()
    table = cli_io.power_curve_table(power, options["v_min"], options["v_max"], options["step"])
    cli_io.emit_results(table, options["format"], options["output"])
    return EXIT_OK


def handle_validate(options, settings):
    report = cli_io.validate_scenario_file(options["scenario"])
    cli_io.emit_results(report, options["format"], options["output"])
    if report["valid"]:
        print_success(f"{options['scenario']} is valid")
        return EXIT_OK
    for problem in report["problems"]:
        print_error(problem)
    return EXIT_USAGE


HANDLERS = {
    "plan": handle_plan,
    "optimize": handle_optimize,
    "simulate": handle_simulate,
    "bench": handle_bench,
    "power-curve": handle_power_curve,
    "validate": handle_validate,
}


def main(argv=None):
    settings = load_settings()
    try:
        command = cli_io.parse_and_validate(argv)
    except UsageError as e:
        print_error(f"Usage error: {e}")
        return EXIT_USAGE

    configure_logging(command.options.pop("log_file") or settings.log_file, command.options.pop("verbose"))
    start_time = datetime.now()
    print_section(f"{command.verb} started {start_time.strftime('%Y-%m-%d %H:%M:%S')}")
    logging.info(f"Running '{command.verb}' with options {command.options}")

    try:
        code = HANDLERS[command.verb](command.options, settings)
    except PlannerError as e:
        logging.error(f"{command.verb} failed: {type(e).__name__}: {e}")
        print_error(str(e))
        return e.exit_code
    except OSError as e:
        logging.error(f"{command.verb} failed on file access: {e}")
        print_error(str(e))
        return EXIT_USAGE
    except Exception as e:
        logging.error(f"Critical error in {command.verb}: {e}")
        traceback.print_exc()
        return EXIT_NUMERIC

    duration = datetime.now() - start_time
    if code == EXIT_OK:
        print_success(f"{command.verb} finished in {duration}")
    else:
        print_warning(f"{command.verb} finished in {duration} with an outage-only result")
    return code


if __name__ == "__main__":
    exit_code = main()
    sys.exit(exit_code)
