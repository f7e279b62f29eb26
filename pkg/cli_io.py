#!/usr/bin/env python3
# === cli_io.py ===
# Command line grammar, scenario / experiment file parsing and validation, and the
# byte-stable JSON / CSV writers used by master.py.
#
# Scenario file (all units SI, linear unless the key ends in _db/_dbm):
#   {
#     "depot": [x, y],                    meters
#     "area_m": 400,                      optional square side; positions must lie inside
#     "users": [{"id": 1, "pos": [x, y], "q_bits": 5e7, "eta_s": 12.0, "rate_bps": optional}],
#     "uav": {"altitude_m", "v_max", "delta_v", "v_hover", "p_com_w", "energy_budget_j", "v_min"},
#     "channel": {"bandwidth_hz", "mu0" | "mu0_db", "pathloss_exp",
#                 "noise_w" | "noise_db" | "noise_dbm", "rician_g" | "rician_g_db", "epsilon"},
#     "power": {"p0_w", "p1_w", "alpha1", "alpha2", "alpha3"}
#   }
# Sections other than depot/users are optional and fall back to the built-in defaults.
#
# Experiment file: {"preset": optional name, "trials", "k_users", "area_m", "eta_min_s",
#   "eta_max_s", "q_bits", "seed", "methods": [...], "psi", "channel_check_samples",
#   "sweep": {"param": one of v_max|eta_min|area|energy_budget|k_users, "values": [...]},
#   "uav": {...}, "channel": {...}, "power": {...}}

import sys
import json
import math
import argparse
from dataclasses import dataclass, fields, replace

import numpy as np
import pandas as pd

from channel_model import ChannelParams, db_to_linear, dbm_to_watts, threshold_g0, y_q
from energy_model import PowerModelParams, p_fly
from experiment_harness import PRESETS, SWEEP_PARAMS, ExperimentConfig, preset_config
from path_planner import METHODS
from planner_errors import (
    InvalidArgumentError,
    PlannerError,
    ScenarioParseError,
    ScenarioValidationError,
    UsageError,
)
from scenario_core import GroundUser, Scenario, Tour, UavParams

FORMATS = ("json", "csv")
SIGNIFICANT_DIGITS = 9

USER_KEYS = {"id", "pos", "q_bits", "eta_s", "rate_bps"}
DB_KEYS = {
    "mu0_db": ("mu0", db_to_linear),
    "noise_db": ("noise_w", db_to_linear),
    "noise_dbm": ("noise_w", dbm_to_watts),
    "rician_g_db": ("rician_g", db_to_linear),
}


class PlannerArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message):
        raise UsageError(message)


@dataclass
class Command:
    verb: str
    options: dict


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _positive_float(text):
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {value}")
    return value


def _seed(text):
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer or 'auto', got '{text}'") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _output_flags(parser, default_format):
    parser.add_argument("--format", choices=FORMATS, default=default_format, help="Output format")
    parser.add_argument("--output", default=None, help="Output file (default: stdout)")


def build_parser():
    parser = PlannerArgumentParser(
        prog="master.py",
        description="Minimum-energy UAV trajectory planning under per-user deadlines",
    )
    parser.add_argument("--verbose", action="store_true", help="Log at DEBUG level")
    parser.add_argument("--log-file", default=None, help="Log file (default: UAV_TSPTW_LOG_FILE or uav_planner.log)")
    verbs = parser.add_subparsers(dest="verb", metavar="VERB")
    verbs.required = True

    plan = verbs.add_parser("plan", help="Search visiting orders that meet every deadline at v_max")
    plan.add_argument("--scenario", required=True, help="Scenario JSON file")
    plan.add_argument("--method", choices=METHODS + ("all",), default="dp", help="Planner")
    plan.add_argument("--psi", type=_positive_int, default=None, help="Orders kept by the exhaustive planner (default: K)")
    plan.add_argument("--optimize", action="store_true", help="Optimize speeds and pick the cheapest plan per method")
    plan.add_argument("--workers", type=_positive_int, default=1, help="Processes for the exhaustive enumeration")
    _output_flags(plan, "json")

    opt = verbs.add_parser("optimize", help="Optimize hop speeds for one visiting order")
    opt.add_argument("--scenario", required=True, help="Scenario JSON file")
    opt.add_argument("--tour", required=True, help="Comma-separated user ids, e.g. 2,1,3")
    _output_flags(opt, "json")

    sim = verbs.add_parser("simulate", help="Monte-Carlo outage / energy sweep")
    source = sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="Experiment JSON file")
    source.add_argument("--preset", choices=sorted(PRESETS), help="Built-in experiment")
    sim.add_argument("--trials", type=_positive_int, default=None, help="Override the trial count")
    sim.add_argument("--seed", type=_seed, default=None, help="Master seed, or 'auto'")
    sim.add_argument("--workers", type=_positive_int, default=None, help="Worker processes (default: UAV_TSPTW_THREADS)")
    sim.add_argument("--record-runtime", action="store_true", help="Fill runtime_mean_s (output is then not reproducible)")
    sim.add_argument("--sidecar", default=None, help="Provenance JSON (default: <output>.meta.json)")
    sim.add_argument("--store", choices=("none", "mongo"), default="none", help="Also store rows in MongoDB")
    _output_flags(sim, "csv")

    bench = verbs.add_parser("bench", help="Planner runtime versus number of users")
    bench.add_argument("--k-range", default=None, help="User counts, e.g. 3-9 or 3,5,7 (default: runtime-vs-users preset)")
    bench.add_argument("--trials", type=_positive_int, default=None, help="Instances per user count")
    bench.add_argument("--seed", type=_seed, default=0, help="Master seed, or 'auto'")
    bench.add_argument("--methods", default=",".join(METHODS), help="Comma-separated planners")
    _output_flags(bench, "csv")

    curve = verbs.add_parser("power-curve", help="Propulsion power over a speed grid")
    curve.add_argument("--scenario", default=None, help="Take power parameters from this scenario")
    curve.add_argument("--v-min", type=float, default=0.0, help="First speed (m/s)")
    curve.add_argument("--v-max", type=_positive_float, default=60.0, help="Last speed (m/s)")
    curve.add_argument("--step", type=_positive_float, default=0.5, help="Grid step (m/s)")
    _output_flags(curve, "csv")

    check = verbs.add_parser("validate", help="Check a scenario file and print a report")
    check.add_argument("--scenario", required=True, help="Scenario JSON file")
    _output_flags(check, "json")
    return parser


def parse_k_range(text):
    try:
        if "-" in text:
            lo, hi = (int(part) for part in text.split("-", 1))
            values = list(range(lo, hi + 1))
        else:
            values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"argument --k-range: expected e.g. 3-9 or 3,5,7, got '{text}'") from None
    if not values or min(values) < 1:
        raise UsageError(f"argument --k-range: need user counts >= 1, got '{text}'")
    return values


def parse_and_validate(argv):
    """Parse argv into a Command; bad flags or values raise UsageError."""
    args = build_parser().parse_args(argv)
    options = vars(args)
    verb = options.pop("verb")
    if verb == "power-curve":
        if options["v_min"] < 0:
            raise UsageError(f"argument --v-min: must be >= 0, got {options['v_min']}")
        if options["v_min"] >= options["v_max"]:
            raise UsageError("argument --v-min: must be below --v-max")
    if verb == "bench":
        methods = tuple(m.strip() for m in options["methods"].split(",") if m.strip())
        unknown = [m for m in methods if m not in METHODS]
        if unknown or not methods:
            raise UsageError(f"argument --methods: invalid choice: {', '.join(unknown) or 'none'}")
        options["methods"] = methods
        if options["k_range"] is not None:
            options["k_range"] = parse_k_range(options["k_range"])
    if verb == "optimize":
        options["tour"] = _parse_tour_flag(options["tour"])
    return Command(verb, options)


def _parse_tour_flag(text):
    try:
        return Tour.parse(text)
    except InvalidArgumentError as e:
        raise UsageError(f"argument --tour: {e}") from None


def read_json(path):
    """Load a JSON document; syntax errors carry the line number."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"{path}: {e.msg}", line=e.lineno) from None


def _number(raw, where):
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ScenarioParseError(f"expected a number, got {raw!r}", field=where)
    return float(raw)


def _point(raw, where):
    if not isinstance(raw, list) or len(raw) != 2:
        raise ScenarioParseError(f"expected [x, y], got {raw!r}", field=where)
    return tuple(_number(c, f"{where}[{i}]") for i, c in enumerate(raw))


def _section(data, name):
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ScenarioParseError(f"expected an object, got {type(raw).__name__}", field=name)
    return raw


def _params(cls, raw, name, linear_aliases=None):
    """Build a parameter dataclass from a JSON object, converting *_db/_dbm keys."""
    allowed = {f.name for f in fields(cls)}
    values = {}
    for key, value in raw.items():
        target, convert = key, None
        if linear_aliases and key in linear_aliases:
            target, convert = linear_aliases[key]
        if target not in allowed:
            raise ScenarioParseError("unknown key", field=f"{name}.{key}")
        if target in values:
            raise ScenarioParseError(f"given twice (also as {target})", field=f"{name}.{key}")
        if value is None:
            continue
        number = _number(value, f"{name}.{key}")
        values[target] = convert(number) if convert else number
    return cls(**values)


def scenario_from_dict(data):
    """Scenario from a parsed JSON document; type invariants are checked by Scenario.build."""
    if not isinstance(data, dict):
        raise ScenarioParseError("scenario must be a JSON object")
    for key in ("depot", "users"):
        if key not in data:
            raise ScenarioParseError("missing required field", field=key)
    unknown = set(data) - {"depot", "users", "uav", "channel", "power", "area_m"}
    if unknown:
        raise ScenarioParseError("unknown key", field=sorted(unknown)[0])
    if not isinstance(data["users"], list):
        raise ScenarioParseError("expected a list", field="users")

    users = []
    for i, raw in enumerate(data["users"]):
        where = f"users[{i}]"
        if not isinstance(raw, dict):
            raise ScenarioParseError("expected an object", field=where)
        extra = set(raw) - USER_KEYS
        if extra:
            raise ScenarioParseError("unknown key", field=f"{where}.{sorted(extra)[0]}")
        for key in ("pos", "q_bits", "eta_s"):
            if key not in raw:
                raise ScenarioParseError("missing required field", field=f"{where}.{key}")
        rate = raw.get("rate_bps")
        users.append(
            GroundUser(
                id=int(_number(raw.get("id", i + 1), f"{where}.id")),
                position=_point(raw["pos"], f"{where}.pos"),
                data_bits=_number(raw["q_bits"], f"{where}.q_bits"),
                deadline_s=_number(raw["eta_s"], f"{where}.eta_s"),
                rate_bps=None if rate is None else _number(rate, f"{where}.rate_bps"),
            )
        )

    area = data.get("area_m")
    return Scenario.build(
        _point(data["depot"], "depot"),
        users,
        uav=_params(UavParams, _section(data, "uav"), "uav"),
        channel=_params(ChannelParams, _section(data, "channel"), "channel", DB_KEYS),
        power=_params(PowerModelParams, _section(data, "power"), "power"),
        area_m=None if area is None else _number(area, "area_m"),
    )


def load_scenario(path):
    return scenario_from_dict(read_json(path))


def save_scenario(s, path):
    emit_results(scenario_to_dict(s), "json", path, exact=True)


def scenario_to_dict(s):
    """Inverse of scenario_from_dict, all values linear SI."""
    users = []
    for u in s.users:
        entry = {"id": u.id, "pos": list(u.position), "q_bits": u.data_bits, "eta_s": u.deadline_s}
        if u.rate_bps is not None:
            entry["rate_bps"] = u.rate_bps
        users.append(entry)
    doc = {
        "depot": list(s.depot),
        "users": users,
        "uav": {f.name: getattr(s.uav, f.name) for f in fields(s.uav)},
        "channel": {f.name: getattr(s.channel, f.name) for f in fields(s.channel)},
        "power": {f.name: getattr(s.power, f.name) for f in fields(s.power)},
    }
    if s.area_m is not None:
        doc["area_m"] = s.area_m
    return doc


def scenario_summary(s):
    return {
        "k_users": s.k_users,
        "v_hover_mps": s.uav.v_hover,
        "snr_gain": s.snr_gain,
        "y_q": y_q(s.channel),
        "rician_threshold_g0": threshold_g0(s.channel.epsilon),
        "rate_bps": [float(r) for r in s.rates_bps[1:]],
        "service_time_s": [float(t) for t in s.service_times[1:]],
    }


def validate_scenario_file(path):
    """Report of every parse/validation problem in a scenario file."""
    try:
        s = load_scenario(path)
    except ScenarioValidationError as e:
        return {"valid": False, "problems": e.problems}
    except ScenarioParseError as e:
        return {"valid": False, "problems": [str(e)]}
    try:
        summary = scenario_summary(s)
    except PlannerError as e:
        return {"valid": False, "problems": [f"channel: {e}"]}
    return {"valid": True, "problems": [], "summary": summary}


def experiment_from_dict(data):
    """ExperimentConfig from a parsed JSON document, optionally layered on a preset."""
    if not isinstance(data, dict):
        raise ScenarioParseError("experiment config must be a JSON object")
    allowed = {
        "preset", "trials", "k_users", "area_m", "eta_min_s", "eta_max_s", "q_bits", "seed",
        "methods", "psi", "channel_check_samples", "sweep", "uav", "channel", "power",
    }
    unknown = set(data) - allowed
    if unknown:
        raise ScenarioParseError("unknown key", field=sorted(unknown)[0])

    cfg = preset_config(data["preset"]) if "preset" in data else ExperimentConfig()
    changes = {}
    for key in ("trials", "k_users", "seed", "psi", "channel_check_samples"):
        if key in data:
            value = _number(data[key], key)
            if value != int(value):
                raise ScenarioParseError(f"expected an integer, got {data[key]!r}", field=key)
            changes[key] = int(value)
    for key in ("area_m", "eta_min_s", "eta_max_s"):
        if key in data:
            changes[key] = _number(data[key], key)
    if "q_bits" in data:
        changes["data_bits"] = _number(data["q_bits"], "q_bits")
    if "methods" in data:
        methods = data["methods"]
        if not isinstance(methods, list) or any(m not in METHODS for m in methods):
            raise ScenarioParseError(f"expected a list drawn from {list(METHODS)}", field="methods")
        changes["methods"] = tuple(methods)
    if "sweep" in data:
        sweep = data["sweep"]
        if not isinstance(sweep, dict) or sweep.get("param") not in SWEEP_PARAMS:
            raise ScenarioParseError(f"expected {{'param': one of {list(SWEEP_PARAMS)}, 'values': [...]}}", field="sweep")
        values = sweep.get("values")
        if not isinstance(values, list) or not values:
            raise ScenarioParseError("expected a non-empty list", field="sweep.values")
        changes["sweep_param"] = sweep["param"]
        changes["sweep_values"] = tuple(_number(v, "sweep.values") for v in values)
    if "uav" in data:
        changes["uav"] = _merge(cfg.uav, _section(data, "uav"), "uav")
    if "channel" in data:
        changes["channel"] = _merge(cfg.channel, _section(data, "channel"), "channel", DB_KEYS)
    if "power" in data:
        changes["power"] = _merge(cfg.power, _section(data, "power"), "power")

    cfg = replace(cfg, **changes)
    problems = cfg.problems()
    if problems:
        raise ScenarioValidationError(problems)
    return cfg


def _merge(base, raw, name, aliases=None):
    parsed = _params(type(base), raw, name, aliases)
    given = {(aliases or {}).get(key, (key, None))[0] for key in raw if raw[key] is not None}
    return replace(base, **{key: getattr(parsed, key) for key in given})


def load_experiment(path):
    return experiment_from_dict(read_json(path))


def power_curve_table(power, v_min, v_max, step):
    speeds = np.arange(v_min, v_max + step / 2.0, step)
    return pd.DataFrame({"v": speeds, "p_fly_w": p_fly(speeds, power)})


def _rounded(value, digits=SIGNIFICANT_DIGITS):
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return value if digits is None else float(f"{value:.{digits}g}")
    if isinstance(value, dict):
        return {str(k): _rounded(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_rounded(v, digits) for v in value]
    if isinstance(value, pd.DataFrame):
        return _rounded(value.to_dict(orient="records"), digits)
    if hasattr(value, "to_dict"):
        return _rounded(value.to_dict(), digits)
    raise InvalidArgumentError(f"cannot serialize {type(value).__name__}")


def render_json(result, exact=False):
    # exact keeps every float at repr precision so the document reloads bit for bit
    digits = None if exact else SIGNIFICANT_DIGITS
    return json.dumps(_rounded(result, digits), sort_keys=True, indent=2) + "\n"


def render_csv(result):
    if not isinstance(result, pd.DataFrame):
        result = pd.DataFrame(result)
    return result.to_csv(index=False, float_format=f"%.{SIGNIFICANT_DIGITS}g", lineterminator="\n")


def emit_results(result, fmt="json", path=None, exact=False):
    """Write result as JSON (sorted keys, 9 significant digits unless exact) or CSV to path or stdout."""
    if fmt == "json":
        text = render_json(result, exact)
    elif fmt == "csv":
        text = render_csv(result)
    else:
        raise InvalidArgumentError(f"unknown format '{fmt}' (choose from {', '.join(FORMATS)})")
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)
