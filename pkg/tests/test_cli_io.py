import csv
import io
import json
import logging

import numpy as np
import pandas as pd
import pytest

import cli_io
import master
from energy_model import PowerModelParams
from experiment_harness import SWEEP_COLUMNS, ExperimentConfig, sample_scenario
from planner_errors import ScenarioParseError, ScenarioValidationError, UsageError
from scenario_core import Tour

SCENARIO = {
    "depot": [0, 0],
    "area_m": 400,
    "users": [
        {"id": 1, "pos": [100, 20], "q_bits": 1e6, "eta_s": 40.0, "rate_bps": 1e6},
        {"id": 2, "pos": [250, 180], "q_bits": 2e6, "eta_s": 60.0, "rate_bps": 1e6},
        {"id": 3, "pos": [60, 300], "q_bits": 1e6, "eta_s": 90.0, "rate_bps": 1e6},
    ],
    "uav": {"v_max": 40, "energy_budget_j": 1e6},
}

SHORT_VALUES = {
    "depot": [1.5, 398.0],
    "area_m": 400.0,
    "users": [
        {"id": 1, "pos": [100.0, 20.0], "q_bits": 50000000.0, "eta_s": 12.5},
        {"id": 2, "pos": [250.25, 180.0], "q_bits": 10000000.0, "eta_s": 7.0, "rate_bps": 2000000.0},
    ],
    "uav": {
        "altitude_m": 50.0,
        "v_max": 40.0,
        "delta_v": 10.0,
        "v_hover": 10.5,
        "p_com_w": 5.0,
        "energy_budget_j": 100000.0,
        "v_min": 0.1,
    },
    "channel": {
        "bandwidth_hz": 2000000.0,
        "mu0": 0.001,
        "pathloss_exp": 2.3,
        "noise_w": 1e-14,
        "rician_g": 30.0,
        "epsilon": 0.001,
    },
    "power": {"p0_w": 80.0, "p1_w": 88.5, "alpha1": 0.0002, "alpha2": 0.03, "alpha3": 0.009},
}


@pytest.fixture
def write_json(tmp_path):
    def write(name, data):
        path = tmp_path / name
        path.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
        return str(path)

    return write


@pytest.fixture
def restore_logging():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in root.handlers:
        if handler not in handlers:
            handler.close()
    root.handlers[:] = handlers
    root.setLevel(level)


def test_parse_plan_command():
    command = cli_io.parse_and_validate(["plan", "--scenario", "s.json", "--method", "exhaustive", "--psi", "3"])
    assert command.verb == "plan"
    assert command.options["method"] == "exhaustive"
    assert command.options["psi"] == 3
    assert command.options["format"] == "json"
    assert command.options["output"] is None


def test_unknown_method_is_a_usage_error():
    with pytest.raises(UsageError, match="warp"):
        cli_io.parse_and_validate(["plan", "--scenario", "s.json", "--method", "warp"])


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["fly"],
        ["plan"],
        ["plan", "--scenario", "s.json", "--psi", "0"],
        ["simulate"],
        ["simulate", "--preset", "outage-vs-vmax", "--config", "c.json"],
        ["simulate", "--preset", "outage-vs-vmax", "--seed", "-4"],
        ["bench", "--methods", "dp,warp"],
        ["bench", "--k-range", "a-b"],
        ["optimize", "--scenario", "s.json", "--tour", "1,1"],
        ["power-curve", "--v-min", "10", "--v-max", "5"],
    ],
)
def test_bad_command_lines(argv):
    with pytest.raises(UsageError):
        cli_io.parse_and_validate(argv)


def test_parse_bench_and_optimize_values():
    bench = cli_io.parse_and_validate(["bench", "--k-range", "3-5", "--methods", "dp,heuristic"])
    assert bench.options["k_range"] == [3, 4, 5]
    assert bench.options["methods"] == ("dp", "heuristic")
    assert cli_io.parse_k_range("3,5,7") == [3, 5, 7]
    opt = cli_io.parse_and_validate(["optimize", "--scenario", "s.json", "--tour", "2,1,3"])
    assert opt.options["tour"] == Tour((2, 1, 3))
    sim = cli_io.parse_and_validate(["simulate", "--preset", "outage-vs-budget", "--seed", "auto"])
    assert sim.options["seed"] == "auto"
    assert sim.options["format"] == "csv"


def test_load_scenario_converts_db_keys(write_json):
    data = dict(SCENARIO, channel={"rician_g_db": 15, "noise_dbm": -110, "mu0_db": -30})
    s = cli_io.load_scenario(write_json("s.json", data))
    assert s.channel.rician_g == pytest.approx(31.6227766)
    assert s.channel.noise_w == pytest.approx(1e-14)
    assert s.channel.mu0 == pytest.approx(1e-3)
    assert s.k_users == 3
    assert s.uav.energy_budget_j == 1e6


def test_malformed_json_reports_line(write_json):
    path = write_json("broken.json", '{\n  "depot": [0, 0],\n  "users": [\n    {"pos": [1, 2],,}\n  ]\n}\n')
    with pytest.raises(ScenarioParseError) as info:
        cli_io.load_scenario(path)
    assert info.value.line == 4


@pytest.mark.parametrize(
    "patch, field",
    [
        ({"depot": None}, "depot"),
        ({"users": [{"pos": [1, 2], "eta_s": 5}]}, "users[0].q_bits"),
        ({"users": [{"pos": [1, 2], "q_bits": 1, "eta_s": "soon"}]}, "users[0].eta_s"),
        ({"uav": {"v_max": 40, "warp": 9}}, "uav.warp"),
        ({"channel": {"rician_g": 30, "rician_g_db": 15}}, "channel.rician_g_db"),
        ({"colour": "red"}, "colour"),
    ],
)
def test_parse_errors_name_the_field(write_json, patch, field):
    data = dict(SCENARIO)
    for key, value in patch.items():
        if value is None:
            data.pop(key)
        else:
            data[key] = value
    with pytest.raises(ScenarioParseError) as info:
        cli_io.load_scenario(write_json("s.json", data))
    assert info.value.field == field
    assert field in str(info.value)


def test_validation_collects_problems(write_json):
    data = dict(SCENARIO, users=[{"id": 1, "pos": [10, 10], "q_bits": 1e6, "eta_s": -1}])
    with pytest.raises(ScenarioValidationError):
        cli_io.load_scenario(write_json("bad.json", data))
    report = cli_io.validate_scenario_file(write_json("bad.json", data))
    assert report["valid"] is False
    assert any("user 1" in p and "eta_s" in p for p in report["problems"])


def test_validate_reports_summary(write_json):
    report = cli_io.validate_scenario_file(write_json("s.json", SCENARIO))
    assert report["valid"] is True
    assert report["summary"]["k_users"] == 3
    assert report["summary"]["service_time_s"] == pytest.approx([1.0, 2.0, 1.0])


def test_scenario_round_trip(tmp_path, write_json):
    original = cli_io.load_scenario(write_json("short.json", SHORT_VALUES))
    path = tmp_path / "again.json"
    cli_io.emit_results(cli_io.scenario_to_dict(original), "json", str(path))
    reloaded = cli_io.load_scenario(str(path))
    assert reloaded == original
    assert cli_io.scenario_to_dict(reloaded) == cli_io.scenario_to_dict(original)


def test_default_scenario_reloads_exactly(tmp_path):
    rng = np.random.default_rng(5)
    original = sample_scenario(ExperimentConfig(k_users=5), rng)
    path = tmp_path / "default.json"
    cli_io.save_scenario(original, str(path))
    reloaded = cli_io.load_scenario(str(path))
    assert reloaded == original
    assert reloaded.uav.v_hover == original.uav.v_hover
    assert np.array_equal(reloaded.service_times, original.service_times)
    assert np.array_equal(reloaded.distance_matrix, original.distance_matrix)


def test_display_output_stays_rounded(tmp_path):
    path = tmp_path / "shown.json"
    cli_io.emit_results({"x": 1.0 / 3.0}, "json", str(path))
    assert json.loads(path.read_text()) == {"x": 0.333333333}
    cli_io.emit_results({"x": 1.0 / 3.0}, "json", str(path), exact=True)
    assert json.loads(path.read_text()) == {"x": 1.0 / 3.0}


def test_json_output_is_stable(tmp_path):
    result = {"b": 1.0 / 3.0, "a": [float("inf"), 2, True, None], "c": {"z": 0.1 + 0.2}}
    first, second = tmp_path / "1.json", tmp_path / "2.json"
    cli_io.emit_results(result, "json", str(first))
    cli_io.emit_results(result, "json", str(second))
    assert first.read_bytes() == second.read_bytes()
    text = first.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert text.endswith("\n")
    assert json.loads(text) == {"a": [None, 2, True, None], "b": 0.333333333, "c": {"z": 0.3}}


def test_csv_output_layout(capsys):
    rows = pd.DataFrame(
        [
            {"sweep_value": 20.0, "method": "dp", "outage_rate": 0.1234567891234, "energy_mean_j": 1.5,
             "energy_min_j": 1.0, "energy_max_j": 2.0, "runtime_mean_s": float("nan"), "trials": 200},
        ],
        columns=SWEEP_COLUMNS,
    )
    cli_io.emit_results(rows, "csv")
    out = capsys.readouterr().out
    lines = out.split("\n")
    assert lines[0] == ",".join(SWEEP_COLUMNS)
    assert lines[1] == "20,dp,0.123456789,1.5,1,2,,200"
    assert lines[2] == ""
    assert "\r" not in out
    assert next(csv.reader(io.StringIO(out))) == SWEEP_COLUMNS


def test_experiment_layers_on_preset(write_json):
    cfg = cli_io.load_experiment(
        write_json(
            "exp.json",
            {"preset": "outage-vs-budget", "trials": 3, "q_bits": 2e6, "sweep": {"param": "k_users", "values": [3, 4]}},
        )
    )
    assert cfg.trials == 3
    assert cfg.data_bits == 2e6
    assert cfg.sweep_param == "k_users"
    assert cfg.sweep_values == (3.0, 4.0)
    assert cfg.eta_max_s == 15.0


@pytest.mark.parametrize(
    "data, error",
    [
        ({"sweep": {"param": "colour", "values": [1]}}, ScenarioParseError),
        ({"sweep": {"param": "v_max", "values": []}}, ScenarioParseError),
        ({"trials": 2.5}, ScenarioParseError),
        ({"methods": ["dp", "warp"]}, ScenarioParseError),
        ({"eta_min_s": 30, "eta_max_s": 10}, ScenarioValidationError),
    ],
)
def test_experiment_errors(write_json, data, error):
    with pytest.raises(error):
        cli_io.load_experiment(write_json("exp.json", data))


def test_power_curve_table():
    table = cli_io.power_curve_table(PowerModelParams(), 0.0, 60.0, 0.5)
    assert len(table) == 121
    assert table["p_fly_w"].iloc[0] == pytest.approx(168.49)
    assert table["v"].iloc[-1] == pytest.approx(60.0)


def test_main_plan_all_methods(tmp_path, write_json, restore_logging):
    out = tmp_path / "plan.json"
    code = master.main(
        ["--log-file", str(tmp_path / "run.log"), "plan", "--scenario", write_json("s.json", SCENARIO),
         "--method", "all", "--optimize", "--output", str(out)]
    )
    assert code == master.EXIT_OK
    doc = json.loads(out.read_text())
    assert [entry["method"] for entry in doc["results"]] == ["exhaustive", "heuristic", "dp", "tsp"]
    for entry in doc["results"]:
        assert entry["outage"] is False
        assert sorted(entry["plan"]["tour"]) == [1, 2, 3]
    assert doc["scenario"]["k_users"] == 3
    assert (tmp_path / "run.log").exists()


def test_main_exit_codes(tmp_path, write_json, restore_logging):
    log = ["--log-file", str(tmp_path / "run.log")]
    scenario = write_json("s.json", SCENARIO)
    assert master.main(["plan", "--scenario", scenario, "--method", "warp"]) == master.EXIT_USAGE
    bad = write_json("bad.json", dict(SCENARIO, users=[{"pos": [10, 10], "q_bits": 1e6, "eta_s": -1}]))
    assert master.main(log + ["validate", "--scenario", bad, "--output", str(tmp_path / "v.json")]) == master.EXIT_USAGE
    assert master.main(log + ["validate", "--scenario", scenario, "--output", str(tmp_path / "v.json")]) == master.EXIT_OK
    assert master.main(log + ["plan", "--scenario", str(tmp_path / "missing.json")]) == master.EXIT_USAGE
    late = write_json("late.json", dict(SCENARIO, users=[{"pos": [400, 0], "q_bits": 1e6, "eta_s": 5, "rate_bps": 1e6}]))
    out = str(tmp_path / "o.json")
    assert master.main(log + ["plan", "--scenario", late, "--output", out]) == master.EXIT_OUTAGE
    assert master.main(log + ["optimize", "--scenario", late, "--tour", "1", "--output", out]) == master.EXIT_OUTAGE
    assert master.main(log + ["optimize", "--scenario", scenario, "--tour", "1,2", "--output", out]) == master.EXIT_USAGE


def test_main_simulate_is_reproducible(tmp_path, write_json, restore_logging):
    config = write_json(
        "exp.json",
        {"preset": "outage-vs-budget", "trials": 3, "k_users": 3, "sweep": {"param": "energy_budget", "values": [2000, 10000]}},
    )
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        code = master.main(
            ["--log-file", str(tmp_path / "run.log"), "simulate", "--config", config, "--seed", "3",
             "--workers", "1", "--output", str(out)]
        )
        assert code == master.EXIT_OK
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0].decode().splitlines()[0] == ",".join(SWEEP_COLUMNS)
    sidecar = json.loads((tmp_path / "a.meta.json").read_text())
    assert sidecar["seed"] == 3
    assert len(sidecar["rows"]) == 2 * 4


def test_main_power_curve(tmp_path, restore_logging):
    out = tmp_path / "curve.csv"
    code = master.main(["--log-file", str(tmp_path / "run.log"), "power-curve", "--v-max", "2", "--step", "1",
                        "--output", str(out)])
    assert code == master.EXIT_OK
    assert out.read_text().splitlines()[:2] == ["v,p_fly_w", "0,168.49"]
