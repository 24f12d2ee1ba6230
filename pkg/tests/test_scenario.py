import csv
import io
import json

import jsonschema
import pytest

from conftest import SCENARIOS
from finsler_lab import ConfigError, scenario
from finsler_lab.cli import main

BASE = {
    "seed": 1,
    "domain": {"dim": 2, "periods": ["2*pi", "2*pi"]},
    "metric": {"family": "euclidean", "A": [[1, 0], [0, 1]]},
    "fields": {"d1": ["1", "0"], "shear": ["0", "sin(x1)"]},
    "functions": {"f": "sin(x1)"},
    "checks": [{"type": "validate"}],
}


def _config(**overrides):
    cfg = json.loads(json.dumps(BASE))
    cfg.update(overrides)
    return cfg


def _parse(cfg):
    return scenario.parse_scenario(json.dumps(cfg, indent=1))


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg, indent=1))
    return path


def test_unknown_field_names_the_key():
    with pytest.raises(ConfigError) as info:
        _parse(_config(checks=[{"type": "affine", "field": "nope"}]))
    assert "nope" in str(info.value)
    assert info.value.path == "checks.0.field"


@pytest.mark.parametrize(
    "overrides, fragment",
    [
        ({"checks": [{"type": "volume", "resolution": 4}]}, "resolution"),
        ({"checks": [{"type": "bogus"}]}, "unknown check type"),
        ({"checks": [{"type": "volume", "resolutoin": 16}]}, "unknown key"),
        ({"checks": [{"type": "stokes", "function": "g"}]}, "unknown function"),
        ({"checks": [{"type": "affine"}]}, "requires 'field'"),
        ({"checks": [{"type": "validate", "name": "a"}, {"type": "validate", "name": "a"}]}, "duplicate"),
        ({"checks": [{"type": "convergence", "target": "v"}, {"type": "validate", "name": "v"}]}, "no resolution axis"),
        ({"metric": {"family": "randers", "a": [[1, 0], [0, 1]]}}, "requires 'b'"),
        ({"metric": {"family": "euclidean", "A": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}}, "dimension"),
        ({"metric": {"family": "custom", "F": "sqrt(y1^2 + y2^2 + x3)"}}, "x3"),
        ({"domain": {"dim": 2, "periods": ["2*pi"]}}, "period"),
        ({"domain": {"dim": 2, "periods": ["two", "1"]}}, "two"),
        ({"fields": {"bad": ["1", "y1"]}}, "y1"),
        ({"seed": -1}, "minimum"),
    ],
)
def test_config_errors(overrides, fragment):
    with pytest.raises(ConfigError) as info:
        _parse(_config(**overrides))
    assert fragment in str(info.value)


def test_missing_seed_is_rejected():
    cfg = _config()
    del cfg["seed"]
    with pytest.raises(ConfigError, match="seed"):
        _parse(cfg)


def test_quadrature_needs_torus():
    with pytest.raises(ConfigError, match="torus"):
        _parse(_config(domain={"dim": 2}, checks=[{"type": "volume"}]))


def test_json_syntax_error_has_line():
    with pytest.raises(ConfigError) as info:
        scenario.parse_scenario('{\n "seed": 1,\n "domain": ,\n}')
    assert info.value.line == 3


def test_defaults_and_names():
    sc = _parse(_config(checks=[{"type": "volume"}, {"type": "affine", "field": "d1", "name": "aff"}]))
    assert sc.checks[0]["name"] == "volume-0"
    assert sc.checks[0]["resolution"] == 32
    assert sc.checks[1]["samples"] == 256
    assert sc.checks[1]["seed"] == 1


def test_numeric_failure_only_fails_its_check():
    cfg = _config(
        domain={"dim": 2, "bounds": [[-1, 1], [-1, 1]]},
        metric={"family": "round-sphere"},
        checks=[
            {"type": "geodesic", "name": "escapes", "x0": [0, 0], "y0": [1, 0], "t_end": 2, "steps": 100},
            {"type": "validate", "name": "ok"},
        ],
    )
    report = scenario.run(_parse(cfg), threads=2)
    first, second = report.data["checks"]
    assert not first["passed"] and "LeftChart" in first["error"]
    assert second["passed"] and second["error"] is None
    assert not report.passed


def test_report_matches_schema_and_is_deterministic():
    cfg = _config(
        checks=[
            {"type": "validate"},
            {"type": "brackets", "samples": 16},
            {"type": "affine", "field": "shear", "samples": 16, "expect": "not-affine"},
            {"type": "volume", "resolution": 8, "expected": "8*pi^3"},
            {"type": "stokes", "function": "f", "resolution": 8, "tol": 1e-12},
        ]
    )
    sc = _parse(cfg)
    one = scenario.run(sc, threads=1).to_json()
    many = scenario.run(_parse(cfg), threads=4).to_json()
    assert one == many
    data = json.loads(one)
    jsonschema.validate(data, scenario.REPORT_SCHEMA)
    assert data["tool"] == "finsler-lab" and data["seed"] == 1
    assert data["grid_sign"] == -1
    assert data["passed"]
    assert "worst" in data["checks"][1]


def test_convergence_table():
    cfg = _config(checks=[{"type": "volume", "name": "vol", "resolution": 8}])
    path_text = json.dumps(cfg)
    sc = scenario.parse_scenario(path_text)
    rows = scenario.convergence_rows(sc, "vol", [1, 2, 4])
    assert [r["resolution"] for r in rows] == [8, 16, 32]
    assert rows[0]["self_difference"] is None
    text = scenario.convergence_csv(rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["resolution", "value", "self_difference", "observed_order"]
    assert float(parsed[1][1]) == pytest.approx(8 * 3.141592653589793**3, rel=1e-10)
    assert parsed[1][2] == ""


def test_thread_count_env(monkeypatch):
    monkeypatch.setenv(scenario.THREADS_ENV, "3")
    assert scenario.thread_count() == 3
    assert scenario.thread_count(1) == 1
    monkeypatch.setenv(scenario.THREADS_ENV, "lots")
    assert scenario.thread_count() >= 1


def test_cli_run_exit_codes(tmp_path, capsys):
    ok = _write(tmp_path, _config(checks=[{"type": "validate"}, {"type": "volume", "resolution": 8, "expected": "8*pi^3"}]))
    out = tmp_path / "out"
    assert main(["run", str(ok), "--out", str(out)]) == 0
    assert json.loads((out / "report.json").read_text())["passed"]
    assert set(json.loads((out / "timings.json").read_text())) == {"validate-0", "volume-1"}

    fail = _write(tmp_path, _config(checks=[{"type": "affine", "field": "shear", "samples": 8, "expect": "affine"}]), "f.json")
    assert main(["run", str(fail)]) == 1

    bad = _write(tmp_path, _config(checks=[{"type": "affine", "field": "missing"}]), "b.json")
    assert main(["run", str(bad)]) == 2
    assert "missing" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "absent.json")]) == 2


def test_cli_other_commands(tmp_path, capsys):
    cfg = _write(tmp_path, _config(checks=[{"type": "volume", "name": "vol", "resolution": 8}]))
    assert main(["validate-metric", str(cfg)]) == 0
    assert json.loads(capsys.readouterr().out)["passed"]

    assert main(["converge", str(cfg), "--check", "vol", "--factors", "1,2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "resolution,value,self_difference,observed_order" and len(lines) == 3

    assert main(["report-schema"]) == 0
    schema = json.loads(capsys.readouterr().out)
    jsonschema.Draft202012Validator.check_schema(schema)

    with pytest.raises(SystemExit):
        main(["converge", str(cfg), "--check", "vol", "--factors", "2,1"])


def test_validate_metric_reports_failure(tmp_path, capsys):
    cfg = _write(tmp_path, _config(metric={"family": "randers", "a": [[1, 0], [0, 1]], "b": ["1.2", "0"]}))
    assert main(["validate-metric", str(cfg)]) == 1
    assert not json.loads(capsys.readouterr().out)["passed"]


@pytest.mark.parametrize("name", sorted(p.name for p in SCENARIOS.glob("*.json")))
def test_shipped_scenarios_parse(name):
    sc = scenario.load_scenario(SCENARIOS / name)
    assert sc.checks
