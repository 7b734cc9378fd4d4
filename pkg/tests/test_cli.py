import json

import pytest

from mapenergy import cli
from mapenergy.errors import ConfigError
from mapenergy.scenario import (
    Outcome,
    bundled_scenarios,
    check_expectations,
    dumps,
    load_scenario,
    parse_scenario,
    run_scenario,
)

BASE = {"version": 1, "mode": "verify", "domain": "torus2", "target": "poincare2", "map": "torus_to_disk", "resolution": 16}


def _write(tmp_path, name, **changes):
    data = {**BASE, "name": name, **changes}
    data = {k: v for k, v in data.items() if v is not None}
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(data))
    return path


def test_bundled_scenarios_parse():
    paths = bundled_scenarios()
    assert len(paths) >= 15
    names = {p.stem for p in paths}
    assert {"sphere_inclusion", "torus_identity"} <= names
    for p in paths:
        sc = load_scenario(p)
        assert sc.name == p.stem


@pytest.mark.parametrize(
    "changes",
    [
        {"version": None},
        {"version": 2},
        {"tolerance": {"rank": 1e-8}},
        {"tolerances": {"rank": -1.0}},
        {"tolerances": {"rnak": 1e-8}},
        {"mode": "explore"},
        {"map": "mystery"},
        {"target": "klein2"},
        {"resolution": [0, 4]},
        {"levels": 0},
        {"flow": {"mode": "harmonic"}},
        {"mode": "sweep", "sweep": {"param": "amplitude", "values": []}},
        {"mode": "sweep", "sweep": {"param": "nope", "values": [0.1]}},
        {"mode": "flow", "flow": {"mode": "harmonic", "dtt": 1e-3}},
    ],
)
def test_invalid_scenarios_are_rejected(changes):
    data = {k: v for k, v in {**BASE, **changes}.items() if v is not None}
    with pytest.raises(ConfigError):
        parse_scenario(data)


def test_verify_exit_zero_and_artifacts(tmp_path, capsys):
    path = _write(tmp_path, "disk", expect={"verdict": "HOLDS", "E1": {"min": 0.0}})
    assert cli.main(["verify", str(path), "--out", str(tmp_path / "out"), "--jobs", "1"]) == 0
    out = tmp_path / "out" / "disk"
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"] == "HOLDS"
    assert (out / "summary.csv").read_text().startswith("name,E1,E2")
    assert "disk [verify] HOLDS: ok" in capsys.readouterr().out


def test_positive_target_exits_two(tmp_path):
    path = _write(tmp_path, "sph", target="sphere2:r=1", map="constant")
    assert cli.main(["verify", str(path), "--out", str(tmp_path), "--jobs", "1"]) == 2


def test_expect_mismatch_exits_one(tmp_path, capsys):
    path = _write(tmp_path, "bad", expect={"verdict": "EQUALITY"})
    assert cli.main(["verify", str(path), "--out", str(tmp_path), "--jobs", "1"]) == 1
    assert "MISMATCH" in capsys.readouterr().out


def test_violation_outranks_other_codes():
    out = Outcome("x", "verify", "VIOLATION", {"verdict": "VIOLATION"}, {}, ["E1 mismatch"])
    assert out.exit_code == 3
    out = Outcome("x", "sweep", "HOLDS", {"verdicts": ["HOLDS", "PRECONDITION_FAILED"]}, {}, [])
    assert out.exit_code == 2


def test_config_errors_exit_four(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli.main(["verify", str(bad)]) == 4
    assert cli.main(["verify", str(tmp_path / "missing.json")]) == 4
    assert cli.main(["bogus-command"]) == 4
    path = _write(tmp_path, "ok")
    assert cli.main(["sweep", str(path), "--param", "amplitude", "--values", ""]) == 4
    assert cli.main(["flow", str(path)]) == 4


def test_sweep_command_amplitude(tmp_path):
    path = _write(tmp_path, "amp")
    rc = cli.main(["sweep", str(path), "--param", "a", "--values", "0.05,0.3,0.6", "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "amp" / "sweep.csv").read_text().splitlines()
    assert lines[0] == "value,E1,E2,margin,residual,verdict"
    assert len(lines) == 4
    assert all(float(row.split(",")[3]) >= 0 for row in lines[1:])
    assert (tmp_path / "amp" / "margin.svg").read_text().startswith("<svg")


def test_sphere_radius_sweep_ratio(tmp_path):
    sc = parse_scenario(
        {
            "version": 1,
            "name": "radius",
            "mode": "sweep",
            "domain": "sphere2:r=1",
            "target": "euclid3",
            "map": "sphere_inclusion",
            "resolution": [12, 24],
            "sweep": {"param": "r", "values": [0.5, 1.0, 2.0]},
        }
    )
    rows = run_scenario(sc).report["rows"]
    for row in rows:
        assert row["E2"] / row["E1"] == pytest.approx(2.0 / row["value"] ** 2, rel=1e-12)


def test_output_directory_precedence(tmp_path, monkeypatch):
    path = _write(tmp_path, "prec")
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("MAPENERGY_OUT", str(tmp_path / "env"))
    assert cli.main(["verify", str(path), "--jobs", "1"]) == 0
    assert (tmp_path / "env" / "prec" / "report.json").exists()
    assert cli.main(["verify", str(path), "--out", str(tmp_path / "flag"), "--jobs", "1"]) == 0
    assert (tmp_path / "flag" / "prec" / "report.json").exists()
    monkeypatch.delenv("MAPENERGY_OUT")
    assert cli.main(["verify", str(path), "--jobs", "1"]) == 0
    assert (tmp_path / "out" / "prec" / "report.json").exists()


def test_overrides_and_parallel_batch(tmp_path):
    a = _write(tmp_path, "a")
    b = _write(tmp_path, "b", map="trig_random:seed=2")
    rc = cli.main(["verify", str(a), str(b), "--out", str(tmp_path), "--resolution", "8", "--levels", "2", "--seed", "7", "--jobs", "2"])
    assert rc == 0
    rep = json.loads((tmp_path / "b" / "report.json").read_text())
    assert rep["resolution"] == [8, 8] and rep["levels"] == 2 and rep["seed"] == 7


def test_projective_recover_scenario():
    sc = parse_scenario({**BASE, "mode": "projective", "map": "identity", "target": "torus2", "theta": "recover"})
    rep = run_scenario(sc).report
    assert rep["verdict"] == "EQUALITY" and rep["fit_residual"] < 1e-12


def test_small_flow_scenario(tmp_path):
    sc = parse_scenario(
        {**BASE, "mode": "flow", "resolution": 10, "flow": {"mode": "harmonic", "tol": 1e-5, "record_every": 20}}
    )
    out = run_scenario(sc, tmp_path)
    assert out.exit_code == 0
    assert out.report["trace"]["termination"] == "tol"
    csv = (tmp_path / "scenario" / "trace.csv").read_text().splitlines()
    assert csv[0] == "t,E1,E2,sup_tau1,sup_tau2,margin,dt"


def test_check_expectations():
    rep = {"a": 1.0, "b": {"c": "X"}, "d": 5}
    assert check_expectations(rep, {"a": {"approx": 1.0, "tol": 1e-9}, "b.c": ["X", "Y"], "d": {"min": 1, "max": 9}}) == []
    fails = check_expectations(rep, {"a": {"max": 0.5}, "b.c": "Y", "zz": 1})
    assert len(fails) == 3
    with pytest.raises(ConfigError):
        check_expectations(rep, {"a": {"around": 1}})


def test_dumps_sanitizes_non_finite():
    text = dumps({"x": float("inf"), "y": [float("nan"), 1.0]})
    assert json.loads(text) == {"x": "inf", "y": ["nan", 1.0]}


def test_catalog_command(capsys):
    assert cli.main(["catalog"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert "torus_to_disk" in info["maps"]
    assert "sphere_inclusion" in info["bundled_scenarios"]
