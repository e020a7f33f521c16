import json
import math

import numpy as np
import pytest

from kawactl import fixture_path
from kawactl.errors import ConfigError, DimensionError
from kawactl.io import (dumps_problem, dumps_report, load_problem, parse_problem_text,
                        read_csv, read_report, read_snapshot, save_problem, to_jsonable,
                        write_control_csv, write_observation_csv, write_report,
                        write_snapshot, write_trajectory_csv)
from kawactl.model import TimeSignal, Verdict
from kawactl.observation import observation_derivative
from kawactl.solver import solve_linear

from conftest import FIXTURES


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_round_trip_is_byte_identical(name, tmp_path):
    path = fixture_path(name)
    pb = load_problem(path)
    out = tmp_path / f"{name}.json"
    save_problem(pb, out)
    assert out.read_bytes() == path.read_bytes()
    assert dumps_problem(load_problem(out)) == dumps_problem(pb)


def test_malformed_json_reports_position():
    text = '{\n  "alpha": 1.0,\n  "beta": ,\n}'
    with pytest.raises(ConfigError, match=r"bad\.json:3:11"):
        parse_problem_text(text, "bad.json")


@pytest.mark.parametrize("literal", ["NaN", "Infinity", "-Infinity"])
def test_non_finite_literals_rejected(canonical_dict, literal):
    text = json.dumps(canonical_dict).replace('"alpha": 1.0', f'"alpha": {literal}')
    with pytest.raises(ConfigError):
        parse_problem_text(text)


def test_string_nan_rejected(canonical_dict):
    canonical_dict["alpha"] = "NaN"
    with pytest.raises(ConfigError):
        parse_problem_text(json.dumps(canonical_dict))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_problem(tmp_path / "nope.json")


def test_snapshot_round_trip(canonical, tmp_path):
    traj = solve_linear(canonical.regrid(h=0.1, tau=0.01))
    path = tmp_path / "traj.kawa"
    write_snapshot(traj, path)
    raw = path.read_bytes()
    assert raw[:5] == b"KAWA1"
    back = read_snapshot(path)
    for name in ("values", "t", "x", "mu", "nu"):
        assert np.array_equal(getattr(back, name), getattr(traj, name))
    path.write_bytes(raw[:-8])
    with pytest.raises(DimensionError):
        read_snapshot(path)
    path.write_bytes(b"NOPE!" + raw[5:])
    with pytest.raises(ConfigError):
        read_snapshot(path)


def test_csv_writers(canonical, tmp_path):
    pb = canonical.regrid(h=0.1, tau=0.01)
    traj = solve_linear(pb)
    write_trajectory_csv(traj, tmp_path / "trajectory.csv")
    header, data = read_csv(tmp_path / "trajectory.csv")
    assert header == ["t", "x", "u"]
    assert data.shape == (traj.values.size, 3)
    np.testing.assert_array_equal(data[:, 2], traj.values.ravel())
    trace = observation_derivative(traj, None, pb.mu, pb.nu, pb.omega, pb.coefficients)
    write_observation_csv(trace, tmp_path / "observation.csv")
    header, data = read_csv(tmp_path / "observation.csv")
    assert header == ["t", "q", "qprime_formula", "qprime_numeric"]
    np.testing.assert_array_equal(data[:, 1], trace.q.samples)
    write_control_csv(TimeSignal(np.sin(pb.t), pb.grid.tau), tmp_path / "control.csv")
    header, data = read_csv(tmp_path / "control.csv")
    assert header == ["t", "f0"] and data.shape == (pb.t.size, 2)


def test_report_serialisation(tmp_path):
    data = {"b": np.float64(1.5), "a": [np.int64(2), math.inf, -math.inf, math.nan],
            "v": Verdict.ADVISORY, "arr": np.arange(3.0), "flag": np.bool_(True)}
    text = dumps_report(data)
    assert text.index('"a"') < text.index('"arr"') < text.index('"b"')
    write_report(data, tmp_path / "r.json")
    back = read_report(tmp_path / "r.json")
    assert back == {"a": [2, "inf", "-inf", "nan"], "arr": [0.0, 1.0, 2.0], "b": 1.5,
                    "flag": True, "v": "advisory"}
    with pytest.raises(TypeError):
        to_jsonable(object())
