"""Problem files, CSV exports, binary trajectory snapshots and report JSON."""

from __future__ import annotations

import enum
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError
from .model import problem_from_dict

MAGIC = b"KAWA1"


def _reject_constant(name):
    raise ConfigError(f"non-finite number {name} is not allowed")


def parse_problem_text(text, source="<string>"):
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return problem_from_dict(data)


def load_problem(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read problem file {path}: {exc.strerror}") from None
    return parse_problem_text(text, str(path))


def dumps_problem(pb):
    return json.dumps(pb.to_dict(), indent=2, sort_keys=True) + "\n"


def save_problem(pb, path):
    Path(path).write_text(dumps_problem(pb), encoding="utf-8")


# ---------------------------------------------------------------- CSV

def _write_columns(path, header, columns):
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")


def write_trajectory_csv(traj, path):
    """Rows (t, x, u), row-major in time."""
    nt, nx = traj.values.shape
    _write_columns(path, "t,x,u", [np.repeat(traj.t, nx), np.tile(traj.x, nt), traj.values.ravel()])


def write_observation_csv(trace, path):
    _write_columns(path, "t,q,qprime_formula,qprime_numeric",
                   [trace.q.t, trace.q.samples, trace.q_prime_formula.samples,
                    trace.q_prime_numeric.samples])


def write_control_csv(f0, path):
    _write_columns(path, "t,f0", [f0.t, f0.samples])


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


# ---------------------------------------------------------------- snapshots

def write_snapshot(traj, path):
    """Binary layout: b'KAWA1', uint32 n_t, uint32 n_x (little-endian), then float64
    little-endian arrays t[n_t], x[n_x], mu[n_t], nu[n_t], values[n_t * n_x]."""
    nt, nx = traj.values.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", nt, nx))
        for arr in (traj.t, traj.x, traj.mu, traj.nu, traj.values.ravel()):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path):
    from .solver import Trajectory

    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ConfigError(f"{path}: not a KAWA1 snapshot")
    nt, nx = struct.unpack("<II", raw[5:13])
    body = np.frombuffer(raw, dtype="<f8", offset=13)
    need = 3 * nt + nx + nt * nx
    if body.size != need:
        raise DimensionError(f"{path}: expected {need} doubles, found {body.size}")
    t, x = body[:nt], body[nt:nt + nx]
    mu, nu = body[nt + nx:2 * nt + nx], body[2 * nt + nx:3 * nt + nx]
    values = body[3 * nt + nx:].reshape(nt, nx)
    return Trajectory(values.copy(), t.copy(), x.copy(), mu.copy(), nu.copy(),
                      {"label": "snapshot"})


# ---------------------------------------------------------------- reports

def to_jsonable(obj):
    """Plain JSON types; non-finite floats become the strings 'nan', 'inf', '-inf'."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_report(data):
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_report(data, path):
    Path(path).write_text(dumps_report(data), encoding="utf-8")


def read_report(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))
