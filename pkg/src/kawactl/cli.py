"""Command-line driver: ``kawactl <command> --problem FILE --out DIR [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .bourgain import SpaceTimeField, bilinear_probe, trace_sobolev_diagnostic, weighted_spacetime_norm
from .control import (compute_constants, control_linear, control_nonlinear, mass_control_check,
                      refined_bound_check, closed_loop_residual)
from .errors import ConfigError, HypothesisError, KawaError, ValidationError
from .io import (dumps_report, load_problem, write_control_csv, write_observation_csv,
                 write_report, write_snapshot, write_trajectory_csv)
from .model import TOP_KEYS, problem_from_dict, validate_problem
from .norms import fractional_sobolev_norm, lp_l2
from .observation import observation_derivative, qprime_norm_bound
from .scaling import minimal_time, observation_equivalence, scaling_report
from .solver import Forcing, solve_linear, solve_nonlinear, wellposedness_ratio

log = logging.getLogger("kawactl")

COMMANDS = ("solve", "control-linear", "control-nonlinear", "minimal-time", "scaling-check",
            "diagnostics")

# run-level overrides and their defaults
RUN_KEYS = {
    "C_T": None,
    "nu_scaling_exponent": 5.0,
    "phi_scaling_exponent": 3.0,
    "mode": "discrete",
    "equation": "nonlinear",
    "deltas": [1.0, 0.7, 0.5],
    "certify": True,
    "certify_steps": 40,
    "ensemble_size": 8,
    "probe_size": 20,
    "probe_s": 0.0,
    "probe_b": 0.45,
    "probe_alpha": 0.55,
    "uT": None,
    "write_trajectory": True,
}

HYPOTHESIS_CHECKS = {"g1.lower_bound"}
SOLVE_IGNORES = {"compatibility", "g1.lower_bound"}


@dataclass(frozen=True)
class RunConfig:
    command: str
    problem_path: str
    output_dir: str
    tol: float = 1e-8
    max_iter: int = 100
    seed: int = 0
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class RunReport:
    command: str
    config: dict
    problem: dict
    validation: dict
    results: dict
    timing: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)
    status: str = "ok"

    def to_dict(self):
        return {"command": self.command, "config": self.config, "problem": self.problem,
                "validation": self.validation, "results": self.results, "timing": self.timing,
                "versions": self.versions, "status": self.status}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("command", "config", "problem", "validation", "results",
                                        "timing", "versions", "status")})

    def deterministic_view(self):
        d = json.loads(dumps_report(self.to_dict()))
        d.pop("timing")
        return d


def parse_value(text):
    try:
        return json.loads(text, parse_constant=lambda c: (_ for _ in ()).throw(
            ConfigError(f"non-finite value {c}")))
    except json.JSONDecodeError:
        return text


def parse_overrides(pairs):
    out = {}
    for item in pairs or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, val = item.split("=", 1)
        out[key.strip()] = parse_value(val.strip())
    return out


def split_overrides(overrides):
    """Separate problem-level keys (dotted paths into the problem file) from run keys."""
    problem, run = {}, dict(RUN_KEYS)
    for key, val in overrides.items():
        head = key.split(".", 1)[0]
        if head in TOP_KEYS:
            problem[key] = val
        elif key in RUN_KEYS:
            run[key] = val
        else:
            raise ConfigError(f"unknown override {key!r}")
    return problem, run


def apply_problem_overrides(cfg, overrides):
    for key, val in overrides.items():
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"override path {key!r} does not exist")
            node = node[part]
        node[parts[-1]] = val
    return cfg


def resolve_problem(config):
    pb = load_problem(config.problem_path)
    prob_over, run_over = split_overrides(config.overrides)
    if prob_over:
        pb = problem_from_dict(apply_problem_overrides(pb.to_dict(), prob_over))
    return pb, run_over


def check_validation(report, command):
    ignore = SOLVE_IGNORES if command == "solve" else set()
    failures = [c for c in report.failures() if c.name not in ignore]
    hard = [c for c in failures if c.name not in HYPOTHESIS_CHECKS]
    if hard:
        raise ValidationError("problem failed validation: " + ", ".join(c.name for c in hard), report)
    if failures:
        c = failures[0]
        raise HypothesisError(f"hypothesis violated: {c.name} (measured {c.measured:.6g}, "
                              f"required {c.threshold:.6g})")


def versions():
    return {"kawactl": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# ---------------------------------------------------------------- pipelines

def _write_traces(out, pb, traj, forcing, opts, f0=None):
    trace = observation_derivative(traj, forcing, traj.mu, traj.nu, pb.omega, pb.coefficients)
    write_observation_csv(trace, out / "observation.csv")
    if opts["write_trajectory"]:
        write_trajectory_csv(traj, out / "trajectory.csv")
        write_snapshot(traj, out / "trajectory.kawa")
    if f0 is not None:
        write_control_csv(f0, out / "control.csv")
    return trace


def run_solve(pb, config, opts, out):
    nonlinear = opts["equation"] == "nonlinear"
    if opts["equation"] not in ("linear", "nonlinear"):
        raise ConfigError("equation must be 'linear' or 'nonlinear'")
    traj = (solve_nonlinear if nonlinear else solve_linear)(pb)
    trace = _write_traces(out, pb, traj, None, opts)
    l2 = traj.l2_profile()
    return {"equation": opts["equation"], "sup_l2": float(l2.max()), "final_l2": float(l2[-1]),
            "max_abs": float(np.max(np.abs(traj.values))),
            "qprime_mismatch": trace.derivative_mismatch(),
            "q_integral_mismatch": trace.integral_mismatch()}


def run_control_linear(pb, config, opts, out):
    constants = compute_constants(pb, seed=config.seed)
    res = control_linear(pb, None, config.tol, config.max_iter, mode=opts["mode"],
                         constants=constants)
    closed, _ = closed_loop_residual(pb, res.f0)
    _write_traces(out, pb, res.trajectory, Forcing.pair(res.f0, pb.g), opts, res.f0)
    results = {"control": {k: v for k, v in res.to_dict().items() if k != "v1"},
               "closed_loop_residual": closed,
               "refined_bound": refined_bound_check(res, pb, constants).to_dict()}
    results["residual"] = res.residual
    if opts["uT"] is not None:
        # a scalar target is a constant profile on the grid
        uT = np.broadcast_to(np.asarray(opts["uT"], float), pb.x.shape)
        results["mass_control"] = mass_control_check(pb, uT, res).to_dict()
    return results


def run_control_nonlinear(pb, config, opts, out):
    constants = compute_constants(pb, seed=config.seed)
    res = control_nonlinear(pb, config.tol, config.max_iter, C_T=opts["C_T"], seed=config.seed,
                            mode=opts["mode"], constants=constants)
    checks = dict(res.checks)
    closed_traj = checks.pop("closed_loop_trajectory")
    _write_traces(out, pb, closed_traj, Forcing.pair(res.f0, pb.g), opts, res.f0)
    control = {"residual": res.residual, "iterations": res.iterations, "converged": res.converged,
               "scale": res.scale, "contraction": res.contraction,
               "constants": constants.to_dict(), **checks}
    return {"control": control, "residual": res.residual,
            "closed_loop_residual": checks["closed_loop_residual"]}


def run_minimal_time(pb, config, opts, out):
    rep = minimal_time(pb, C_T=opts["C_T"], certify=bool(opts["certify"]), tol=config.tol,
                       max_iter=config.max_iter, seed=config.seed,
                       certify_steps=opts["certify_steps"])
    return {"minimal_time": rep.to_dict()}


def run_scaling_check(pb, config, opts, out):
    rows, equiv = [], []
    control = control_nonlinear(pb, config.tol, config.max_iter, C_T=opts["C_T"],
                                seed=config.seed, validate=False)
    for delta in opts["deltas"]:
        rows.append(scaling_report(pb, float(delta), control.f0,
                                   nu_exponent=float(opts["nu_scaling_exponent"])).to_dict())
        equiv.append(observation_equivalence(pb, float(delta), control.f0, config.tol,
                                             phi_exponent=float(opts["phi_scaling_exponent"])
                                             ).to_dict())
    return {"scaling": rows, "observation_equivalence": equiv,
            "passed": all(r["passed"] for r in rows) and all(e["equivalent"] for e in equiv)}


def run_diagnostics(pb, config, opts, out):
    table = wellposedness_ratio(pb, int(opts["ensemble_size"]), config.seed)
    probe = bilinear_probe(int(opts["probe_size"]), float(opts["probe_s"]), float(opts["probe_b"]),
                           float(opts["probe_alpha"]), config.seed)
    traj = solve_linear(pb)
    field = SpaceTimeField(traj.values, traj.h, traj.tau)
    xsb = weighted_spacetime_norm(field, "Xsb", 0.0, 0.0)
    l2 = field.l2()
    trace_val, trace_idx = trace_sobolev_diagnostic(traj.values, traj.h, traj.tau)
    bound = qprime_norm_bound(traj, None, pb.mu, pb.nu, pb.omega, pb.p, pb.coefficients)
    return {
        "wellposedness": {k: v for k, v in table.to_dict().items() if k != "ratios"},
        "bilinear_probe": probe.to_dict(),
        "parseval": {"xsb_00": xsb, "l2": l2,
                     "relative_error": abs(xsb - l2) / l2 if l2 > 0 else abs(xsb)},
        "trace_sobolev": {"value": trace_val, "x": float(pb.x[trace_idx])},
        "qprime_bound": bound.to_dict(),
        "data_norms": {"mu_H2/5": fractional_sobolev_norm(pb.mu, 0.4),
                       "nu_H1/5": fractional_sobolev_norm(pb.nu, 0.2),
                       "g_L2L2": lp_l2(pb.g.grid_samples, pb.grid.h, pb.grid.tau)},
    }


PIPELINES = {
    "solve": run_solve,
    "control-linear": run_control_linear,
    "control-nonlinear": run_control_nonlinear,
    "minimal-time": run_minimal_time,
    "scaling-check": run_scaling_check,
    "diagnostics": run_diagnostics,
}


def run(config):
    """Execute one command and write report.json (plus CSVs) into config.output_dir."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    pb, opts = resolve_problem(config)
    report = validate_problem(pb)
    check_validation(report, config.command)
    results = PIPELINES[config.command](pb, config, opts, out)
    run_report = RunReport(config.command, {**config.to_dict(), "resolved_options": opts},
                           pb.to_dict(), report.to_dict(), results,
                           {"seconds": time.perf_counter() - start}, versions())
    write_report(run_report.to_dict(), out / "report.json")
    return run_report


def _error_payload(exc):
    payload = {"status": "error", "category": getattr(exc, "category", "internal"),
               "exit_code": getattr(exc, "exit_code", 1), "message": str(exc)}
    for attr in ("iterations", "contraction", "step"):
        if getattr(exc, attr, None) is not None:
            payload[attr] = getattr(exc, attr)
    if getattr(exc, "report", None) is not None:
        payload["validation"] = exc.report.to_dict()
    return payload


def run_safely(config):
    """run() with errors mapped to (exit code, payload); the payload is also written."""
    try:
        report = run(config)
        return 0, report.to_dict()
    except KawaError as exc:
        payload = _error_payload(exc)
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the internal category
        log.exception("internal error")
        payload = _error_payload(exc)
        payload["category"], payload["exit_code"] = "internal", 1
    try:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_report({**payload, "config": config.to_dict()}, out / "report.json")
    except (OSError, TypeError):
        pass
    return payload["exit_code"], payload


def _sweep_member(config):
    code, payload = run_safely(config)
    return code, payload.get("status", "ok"), config.output_dir


def sweep(configs, workers=None):
    """Run several configurations in parallel, each in its own output directory."""
    dirs = [c.output_dir for c in configs]
    if len(set(dirs)) != len(dirs):
        raise ConfigError("sweep members need distinct output directories")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_member, configs))


def build_parser():
    ap = argparse.ArgumentParser(prog="kawactl", description="Control synthesis for the "
                                 "Kawahara equation with an integral observation.")
    ap.add_argument("command", choices=COMMANDS + ("sweep",))
    ap.add_argument("--problem", action="append", required=True,
                    help="problem JSON file (repeat for sweep)")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--tol", type=float, default=1e-8)
    ap.add_argument("--max-iter", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override a problem field (dotted path) or a run option")
    ap.add_argument("--sweep-command", choices=COMMANDS, default="solve",
                    help="command executed by each sweep member")
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = parse_overrides(args.set)
        if args.command == "sweep":
            configs = [RunConfig(args.sweep_command, p, str(Path(args.out) / f"{i:03d}_{Path(p).stem}"),
                                 args.tol, args.max_iter, args.seed, overrides)
                       for i, p in enumerate(args.problem)]
            results = sweep(configs, args.workers)
            for code, status, where in results:
                print(json.dumps({"out": where, "exit_code": code, "status": status}))
            return max(code for code, _, _ in results)
        if len(args.problem) != 1:
            raise ConfigError("exactly one --problem is expected outside sweep mode")
        config = RunConfig(args.command, args.problem[0], args.out, args.tol, args.max_iter,
                           args.seed, overrides)
    except KawaError as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return exc.exit_code
    code, payload = run_safely(config)
    if code:
        print(json.dumps({k: payload[k] for k in ("status", "category", "exit_code", "message")}),
              file=sys.stderr)
    else:
        print(json.dumps({"status": "ok", "out": str(Path(args.out) / "report.json")}))
    return code


if __name__ == "__main__":
    sys.exit(main())
