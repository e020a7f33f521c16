"""The scaling symmetry u_d(t,x) = d^4 u(d^5 t, d x) and the minimal control time.

Under the symmetry the coefficients become alpha d^4 and beta d^2 and the data

    u0_d(x) = d^4 u0(d x),      mu_d(t) = d^4 mu(d^5 t),    nu_d(t) = d^5 nu(d^5 t),
    g_d(t,x) = d g(d^5 t, d x), omega_d(x) = omega(d x),    phi_d(t) = d^3 phi(d^5 t),
    f0_d(t) = d^8 f0(d^5 t).

The exponents of nu_d and phi_d follow from the chain rule (u_dx carries d^5 and
int u_d omega_d dx = d^3 q(d^5 t)); both are configurable. The scaled problem lives on
the image grid (h/d, tau/d^5, R/d) with the same node counts, on which every
stencil of the scheme scales exactly.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .control import (closed_loop_residual, compute_constants, control_nonlinear,
                      estimate_C_T, signal_scale, smallness_size, smallness_threshold)
from .errors import DomainError, KawaError
from .model import Problem, TimeSignal, problem_from_dict
from .solver import Forcing, operator_for, solve_nonlinear

NU_EXPONENT = 5.0
PHI_EXPONENT = 3.0


def _check_delta(delta):
    if not (isinstance(delta, (int, float)) and math.isfinite(delta) and 0.0 < delta <= 1.0):
        raise DomainError(f"delta must lie in (0, 1], got {delta!r}")


def _scale_descriptor(desc, amplitude=1.0, time_scale=None, space_scale=None, dilation=None):
    desc = copy.deepcopy(desc)
    if "samples" in desc:
        if amplitude != 1.0:
            desc["samples"] = (amplitude * np.asarray(desc["samples"], dtype=float)).tolist()
        return desc
    params = desc.setdefault("params", {})
    for key, factor in (("amplitude", amplitude), ("time_scale", time_scale),
                        ("space_scale", space_scale), ("dilation", dilation)):
        if factor is not None and factor != 1.0:
            params[key] = float(params.get(key, 1.0)) * factor
    if not params:
        desc.pop("params")
    return desc


@dataclass(frozen=True, eq=False)
class ScaledProblem:
    delta: float
    base: Problem
    scaled: Problem
    nu_exponent: float = NU_EXPONENT
    phi_exponent: float = PHI_EXPONENT

    def f0(self, f0):
        """f0_d on the scaled time grid: d^8 f0(d^5 t), node for node."""
        s = np.asarray(getattr(f0, "samples", f0), dtype=float)
        return TimeSignal(self.delta ** 8 * s, self.scaled.grid.tau)

    def image(self, values):
        """d^4 u(d^5 t, d x) sampled on the scaled grid (node-aligned, no interpolation)."""
        return self.delta ** 4 * np.asarray(values)


def rescale_problem(pb, delta, nu_exponent=NU_EXPONENT, phi_exponent=PHI_EXPONENT):
    _check_delta(delta)
    if delta == 1.0:
        return ScaledProblem(1.0, pb, problem_from_dict(pb.to_dict()), nu_exponent, phi_exponent)
    d, d5 = float(delta), float(delta) ** 5
    cfg = pb.to_dict()
    cfg["alpha"] = cfg["alpha"] * d ** 4
    cfg["beta"] = cfg["beta"] * d ** 2
    cfg["domain"]["R"] = cfg["domain"]["R"] / d
    cfg["domain"]["left_cutoff"] = cfg["domain"]["left_cutoff"] / d
    grid = cfg["grid"]
    grid["h"], grid["tau"], grid["T"] = grid["h"] / d, grid["tau"] / d5, grid["T"] / d5
    cfg["u0"] = _scale_descriptor(cfg["u0"], d ** 4, space_scale=d)
    cfg["mu"] = _scale_descriptor(cfg["mu"], d ** 4, time_scale=d5)
    cfg["nu"] = _scale_descriptor(cfg["nu"], d ** nu_exponent, time_scale=d5)
    cfg["phi"] = _scale_descriptor(cfg["phi"], d ** phi_exponent, time_scale=d5)
    cfg["g"] = _scale_descriptor(cfg["g"], d, time_scale=d5, space_scale=d)
    cfg["omega"] = _scale_descriptor(cfg["omega"], dilation=d)
    return ScaledProblem(d, pb, problem_from_dict(cfg), nu_exponent, phi_exponent)


# ---------------------------------------------------------------- residuals

def cn_residual(pb, values, f0=None):
    """Max-norm residual of nodal values in the trapezoid-in-time discrete equation.

    The nonlinear flux is averaged over each step, so a solution of the explicit
    extrapolation scheme leaves an O(tau^2) residual.
    """
    op = operator_for(pb)
    k = pb.coefficients.nonlinearity_power
    U = np.asarray(values)
    tau = pb.grid.tau
    # same splitting as the stepper: the right end value is pinned to zero, so a
    # nonzero tail left in u0[N] must not reach the h^-5 closure
    LU = U[:, 1:-1] @ op.A.T + np.outer(U[:, 0], op.b_mu) + np.outer(pb.nu.samples, op.b_nu)
    flux = (U[:, 2:] ** (k + 1) - U[:, :-2] ** (k + 1)) / ((k + 1) * 2.0 * pb.grid.h)
    F = np.zeros_like(LU)
    if f0 is not None:
        f0 = np.asarray(getattr(f0, "samples", f0), dtype=float)
        F = f0[:, None] * pb.g.grid_samples[:, 1:-1]
    rhs = LU - flux + F
    R = (U[1:, 1:-1] - U[:-1, 1:-1]) / tau - 0.5 * (rhs[1:] + rhs[:-1])
    return float(np.max(np.abs(R)))


@dataclass(frozen=True)
class ScalingReport:
    delta: float
    residual: float
    base_residual: float
    interpolation_error: float
    mu_error: float
    nu_error: float
    tolerance: float

    @property
    def passed(self):
        return self.residual <= self.tolerance

    def to_dict(self):
        return {"delta": self.delta, "residual": self.residual, "base_residual": self.base_residual,
                "interpolation_error": self.interpolation_error, "mu_error": self.mu_error,
                "nu_error": self.nu_error, "tolerance": self.tolerance, "passed": self.passed}


def resample(traj, delta, t_new, x_new, degree=3):
    """d^4 u(d^5 t, d x) on the tensor grid t_new x x_new by an interpolating
    bicubic spline."""
    spline = RectBivariateSpline(traj.t, traj.x, traj.values, kx=degree, ky=degree, s=0)
    return delta ** 4 * spline(delta ** 5 * np.asarray(t_new), delta * np.asarray(x_new))


def scaling_report(pb, delta, f0=None, *, nu_exponent=NU_EXPONENT):
    """Solve the base nonlinear problem, map it through the symmetry and measure the
    discrete residual of the image in the scaled equation."""
    sp = rescale_problem(pb, delta, nu_exponent)
    f0_base = np.zeros(pb.grid.n_time + 1) if f0 is None else \
        np.asarray(getattr(f0, "samples", f0), dtype=float)
    traj = solve_nonlinear(pb, Forcing.pair(f0_base, pb.g))
    base_res = cn_residual(pb, traj.values, f0_base)
    scaled = sp.scaled
    direct = sp.image(traj.values)
    # the scaled grid is the image grid, so the spline resampling reproduces the nodes
    # up to round-off; the difference is the interpolation error
    ud = resample(traj, sp.delta, scaled.t, scaled.x)
    interp_err = float(np.max(np.abs(ud - direct)))
    res = cn_residual(scaled, ud, sp.f0(f0_base))
    mu_err = float(np.max(np.abs(ud[:, 0] - scaled.mu.samples)))
    h = scaled.grid.h
    slope = (-3 * ud[:, 0] + 4 * ud[:, 1] - ud[:, 2]) / (2 * h)
    slope_base = (-3 * traj.values[:, 0] + 4 * traj.values[:, 1] - traj.values[:, 2]) / (2 * pb.grid.h)
    # one-sided slopes carry O(h^2) error; compare against the mapped base slope error
    nu_err = float(np.max(np.abs(slope - scaled.nu.samples))
                   - sp.delta ** 5 * np.max(np.abs(slope_base - pb.nu.samples)))
    opnorm = 1.0 / h ** 5
    tol = sp.delta ** 9 * base_res * (1.0 + 1e-6) + 10.0 * opnorm * interp_err + 1e-13
    return ScalingReport(sp.delta, res, base_res, interp_err, mu_err, abs(nu_err), tol)


def scaling_residual(pb, delta, f0=None, **kwargs):
    return scaling_report(pb, delta, f0, **kwargs).residual


@dataclass(frozen=True)
class EquivalenceReport:
    delta: float
    base_residual: float
    scaled_residual: float
    base_ok: bool
    scaled_ok: bool
    ratio: float

    @property
    def equivalent(self):
        return self.base_ok == self.scaled_ok

    def to_dict(self):
        return {"delta": self.delta, "base_residual": self.base_residual,
                "scaled_residual": self.scaled_residual, "base_ok": self.base_ok,
                "scaled_ok": self.scaled_ok, "ratio": self.ratio, "equivalent": self.equivalent}


def observation_equivalence(pb, delta, f0, tol=1e-6, nonlinear=True, *,
                            phi_exponent=PHI_EXPONENT):
    """Residual of int u omega = phi for (f0, u) and for the scaled pair (f0_d, u_d)."""
    sp = rescale_problem(pb, delta, phi_exponent=phi_exponent)
    base_res, traj = closed_loop_residual(pb, f0, nonlinear=nonlinear)
    ud = sp.image(traj.values)
    scaled = sp.scaled
    qd = ud @ (scaled.quad_weights * scaled.omega_rows[0])
    scaled_res = float(np.max(np.abs(qd - scaled.phi.samples)))
    base_ok = base_res <= tol * signal_scale(pb.phi)
    scaled_ok = scaled_res <= tol * signal_scale(scaled.phi)
    expect = sp.delta ** phi_exponent * base_res
    ratio = scaled_res / expect if expect > 0 else (1.0 if scaled_res == 0 else math.inf)
    return EquivalenceReport(sp.delta, base_res, scaled_res, base_ok, scaled_ok, ratio)


# ---------------------------------------------------------------- minimal time

@dataclass(frozen=True)
class MinimalTimeReport:
    c0: float
    delta0: float
    T0: float
    c1: float
    threshold: float
    C_T: float
    shrunk: bool
    certified: bool | None = None
    certification_residual: float | None = None
    certification_iterations: int | None = None
    detail: str = ""

    def to_dict(self):
        return {"c0": self.c0, "delta0": self.delta0, "T0": self.T0, "c1": self.c1,
                "threshold": self.threshold, "C_T": self.C_T, "shrunk": self.shrunk,
                "certified": self.certified,
                "certification_residual": self.certification_residual,
                "certification_iterations": self.certification_iterations,
                "detail": self.detail}


def delta0_from_c0(c0):
    return (2.0 * c0) ** (-0.2)


def minimal_time(pb, *, C_T=None, c0=None, certify=False, tol=1e-8, max_iter=30, seed=0,
                 certify_steps=None):
    """delta0 = (2 c0)^{-1/5}, shrunk until delta0^{1/2} c1 <= 1/(8 C_T^2 (T^{1/2}+1)),
    and T0 = delta0^5.

    With certify=True the problem is moved to horizon T0 and mapped by delta0 to unit
    horizon, and control_nonlinear is run there. A failure is recorded, not raised.
    """
    if c0 is None:
        c0 = compute_constants(pb, kappa=float("nan")).c0
    C_T = estimate_C_T(pb, seed=seed) if C_T is None else float(C_T)
    c1 = smallness_size(pb)
    thresh = smallness_threshold(C_T, pb.T)
    delta0 = delta0_from_c0(c0)
    shrunk = False
    if c1 > 0 and math.sqrt(delta0) * c1 > thresh:
        delta0 = (thresh / c1) ** 2
        shrunk = True
    T0 = delta0 ** 5
    report = MinimalTimeReport(c0, delta0, T0, c1, thresh, C_T, shrunk)
    if not certify:
        return report
    steps = certify_steps or pb.grid.n_time
    short = pb.regrid(T=T0, tau=T0 / steps)
    sp = rescale_problem(short, min(delta0, 1.0))
    try:
        res = control_nonlinear(sp.scaled, tol, max_iter, C_T=C_T, seed=seed)
        certified = bool(res.converged and res.residual <= tol * res.scale)
        return MinimalTimeReport(c0, delta0, T0, c1, thresh, C_T, shrunk, certified,
                                 res.residual, res.iterations, "control_nonlinear at horizon T0")
    except KawaError as exc:
        return MinimalTimeReport(c0, delta0, T0, c1, thresh, C_T, shrunk, False, None,
                                 exc.iterations, f"not certified: {exc}")
