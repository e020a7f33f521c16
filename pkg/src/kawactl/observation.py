"""The observation q(t) = int u(t,x) omega(x) dx and the identity for its derivative."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bourgain import SpaceTimeField, weighted_spacetime_norm
from .errors import DimensionError, PreconditionError
from .model import BoundCheck, TimeSignal, Verdict
from .norms import fractional_sobolev_norm, lp_time_norm, l1_space, l2_space, trapezoid_weights


def _weight_on(traj, omega):
    rows = omega.rows(traj.x) if hasattr(omega, "rows") else np.asarray(omega, dtype=float)
    if rows.shape[-1] != traj.values.shape[1]:
        raise DimensionError(f"weight has {rows.shape[-1]} samples, trajectory has "
                             f"{traj.values.shape[1]} nodes")
    return rows


def quadrature(traj):
    return trapezoid_weights(traj.values.shape[1], traj.h)


def observe(traj, omega):
    """q(t_n) by the composite trapezoid rule in x."""
    rows = _weight_on(traj, omega)
    w0 = rows[0] if rows.ndim == 2 else rows
    return TimeSignal(traj.values @ (quadrature(traj) * w0), traj.tau)


def mass_functional(traj, omega, t_index):
    """[u(t)] = int u(t,.) omega dx, the mass for the measure omega dx."""
    return float(observe(traj, omega).samples[t_index])


@dataclass(frozen=True, eq=False)
class ObservationTrace:
    q: TimeSignal
    q_prime_formula: TimeSignal
    q_prime_numeric: TimeSignal

    @property
    def t(self):
        return self.q.t

    def derivative_mismatch(self):
        return float(np.max(np.abs(self.q_prime_formula.samples - self.q_prime_numeric.samples)))

    def integral_mismatch(self):
        """max_t |q(t) - q(0) - int_0^t q'_formula|, cumulative trapezoid in time."""
        qp = self.q_prime_formula.samples
        tau = self.q.tau
        integral = np.concatenate(([0.0], np.cumsum(0.5 * tau * (qp[1:] + qp[:-1]))))
        return float(np.max(np.abs(self.q.samples - self.q.samples[0] - integral)))


def formula_terms(traj, forcing, mu, nu, omega, coefficients):
    """The pieces of q'(t) as arrays over time (keys: trace, f1, f0g, f2, u, flux)."""
    if "f2" in traj.forcing_record.get("parts", ()) and (forcing is None or forcing.f2 is None):
        raise PreconditionError("trajectory was driven by an f2 part that was not supplied")
    rows = _weight_on(traj, omega)
    wq = quadrature(traj)
    mu = np.asarray(getattr(mu, "samples", mu), dtype=float)
    nu = np.asarray(getattr(nu, "samples", nu), dtype=float)
    at0 = omega.at(traj.x[0]) if hasattr(omega, "at") else rows[:, 0]
    a, b = coefficients.alpha, coefficients.beta
    terms = {"trace": at0[3] * nu - at0[4] * mu}
    kernel = a * rows[1] + b * rows[3] - rows[5]
    terms["u"] = traj.values @ (wq * kernel)
    zero = np.zeros(traj.values.shape[0])
    terms["f1"] = terms["f0g"] = terms["f2"] = terms["flux"] = zero
    if forcing is not None:
        forcing.check_shape(traj.values.shape)
        if forcing.f1 is not None:
            terms["f1"] = forcing.f1 @ (wq * rows[0])
        if forcing.f0 is not None:
            terms["f0g"] = forcing.f0 * (forcing.g @ (wq * rows[0]))
        if forcing.f2 is not None:
            terms["f2"] = -(forcing.f2 @ (wq * rows[1]))
    if traj.nonlinear:
        k = coefficients.nonlinearity_power
        terms["flux"] = (traj.values ** (k + 1) / (k + 1)) @ (wq * rows[1])
    return terms


def observation_derivative(traj, forcing, mu, nu, omega, coefficients):
    """q, the derivative identity for q' and a finite-difference q' for comparison.

    q'(t) = w'''(0) nu - w''''(0) mu + int f1 w - int f2 w' + int u (a w' + b w''' - w^(5)),
    with f0 g counted in f1 and, for nonlinear trajectories, + int u^{k+1}/(k+1) w'.
    """
    q = observe(traj, omega)
    terms = formula_terms(traj, forcing, mu, nu, omega, coefficients)
    qp = sum(terms.values())
    numeric = np.gradient(q.samples, q.tau, edge_order=2)
    return ObservationTrace(q, TimeSignal(qp, q.tau), TimeSignal(numeric, q.tau))


def _lp_cap(signal, order, p, tau):
    # norm on L^p cap H^order taken as the larger of the two
    return max(lp_time_norm(signal, p, tau), fractional_sobolev_norm(signal, order, tau))


def qprime_norm_bound(traj, forcing, mu, nu, omega, p, coefficients, b0=0.45):
    """Both sides of the L^p bound on q' and the empirical constant C = lhs / rhs."""
    trace = observation_derivative(traj, forcing, mu, nu, omega, coefficients)
    tau, h = traj.tau, traj.h
    lhs = lp_time_norm(trace.q_prime_formula, p)
    mu_s = np.asarray(getattr(mu, "samples", mu), dtype=float)
    nu_s = np.asarray(getattr(nu, "samples", nu), dtype=float)
    rhs = float(l2_space(traj.values[0], h)) + _lp_cap(mu_s, 0.4, p, tau) + _lp_cap(nu_s, 0.2, p, tau)
    if forcing is not None:
        f1 = np.zeros(traj.values.shape)
        if forcing.f1 is not None:
            f1 = f1 + forcing.f1
        if forcing.f0 is not None:
            f1 = f1 + forcing.f0[:, None] * forcing.g
        rhs += lp_time_norm(l2_space(f1, h), p, tau)
        if forcing.f2 is not None:
            rhs += lp_time_norm(l1_space(forcing.f2, h), p, tau)
            field = SpaceTimeField(forcing.f2_derivative(h), h, tau)
            rhs += weighted_spacetime_norm(field, "Xsb", 0.0, -b0)
    if rhs == 0.0:
        verdict = Verdict.PASS if lhs == 0.0 else Verdict.FAIL
        return BoundCheck("qprime_norm", verdict, lhs, rhs, None, "zero data")
    C = lhs / rhs
    verdict = Verdict.PASS if math.isfinite(C) else Verdict.FAIL
    return BoundCheck("qprime_norm", verdict, lhs, rhs, C, "empirical constant C = lhs / rhs")
