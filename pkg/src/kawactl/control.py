"""Synthesis of the control amplitude f0(t) for the integral condition int u omega = phi.

Linear case: f0 is the fixed point of the affine map

    (A f0)(t) = phi'(t)/g1(t) - (1/g1(t)) int u (alpha w' + beta w''' - w^(5)) dx,
    u = S(0, 0, 0, f0 g),

found by Picard iteration. The map is evaluated in one of two ways:

* ``"discrete"`` (default) uses the adjoint of the discrete operator, so that the
  discrete observation of the discrete solution matches phi at every time node up
  to the Picard tolerance;
* ``"analytic"`` uses the continuous formula with trapezoid quadrature, so the
  observation matches phi only up to O(h^2 + tau^2).

Nonlinear case: the outer map v -> Theta v runs the linear construction with the
flux v^{k+1}/(k+1) moved to the right-hand side.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, HypothesisError, PreconditionError, ValidationError
from .model import (G1_NOISE, BoundCheck, TimeSignal, Verdict, compat_tolerance,
                    validate_problem)
from .norms import (INF, fractional_sobolev_norm, l2_space, lp_time_norm, trapezoid_weights,
                    weighted_lp_ratio)
from .observation import observe
from .solver import Forcing, operator_for, solve_linear, solve_nonlinear, wellposedness_ratio

log = logging.getLogger(__name__)

MODES = ("discrete", "analytic")


@dataclass(frozen=True)
class ContractionConstants:
    c0: float
    gamma_star: float
    kappa_measured: float
    g0: float
    p: float = 2.0
    T: float = 1.0

    def factor(self, gamma):
        """Theoretical contraction factor of the linear part at weight exponent gamma."""
        return contraction_factor(self.c0, self.T, self.p, gamma)

    def to_dict(self):
        return {"c0": self.c0, "gamma_star": self.gamma_star, "kappa_measured": self.kappa_measured,
                "g0": self.g0, "p": "inf" if self.p == INF else self.p, "T": self.T}


@dataclass(frozen=True, eq=False)
class ControlResult:
    f0: TimeSignal
    trajectory: object
    residual: float
    iterations: int
    converged: bool
    constants: ContractionConstants | None
    target: TimeSignal | None = None
    scale: float = 1.0
    history: tuple = ()
    contraction: float | None = None
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        out = {"residual": self.residual, "iterations": self.iterations,
               "converged": self.converged, "scale": self.scale,
               "contraction": self.contraction, "history": list(self.history)}
        if self.constants is not None:
            out["constants"] = self.constants.to_dict()
        out.update({k: (v.to_dict() if hasattr(v, "to_dict") else v) for k, v in self.checks.items()})
        return out


def contraction_factor(c0, T, p, gamma):
    if p == INF:
        return c0 / gamma
    q = p / (p - 1.0)
    return c0 * T ** (1.0 / p) / (q * gamma) ** (1.0 / q)


def gamma_star(c0, T, p):
    """Smallest gamma with contraction_factor(c0, T, p, gamma) <= 1/2."""
    if p == INF:
        return 2.0 * c0
    q = p / (p - 1.0)
    return (2.0 * c0 * T ** (1.0 / p)) ** q / q


def g1_trace(g, omega, grid, g0=None):
    """g1(t) = int g(t,x) omega(x) dx and min_t |g1|.

    With g0 given, a dip below g0 raises HypothesisError unless it is quadrature
    noise (< 1e-12), which is logged and tolerated.
    """
    samples = np.asarray(getattr(g, "grid_samples", g), dtype=float)
    x = grid.x
    w = trapezoid_weights(x.size, grid.h) * omega.rows(x)[0]
    g1 = samples @ w
    low = float(np.min(np.abs(g1)))
    if g0 is not None:
        same_sign = bool(np.all(g1 > 0) or np.all(g1 < 0))
        if not same_sign or low < g0 - G1_NOISE:
            raise HypothesisError(f"min_t |g1(t)| = {low:.6g} is below g0 = {g0:.6g}"
                                  + ("" if same_sign else " (g1 changes sign)"))
        if low < g0:
            log.warning("g1 below g0 by %.3g (quadrature noise); clamped", g0 - low)
    return TimeSignal(g1, grid.tau), low


def _omega_int(pb):
    N = pb.grid.n_space
    return pb.grid.h * pb.omega_rows[0, 1:N]


def _kernel(pb):
    """Discrete adjoint image A^T (h omega) on interior nodes."""
    return operator_for(pb).A.T @ _omega_int(pb)


def analytic_kernel(pb):
    rows = pb.omega_rows
    return pb.quad_weights * (pb.alpha * rows[1] + pb.beta * rows[3] - rows[5])


def compute_constants(pb, kappa=None, seed=0):
    """c0 by quadrature, gamma_star and (unless given) a measured contraction factor."""
    rows = pb.omega_rows
    wq = pb.quad_weights

    def l2(r):
        return math.sqrt(float(np.sum(wq * r * r)))

    g_sup = float(np.max(l2_space(pb.g.grid_samples, pb.grid.h)))
    c0 = (2.0 / pb.g0) * g_sup * (abs(pb.alpha) * l2(rows[1]) + abs(pb.beta) * l2(rows[3])
                                  + l2(rows[5]))
    gs = gamma_star(c0, pb.T, pb.p)
    if kappa is None:
        kappa = measure_contraction(pb, gs, seed=seed)
    return ContractionConstants(c0, gs, float(kappa), pb.g0, pb.p, pb.T)


# ---------------------------------------------------------------- the map A

def derivative_target(phi, tau, slope0=None):
    """psi with (psi_n + psi_{n+1})/2 = (phi_{n+1} - phi_n)/tau and psi_0 = phi'(0).

    Matching psi at every node makes the trapezoid-in-time growth of the discrete
    observation reproduce phi exactly.
    """
    phi = np.asarray(phi, dtype=float)
    psi = np.empty_like(phi)
    if slope0 is None:
        slope0 = np.gradient(phi, tau, edge_order=2)[0]
    psi[0] = slope0
    inc = 2.0 * np.diff(phi) / tau
    for n in range(len(phi) - 1):
        psi[n + 1] = inc[n] - psi[n]
    return psi


def _phi_slope(phi):
    return phi.derivative[0] if phi.derivative is not None else None


class AMap:
    """The affine map f0 -> A f0 for a fixed problem and target phi."""

    def __init__(self, pb, phi=None, mode="discrete", slope0=None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.pb, self.mode = pb, mode
        self.phi = pb.phi if phi is None else phi
        N = pb.grid.n_space
        g = pb.g.grid_samples
        if mode == "discrete":
            self.kernel = _kernel(pb)
            self.g1 = g[:, 1:N] @ _omega_int(pb)
            if slope0 is None:
                slope0 = _phi_slope(self.phi)
            self.drive = derivative_target(self.phi.samples, pb.grid.tau, slope0)
        else:
            self.kernel = analytic_kernel(pb)
            self.g1 = g @ (pb.quad_weights * pb.omega_rows[0])
            self.drive = np.array(self.phi.slope())
            if slope0 is not None:
                self.drive[0] = slope0
        self.zeros = np.zeros(pb.grid.n_time + 1)

    def solve(self, f0):
        return solve_linear(self.pb, Forcing.pair(f0, self.pb.g), u0=self.pb.u0 * 0.0,
                            mu=self.zeros, nu=self.zeros)

    def coupling(self, traj):
        U = traj.values
        if self.mode == "discrete":
            return U[:, 1:-1] @ self.kernel
        return U @ self.kernel

    def __call__(self, f0, traj=None):
        f0 = np.asarray(getattr(f0, "samples", f0), dtype=float)
        traj = self.solve(f0) if traj is None else traj
        return (self.drive - self.coupling(traj)) / self.g1, traj

    def linear_part(self, d):
        traj = self.solve(d)
        return -self.coupling(traj) / self.g1


def apply_A(f0, pb, phi=None, mode="discrete"):
    """One application of A (one linear solve)."""
    out, _ = AMap(pb, phi, mode)(f0)
    return TimeSignal(out, pb.grid.tau)


def random_signal(rng, t):
    T = t[-1] if t[-1] > 0 else 1.0
    c = rng.standard_normal(4)
    k = rng.uniform(0.5, 4.0, size=2)
    return (c[0] + c[1] * t / T + c[2] * np.sin(np.pi * k[0] * t / T)
            + c[3] * np.cos(np.pi * k[1] * t / T))


def measure_contraction(pb, gamma, n_pairs=4, seed=0, mode="discrete", p=None):
    """max over random pairs of ||A f - A g||_{gamma,p} / ||f - g||_{gamma,p}."""
    amap = AMap(pb, mode=mode)
    p = pb.p if p is None else p
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        d = random_signal(rng, pb.t) - random_signal(rng, pb.t)
        worst = max(worst, weighted_lp_ratio(amap.linear_part(d), d, gamma, p, pb.grid.tau))
    return float(worst)


def signal_scale(phi):
    s = max(float(np.max(np.abs(phi.samples))),
            phi.t[-1] * float(np.max(np.abs(phi.slope()))))
    return s if s > 0 else 1.0


def solve_gamma(phi, pb, tol=1e-8, max_iter=100, *, initial=None, mode="discrete",
                constants=None, slope0=None):
    """f0 = Gamma(phi): Picard iteration of A from zero (or a given initial signal).

    Stops once the sup-norm update of f0 is at most tol times its size and the
    observation residual max_t |q - phi| is at most tol times the target scale. In
    analytic mode the residual carries the O(h^2 + tau^2) consistency error, so only
    the update is tested there.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    scale = signal_scale(phi)
    if abs(phi.samples[0]) > 1e-12 * scale:
        raise PreconditionError(f"Gamma needs phi(0) = 0 (got {phi.samples[0]:.3e})")
    g1_trace(pb.g, pb.omega, pb.grid, pb.g0)
    amap = AMap(pb, phi, mode, slope0)
    f0 = np.zeros(pb.grid.n_time + 1) if initial is None else \
        np.array(getattr(initial, "samples", initial), dtype=float)
    history, ratios = [], []
    traj, converged, residual = None, False, math.inf
    for it in range(1, max_iter + 1):
        new, traj = amap(f0)
        residual = float(np.max(np.abs(observe(traj, pb.omega).samples - phi.samples)))
        step = float(np.max(np.abs(new - f0)))
        size = max(float(np.max(np.abs(f0))), float(np.max(np.abs(new))))
        history.append(step)
        if len(history) > 1 and history[-2] > 0:
            ratios.append(step / history[-2])
        small_residual = mode == "analytic" or residual <= tol * scale
        if step <= tol * max(size, 1e-300) and small_residual:
            converged = True
            break
        f0 = new
    contraction = _settled_ratio(ratios, history)
    if not converged:
        raise ConvergenceError(f"Picard iteration did not converge in {max_iter} iterations "
                               f"(last update {history[-1]:.3e}, residual {residual:.3e})",
                               iterations=max_iter, contraction=contraction)
    return ControlResult(TimeSignal(f0, pb.grid.tau), traj, residual, it, True, constants,
                         phi, scale, tuple(history), contraction)


def _settled_ratio(ratios, history):
    """Largest successive-update ratio while updates were above round-off."""
    if not ratios:
        return None
    floor = 1e-13 * max(history)
    good = [r for r, h in zip(ratios, history[1:]) if h > floor]
    return float(max(good)) if good else float(ratios[0])


# ---------------------------------------------------------------- linear control

def _require_valid(pb):
    report = validate_problem(pb)
    if not report.passed:
        names = ", ".join(c.name for c in report.failures())
        raise ValidationError(f"problem failed validation: {names}", report)
    return report


def control_linear(pb, f2=None, tol=1e-8, max_iter=100, *, f2x=None, mode="discrete",
                   constants=None, validate=True):
    """Splitting construction: u = v1 + v2 with v1 = S(u0, mu, nu, -f2x).

    phi1 = phi - q(v1) is handed to solve_gamma and v2 = S(0, 0, 0, f0 g). The
    returned trajectory is v1 + v2 and the residual is max_t |q(u) - phi|.
    """
    if validate:
        _require_valid(pb)
    forcing = None
    if f2 is not None:
        f2 = np.asarray(f2, dtype=float)
        forcing = Forcing(f2=-f2, f2x=None if f2x is None else -np.asarray(f2x), label="-f2x")
    v1 = solve_linear(pb, forcing)
    q1 = observe(v1, pb.omega)
    phi, tau = pb.phi, pb.grid.tau
    fd = lambda s: np.gradient(s, tau, edge_order=2)[0]
    slope0 = (phi.derivative[0] if phi.derivative is not None else fd(phi.samples)) - fd(q1.samples)
    # phi1(0) = phi(0) - q(v1)(0) vanishes by compatibility; drop the O(tol) remainder
    samples = phi.samples - q1.samples
    samples[0] = 0.0
    phi1 = TimeSignal(samples, tau)
    inner = solve_gamma(phi1, pb, tol, max_iter, mode=mode, constants=constants,
                        slope0=slope0)
    values = v1.values + inner.trajectory.values
    traj = type(v1)(values, v1.t, v1.x, v1.mu, v1.nu,
                    {"label": "v1 + v2", "parts": ["f0"] + (["f2"] if f2 is not None else [])},
                    False)
    scale = signal_scale(phi)
    residual = float(np.max(np.abs(observe(traj, pb.omega).samples - phi.samples)))
    return ControlResult(inner.f0, traj, residual, inner.iterations, inner.converged,
                         constants, phi, scale, inner.history, inner.contraction,
                         {"v1": v1})


def closed_loop_residual(pb, f0, nonlinear=False, f2=None):
    """Re-solve with the synthesised f0 and measure max_t |q - phi|."""
    forcing = Forcing.pair(f0, pb.g) if f2 is None else \
        Forcing(f0=f0, g=pb.g.grid_samples, f2=-np.asarray(f2))
    traj = (solve_nonlinear if nonlinear else solve_linear)(pb, forcing)
    return float(np.max(np.abs(observe(traj, pb.omega).samples - pb.phi.samples))), traj


# ---------------------------------------------------------------- nonlinear control

def smallness_size(pb):
    """c1 = ||u0|| + ||mu||_{H^{2/5}} + ||nu||_{H^{1/5}} + ||phi'||_{L^2}."""
    tau = pb.grid.tau
    return (float(l2_space(pb.u0, pb.grid.h)) + fractional_sobolev_norm(pb.mu, 0.4)
            + fractional_sobolev_norm(pb.nu, 0.2) + lp_time_norm(pb.phi.slope(), 2.0, tau))


def smallness_threshold(C_T, T):
    return 1.0 / (8.0 * C_T ** 2 * (math.sqrt(T) + 1.0))


def estimate_C_T(pb, ensemble_size=8, seed=0):
    return wellposedness_ratio(pb, ensemble_size, seed).max


def _flux(v, k):
    return v ** (k + 1) / (k + 1)


def _sup_l2(values, h):
    return float(np.max(l2_space(values, h)))


def control_nonlinear(pb, tol=1e-8, max_iter=50, *, C_T=None, seed=0, inner_tol=None,
                      inner_max_iter=100, mode="discrete", constants=None, validate=True):
    """Outer fixed point v <- Theta v from v = 0, then a nonlinear closed-loop re-solve.

    The smallness gate c1 <= 1/(8 C_T^2 (T^{1/2} + 1)) is advisory: C_T comes from an
    ensemble estimate of the solution-map ratio unless given, a violation is logged
    and recorded, and divergence is caught at run time.
    """
    if validate:
        _require_valid(pb)
    k = pb.coefficients.nonlinearity_power
    h, T = pb.grid.h, pb.T
    inner_tol = tol if inner_tol is None else inner_tol
    C_T = estimate_C_T(pb, seed=seed) if C_T is None else float(C_T)
    c1 = smallness_size(pb)
    thresh = smallness_threshold(C_T, T)
    gate = Verdict.PASS if c1 <= thresh else Verdict.ADVISORY
    if gate != Verdict.PASS:
        log.warning("smallness gate not met: c1 = %.3e > threshold %.3e (advisory)", c1, thresh)
    v = np.zeros((pb.grid.n_time + 1, pb.grid.n_space + 1))
    diffs, ratios, estimates = [], [], []
    prev_v, prev_theta = None, None
    result, converged = None, False
    scale = signal_scale(pb.phi)
    it = 0
    for it in range(1, max_iter + 1):
        f2 = _flux(v, k) if it > 1 else None
        result = control_linear(pb, f2, inner_tol, inner_max_iter, mode=mode,
                                constants=constants, validate=False)
        theta = result.trajectory.values
        diff = _sup_l2(theta - v, h)
        size = max(_sup_l2(theta, h), 1e-300)
        diffs.append(diff)
        if len(diffs) > 1 and diffs[-2] > 0:
            ratios.append(diff / diffs[-2])
        # empirical constants in the quadratic estimates for Theta
        v_norm = _sup_l2(v, h)
        est = {"theta_norm": size, "quad_bound": (math.sqrt(T) + 1.0) * v_norm ** 2}
        if prev_theta is not None:
            dv = _sup_l2(v - prev_v, h)
            dtheta = _sup_l2(theta - prev_theta, h)
            bound = (math.sqrt(T) + 1.0) * (v_norm + _sup_l2(prev_v, h)) * dv
            est["lipschitz_ratio"] = dtheta / bound if bound > 0 else None
        estimates.append(est)
        if not np.all(np.isfinite(theta)):
            raise ConvergenceError("Theta iteration produced non-finite values", it,
                                   ratios[-1] if ratios else None)
        if diff <= tol * size and result.residual <= tol * scale:
            converged = True
            break
        if it > 3 and ratios and min(ratios[-3:]) > 1.0 and diff > 1e3 * diffs[0] + 1e-300:
            raise ConvergenceError("Theta iteration diverges", it, ratios[-1])
        prev_v, prev_theta = v, theta
        v = theta
    settled = _settled_ratio(ratios, diffs)
    if not converged:
        raise ConvergenceError(f"Theta iteration did not converge in {max_iter} sweeps "
                               f"(last difference {diffs[-1]:.3e})", max_iter, settled)
    closed, closed_traj = closed_loop_residual(pb, result.f0, nonlinear=True)
    checks = {
        "smallness": {"verdict": gate.value, "c1": c1, "threshold": thresh, "C_T": C_T},
        "theta_ratios": list(ratios),
        "theta_differences": list(diffs),
        "theta_estimates": estimates,
        "closed_loop_residual": closed,
    }
    return ControlResult(result.f0, result.trajectory, result.residual, it, True, constants,
                         pb.phi, scale, tuple(diffs), settled,
                         {**checks, "closed_loop_trajectory": closed_traj})


# ---------------------------------------------------------------- bound checks

def refined_hypothesis(c0, T, p):
    return c0 * T <= (1.0 if p == INF else p ** (1.0 / p)) / 2.0


def refined_bound_check(result, pb, constants=None, rel_tol=1e-2):
    """||f0||_p <= (2/g0) ||phi'||_p when c0 T <= p^{1/p}/2; skipped otherwise."""
    c = constants or result.constants or compute_constants(pb, kappa=float("nan"))
    p = pb.p
    phi = result.target if result.target is not None else pb.phi
    lhs = lp_time_norm(result.f0, p)
    rhs = (2.0 / pb.g0) * lp_time_norm(phi.slope(), p, pb.grid.tau)
    if not refined_hypothesis(c.c0, pb.T, p):
        return BoundCheck("refined_bound", Verdict.SKIPPED, lhs, rhs, None,
                          f"hypothesis not met: c0 T = {c.c0 * pb.T:.4g}")
    ok = lhs <= rhs * (1.0 + rel_tol)
    return BoundCheck("refined_bound", Verdict.PASS if ok else Verdict.FAIL, lhs, rhs,
                      lhs / rhs if rhs > 0 else None, f"c0 T = {c.c0 * pb.T:.4g}")


def mass_control_check(pb, uT, result, quad_tol=None):
    """|[u(T)] - int uT omega dx| <= residual + quadrature tolerance."""
    uT = np.asarray(uT, dtype=float)
    if np.any(pb.mu.samples) or np.any(pb.nu.samples):
        raise PreconditionError("mass control needs homogeneous boundary data")
    w = pb.quad_weights * pb.omega_rows[0]
    tol_start = compat_tolerance(pb)
    tol_end = 1e-8 * (1.0 + float(l2_space(uT, pb.grid.h)))
    m0, mT = float(pb.u0 @ w), float(uT @ w)
    if abs(pb.phi.samples[0] - m0) > tol_start or abs(pb.phi.samples[-1] - mT) > tol_end:
        raise PreconditionError("phi must match the masses of u0 and uT at the endpoints")
    quad_tol = tol_end if quad_tol is None else quad_tol
    mass_T = float(result.trajectory.values[-1] @ w)
    lhs = abs(mass_T - mT)
    rhs = result.residual + quad_tol
    return BoundCheck("mass_control", Verdict.PASS if lhs <= rhs else Verdict.FAIL, lhs, rhs,
                      None, f"[u(T)] = {mass_T:.12g}, target {mT:.12g}")
