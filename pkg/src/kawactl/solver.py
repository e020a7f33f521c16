"""Time integration of the linear and nonlinear initial-boundary-value problems.

Crank-Nicolson in the linear operator (one banded solve per step with a factorisation
computed once per grid) and, for the nonlinear equation, second-order explicit
extrapolation of the conservative flux (u^{k+1}/(k+1))_x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, DivergenceError, PreconditionError
from .model import REAL_LINE, TimeSignal
from .norms import fractional_sobolev_norm, l2_space, lp_l2, trapezoid_weights
from .stencils import KawaharaOperator

BLOWUP_FACTOR = 1e6


@lru_cache(maxsize=16)
def get_operator(n_cells, h, alpha, beta):
    return KawaharaOperator(n_cells, h, alpha, beta)


@lru_cache(maxsize=16)
def get_stepper(n_cells, h, alpha, beta, tau):
    return get_operator(n_cells, h, alpha, beta).stepper(tau)


def operator_for(pb):
    g = pb.grid
    return get_operator(g.n_space, g.h, pb.alpha, pb.beta)


def stepper_for(pb):
    g = pb.grid
    return get_stepper(g.n_space, g.h, pb.alpha, pb.beta, g.tau)


def _samples(s):
    if s is None:
        return None
    if isinstance(s, TimeSignal):
        return np.asarray(s.samples)
    return np.asarray(s, dtype=float)


@dataclass(frozen=True, eq=False)
class Forcing:
    """Source term f = f1 + f0(t) g(t,x) + f2x, all sampled on the space-time grid.

    f2x defaults to the centred (one-sided second-order at the ends) x-derivative of
    the f2 samples when f2 is given without an analytic derivative.
    """

    f1: np.ndarray | None = None
    f0: np.ndarray | None = None
    g: np.ndarray | None = None
    f2: np.ndarray | None = None
    f2x: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "f0", _samples(self.f0))
        if (self.f0 is None) != (self.g is None):
            raise PreconditionError("f0 and g must be given together")
        if self.f2x is not None and self.f2 is None:
            raise PreconditionError("f2x given without f2")

    @classmethod
    def pair(cls, f0, g, label="f0*g"):
        return cls(f0=f0, g=np.asarray(getattr(g, "grid_samples", g)), label=label)

    def is_zero(self):
        return all(a is None or not np.any(a) for a in (self.f1, self.f2, self.f2x)) and (
            self.f0 is None or not np.any(self.f0) or not np.any(self.g))

    def check_shape(self, shape):
        for name in ("f1", "g", "f2", "f2x"):
            a = getattr(self, name)
            if a is not None and np.shape(a) != shape:
                raise DimensionError(f"forcing {name} has shape {np.shape(a)}, grid needs {shape}")
        if self.f0 is not None and self.f0.shape != (shape[0],):
            raise DimensionError(f"f0 has {self.f0.size} samples, grid needs {shape[0]}")

    def f2_derivative(self, h):
        if self.f2 is None:
            return None
        if self.f2x is not None:
            return np.asarray(self.f2x)
        return np.gradient(np.asarray(self.f2), h, axis=-1, edge_order=2)

    def assemble(self, shape, h):
        """Total f on the grid, shape (n_time+1, n_space+1)."""
        self.check_shape(shape)
        total = np.zeros(shape)
        if self.f1 is not None:
            total += self.f1
        if self.f0 is not None:
            total += self.f0[:, None] * self.g
        if self.f2 is not None:
            total += self.f2_derivative(h)
        return total

    def record(self):
        parts = [name for name in ("f1", "f0", "f2") if getattr(self, name) is not None]
        return {"label": self.label, "parts": parts,
                "f2x": None if self.f2 is None else
                ("analytic" if self.f2x is not None else "discrete")}


@dataclass(frozen=True, eq=False)
class Trajectory:
    values: np.ndarray
    t: np.ndarray
    x: np.ndarray
    mu: np.ndarray
    nu: np.ndarray
    forcing_record: dict = field(default_factory=dict)
    nonlinear: bool = False

    def __post_init__(self):
        for name in ("values", "t", "x", "mu", "nu"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    @property
    def tau(self):
        return float(self.t[1] - self.t[0])

    @property
    def boundary_traces(self):
        return {"mu": self.mu, "nu": self.nu}

    def l2_profile(self):
        return l2_space(self.values, self.h)


def _resolve_data(pb, u0, mu, nu):
    nt, N = pb.grid.n_time, pb.grid.n_space
    u0 = pb.u0 if u0 is None else np.asarray(u0, dtype=float)
    mu = pb.mu.samples if mu is None else _samples(mu)
    nu = pb.nu.samples if nu is None else _samples(nu)
    if u0.shape != (N + 1,):
        raise DimensionError(f"u0 has shape {u0.shape}, grid needs {(N + 1,)}")
    for name, s in (("mu", mu), ("nu", nu)):
        if s.shape != (nt + 1,):
            raise DimensionError(f"{name} has {s.size} samples, grid needs {nt + 1}")
    if pb.domain.kind == REAL_LINE and (np.any(mu) or np.any(nu)):
        raise PreconditionError("the real-line problem has homogeneous end conditions")
    return u0, mu, nu


def _flux_derivative(op, u, power):
    return op.ddx(u ** (power + 1) / (power + 1))


def march(pb, u0, mu, nu, F, power=None):
    """Advance the scheme; F is the total forcing on the grid (or None).

    power=None gives the linear equation, otherwise the flux u^{power} u_x is added.
    Returns the nodal values, shape (n_time+1, n_space+1).
    """
    op, cn = operator_for(pb), stepper_for(pb)
    nt, N, tau = pb.grid.n_time, pb.grid.n_space, pb.grid.tau
    U = np.zeros((nt + 1, N + 1))
    U[0] = u0
    U[1:, 0] = mu[1:]
    b = np.outer(mu, op.b_mu) + np.outer(nu, op.b_nu)
    src = b if F is None else b + F[:, 1:N]
    w = U[0, 1:N].copy()
    if power is not None:
        scale = max(np.max(np.abs(u0)), np.max(np.abs(mu)), np.max(np.abs(nu)),
                    pb.grid.T * (0.0 if F is None else np.max(np.abs(F))))
        limit = BLOWUP_FACTOR * (scale if scale > 0 else 1.0)
        flux_prev = _flux_derivative(op, U[0], power)
    for n in range(nt):
        rhs = cn.explicit_half(w) + 0.5 * tau * (src[n] + src[n + 1])
        if power is None:
            w = cn.solve(rhs)
        else:
            if n == 0:
                # Heun-type start: predict with the frozen flux, then average
                w_pred = cn.solve(rhs - tau * flux_prev)
                u_pred = np.concatenate(([mu[1]], w_pred, [0.0]))
                flux_star = 0.5 * (flux_prev + _flux_derivative(op, u_pred, power))
                flux_now = flux_prev
            else:
                flux_now = _flux_derivative(op, U[n], power)
                flux_star = 1.5 * flux_now - 0.5 * flux_prev
            w = cn.solve(rhs - tau * flux_star)
            flux_prev = flux_now
            peak = np.max(np.abs(w))
            if not np.isfinite(peak) or peak > limit:
                raise DivergenceError(f"solution blew up at step {n + 1} (max|u| = {peak:.3e})",
                                      step=n + 1)
        U[n + 1, 1:N] = w
    return U


def _solve(pb, forcing, u0, mu, nu, power):
    u0, mu, nu = _resolve_data(pb, u0, mu, nu)
    shape = (pb.grid.n_time + 1, pb.grid.n_space + 1)
    F = None
    record = {"label": "zero", "parts": [], "f2x": None}
    if forcing is not None:
        F = forcing.assemble(shape, pb.grid.h)
        record = forcing.record()
    U = march(pb, u0, mu, nu, F, power)
    return Trajectory(U, pb.t, pb.x, mu, nu, record, power is not None)


def solve_linear(pb, forcing=None, *, u0=None, mu=None, nu=None):
    """S(u0, mu, nu, f) for the linear equation. Data default to those of pb."""
    return _solve(pb, forcing, u0, mu, nu, None)


def solve_nonlinear(pb, forcing=None, *, u0=None, mu=None, nu=None):
    """Solution of the equation with the u^k u_x term (k = nonlinearity_power)."""
    return _solve(pb, forcing, u0, mu, nu, pb.coefficients.nonlinearity_power)


def energy_history(traj, forcing):
    """(E, W): E_n = int u(t_n)^2 dx and W_n = 2 int_0^{t_n} int f u dx dt.

    The time integral uses step averages of f and u, which is the discrete energy
    balance of the Crank-Nicolson scheme.
    """
    if np.any(traj.values[0]) or np.any(traj.mu) or np.any(traj.nu):
        raise PreconditionError("energy inequality needs u0 = 0 and mu = nu = 0")
    h, tau = traj.h, traj.tau
    F = forcing.assemble(traj.values.shape, h) if forcing is not None else np.zeros_like(traj.values)
    wq = trapezoid_weights(traj.values.shape[1], h)
    U = traj.values
    E = (U * U) @ wq
    ubar = 0.5 * (U[1:] + U[:-1])
    fbar = 0.5 * (F[1:] + F[:-1])
    W = np.concatenate(([0.0], 2.0 * tau * np.cumsum((ubar * fbar) @ wq)))
    return E, W


def energy_residual(traj, forcing):
    """max_t ( int u^2 dx - 2 int_0^t int f u dx dt ); nonpositive certifies the inequality."""
    E, W = energy_history(traj, forcing)
    return float(np.max(E - W))


# ---------------------------------------------------------------- random data

def random_data(pb, rng, amplitude=1.0):
    """Smooth admissible data (u0, mu, nu, f) drawn from a few-parameter family.

    Corner-compatible on the half-line: u0(0) = mu(0) and u0'(0) = nu(0).
    """
    x, t, T = pb.x, pb.t, pb.grid.T
    c = amplitude * rng.standard_normal(7)
    if pb.domain.kind == REAL_LINE:
        center = rng.uniform(-2.0, 2.0)
        u0 = c[0] * np.exp(-(x - center) ** 2)
        mu = np.zeros_like(t)
        nu = np.zeros_like(t)
    else:
        u0 = (c[0] * x + c[1] * x * x) * np.exp(-x)
        mu = c[2] * np.sin(np.pi * t / T)
        nu = c[0] * np.cos(np.pi * t / T) + c[3] * np.sin(2 * np.pi * t / T)
    center = rng.uniform(2.0, 6.0) if pb.domain.kind != REAL_LINE else rng.uniform(-3.0, 3.0)
    width = rng.uniform(0.7, 1.5)
    freq = rng.uniform(0.5, 3.0)
    f = (c[4] * np.cos(freq * t) + c[5])[:, None] * np.exp(-((x[None, :] - center) / width) ** 2)
    return u0, mu, nu, f


@dataclass(frozen=True)
class RatioTable:
    ratios: tuple
    seed: int
    max: float
    median: float
    mean: float

    def to_dict(self):
        return {"seed": self.seed, "ensemble_size": len(self.ratios), "max": self.max,
                "median": self.median, "mean": self.mean, "ratios": list(self.ratios)}


def data_size(pb, u0, mu, nu, f):
    tau = pb.grid.tau
    return (float(l2_space(u0, pb.grid.h)) + fractional_sobolev_norm(mu, 0.4, tau)
            + fractional_sobolev_norm(nu, 0.2, tau) + lp_l2(f, pb.grid.h, tau, 2.0))


def wellposedness_ratio(pb, ensemble_size, seed, amplitude=1.0):
    """Surrogate for the solution-map bound: sup_t ||u(t)|| over the data size.

    Data size is ||u0|| + ||mu||_{H^{2/5}} + ||nu||_{H^{1/5}} + ||f||_{L2 L2}; a member
    with zero data has ratio 0.
    """
    if ensemble_size < 1:
        raise ValueError("ensemble_size must be >= 1")
    children = np.random.SeedSequence(seed).spawn(ensemble_size)
    ratios = []
    for child in children:
        u0, mu, nu, f = random_data(pb, np.random.default_rng(child), amplitude)
        size = data_size(pb, u0, mu, nu, f)
        if size == 0.0:
            ratios.append(0.0)
            continue
        traj = solve_linear(pb, Forcing(f1=f, label="random"), u0=u0, mu=mu, nu=nu)
        ratios.append(float(np.max(traj.l2_profile())) / size)
    r = np.array(ratios)
    return RatioTable(tuple(ratios), int(seed), float(r.max()), float(np.median(r)), float(r.mean()))
