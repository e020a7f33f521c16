"""Domain types, the problem schema and problem validation."""

from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import presets
from .errors import ConfigError
from .norms import INF, l2_space, parse_p, trapezoid_weights

RIGHT_HALF_LINE = "RightHalfLine"
REAL_LINE = "RealLine"
DECAY_TOL = 1e-10
TRACE_TOL = 1e-12
G1_NOISE = 1e-12


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"
    ADVISORY = "advisory"


@dataclass(frozen=True)
class Coefficients:
    alpha: float
    beta: float
    nonlinearity_power: int = 1

    def __post_init__(self):
        if self.nonlinearity_power not in (1, 2):
            raise ConfigError("nonlinearity_power must be 1 or 2")


@dataclass(frozen=True)
class Domain:
    kind: str
    R: float
    left_cutoff: float = 0.0

    def __post_init__(self):
        if self.kind not in (RIGHT_HALF_LINE, REAL_LINE):
            raise ConfigError(f"unknown domain kind {self.kind!r}")
        if not self.R > 0:
            raise ConfigError("truncation radius R must be positive")
        if self.kind == REAL_LINE and not self.left_cutoff > 0:
            raise ConfigError("RealLine needs a positive left_cutoff")

    @property
    def left(self):
        return -self.left_cutoff if self.kind == REAL_LINE else 0.0

    @property
    def span(self):
        return self.R - self.left


def _count(span, step, what):
    n = int(round(span / step))
    if n < 1 or abs(n * step - span) > 1e-9 * span:
        raise ConfigError(f"{what}: spacing {step} does not divide {span} (within 1e-9)")
    return n


@dataclass(frozen=True)
class SpaceTimeGrid:
    h: float
    tau: float
    n_space: int
    n_time: int
    T: float
    x_left: float = 0.0

    @classmethod
    def build(cls, h, tau, T, domain):
        if not (h > 0 and tau > 0 and T > 0):
            raise ConfigError("h, tau and T must be positive")
        n_space = _count(domain.span, h, "space grid")
        n_time = _count(T, tau, "time grid")
        if n_space < 12:
            raise ConfigError("need at least 12 spatial cells for the boundary closures")
        return cls(h=float(h), tau=float(tau), n_space=n_space, n_time=n_time,
                   T=float(T), x_left=domain.left)

    @property
    def x(self):
        return self.x_left + self.h * np.arange(self.n_space + 1)

    @property
    def t(self):
        return self.tau * np.arange(self.n_time + 1)


@dataclass(frozen=True, eq=False)
class Weight:
    """Test function omega with exact derivatives up to order five."""

    name: str
    class_tag: str
    rows_fn: Callable = field(repr=False)
    params: dict = field(default_factory=dict)

    def rows(self, x):
        """Array of shape (6, len(x)): omega, omega', ..., omega^(5)."""
        return self.rows_fn(np.asarray(x, dtype=float))

    def eval(self, x):
        return tuple(self.rows(x))

    def at(self, x0):
        return self.rows(np.array([float(x0)]))[:, 0]


def preset_weight(name, **params):
    """Weight from the preset catalogue (cubic_exp, quartic_exp, gaussian_realline)."""
    rows, tag = presets.weight_rows(name, params)
    return Weight(name=name, class_tag=tag, rows_fn=rows, params=dict(params))


@dataclass(frozen=True, eq=False)
class TimeSignal:
    samples: np.ndarray
    tau: float
    derivative: np.ndarray | None = None
    p_exponent: float = 2.0

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        if self.derivative is not None:
            d = np.array(self.derivative, dtype=float)
            if d.shape != s.shape:
                raise ValueError("derivative samples must match signal samples")
            d.setflags(write=False)
            object.__setattr__(self, "derivative", d)

    @property
    def t(self):
        return self.tau * np.arange(len(self.samples))

    def slope(self):
        """Derivative samples: exact when known, else second-order differences."""
        if self.derivative is not None:
            return self.derivative
        return np.gradient(self.samples, self.tau, edge_order=2)

    def scaled(self, c):
        d = None if self.derivative is None else c * self.derivative
        return TimeSignal(c * self.samples, self.tau, d, self.p_exponent)

    def __add__(self, other):
        if len(other.samples) != len(self.samples):
            raise ValueError("time grids differ")
        d = None
        if self.derivative is not None and other.derivative is not None:
            d = self.derivative + other.derivative
        return TimeSignal(self.samples + other.samples, self.tau, d, self.p_exponent)

    def __sub__(self, other):
        return self + other.scaled(-1.0)

    @classmethod
    def zeros(cls, n_time, tau):
        z = np.zeros(n_time + 1)
        return cls(z, tau, z)


@dataclass(frozen=True, eq=False)
class SourceShape:
    grid_samples: np.ndarray
    eval: Callable | None = field(default=None, repr=False)

    def __post_init__(self):
        g = np.array(self.grid_samples, dtype=float)
        if not np.all(np.isfinite(g)):
            raise ConfigError("source shape has non-finite samples")
        g.setflags(write=False)
        object.__setattr__(self, "grid_samples", g)


# ---------------------------------------------------------------- problem

TOP_KEYS = ("alpha", "beta", "nonlinearity_power", "domain", "grid", "u0", "mu", "nu",
            "g", "omega", "phi", "p", "g0")


@dataclass(frozen=True, eq=False)
class Problem:
    coefficients: Coefficients
    domain: Domain
    grid: SpaceTimeGrid
    u0: np.ndarray
    mu: TimeSignal
    nu: TimeSignal
    g: SourceShape
    omega: Weight
    phi: TimeSignal
    p: float
    g0: float
    config: dict = field(repr=False)

    @classmethod
    def from_dict(cls, config):
        return problem_from_dict(config)

    def to_dict(self):
        return copy.deepcopy(self.config)

    def replace(self, **changes):
        """Rebuild from a modified copy of the configuration (top-level keys)."""
        cfg = self.to_dict()
        for key, val in changes.items():
            if key not in TOP_KEYS:
                raise ConfigError(f"unknown problem key {key!r}")
            cfg[key] = val
        return problem_from_dict(cfg)

    def regrid(self, h=None, tau=None, T=None):
        cfg = self.to_dict()
        grid = cfg["grid"]
        if T is not None and tau is None:
            tau = T / self.grid.n_time
        for key, val in (("h", h), ("tau", tau), ("T", T)):
            if val is not None:
                grid[key] = float(val)
        return problem_from_dict(cfg)

    @property
    def x(self):
        return self.grid.x

    @property
    def t(self):
        return self.grid.t

    @cached_property
    def omega_rows(self):
        return self.omega.rows(self.x)

    @cached_property
    def quad_weights(self):
        return trapezoid_weights(self.grid.n_space + 1, self.grid.h)

    @property
    def alpha(self):
        return self.coefficients.alpha

    @property
    def beta(self):
        return self.coefficients.beta

    @property
    def T(self):
        return self.grid.T


def _number(value, where, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: non-finite number")
    if positive and value <= 0:
        raise ConfigError(f"{where}: must be positive")
    return value


def _strict(d, required, where, optional=()):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(d) - set(required) - set(optional)
    if extra:
        raise ConfigError(f"{where}: unknown keys {sorted(extra)}")
    missing = set(required) - set(d)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _descriptor(d, where, allow_samples=True):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    if "preset" in d:
        _strict(d, ("preset",), where, optional=("params",))
        if not isinstance(d["preset"], str):
            raise ConfigError(f"{where}: preset must be a string")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError(f"{where}: params must be an object")
        return d["preset"], params, None
    if not allow_samples:
        raise ConfigError(f"{where}: only presets are accepted")
    _strict(d, ("samples",), where)
    arr = np.asarray(d["samples"], dtype=object)
    try:
        arr = arr.astype(float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: samples must be numbers") from None
    if any(isinstance(v, bool) for v in np.ravel(np.asarray(d["samples"], dtype=object))):
        raise ConfigError(f"{where}: samples must be numbers")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{where}: non-finite samples")
    return None, None, arr


def _time_signal(d, where, grid, p):
    name, params, samples = _descriptor(d, where)
    if samples is not None:
        if samples.shape != (grid.n_time + 1,):
            raise ConfigError(f"{where}: expected {grid.n_time + 1} samples")
        return TimeSignal(samples, grid.tau, None, p)
    f, df = presets.time_signal(name, params)
    t = grid.t
    return TimeSignal(np.broadcast_to(f(t), t.shape), grid.tau,
                      np.broadcast_to(df(t), t.shape), p)


def problem_from_dict(config):
    """Build a Problem from the JSON-level description; unknown keys are rejected."""
    _strict(config, TOP_KEYS, "problem")
    cfg = copy.deepcopy(config)
    coeffs_power = cfg["nonlinearity_power"]
    if isinstance(coeffs_power, bool) or not isinstance(coeffs_power, int):
        raise ConfigError("nonlinearity_power must be an integer")
    coefficients = Coefficients(_number(cfg["alpha"], "alpha"), _number(cfg["beta"], "beta"),
                                coeffs_power)
    dom = cfg["domain"]
    _strict(dom, ("kind", "R", "left_cutoff"), "domain")
    if not isinstance(dom["kind"], str):
        raise ConfigError("domain.kind must be a string")
    domain = Domain(dom["kind"], _number(dom["R"], "domain.R", True),
                    _number(dom["left_cutoff"], "domain.left_cutoff"))
    gr = cfg["grid"]
    _strict(gr, ("h", "tau", "T"), "grid")
    grid = SpaceTimeGrid.build(_number(gr["h"], "grid.h", True), _number(gr["tau"], "grid.tau", True),
                               _number(gr["T"], "grid.T", True), domain)
    p_raw = cfg["p"]
    if isinstance(p_raw, str):
        try:
            p = parse_p(p_raw)
        except ValueError:
            raise ConfigError(f"p: bad exponent {p_raw!r}") from None
    else:
        p = _number(p_raw, "p")
    if p < 2:
        raise ConfigError("p must be >= 2 (or 'inf')")
    g0 = _number(cfg["g0"], "g0", True)

    x, t = grid.x, grid.t
    name, params, samples = _descriptor(cfg["u0"], "u0")
    if samples is not None:
        if samples.shape != x.shape:
            raise ConfigError(f"u0: expected {x.size} samples")
        u0 = samples
    else:
        u0 = np.broadcast_to(presets.spatial(name, params)(x), x.shape).astype(float)
    u0.setflags(write=False)

    mu = _time_signal(cfg["mu"], "mu", grid, p)
    nu = _time_signal(cfg["nu"], "nu", grid, p)
    phi = _time_signal(cfg["phi"], "phi", grid, p)

    name, params, samples = _descriptor(cfg["g"], "g")
    if samples is not None:
        if samples.shape != (t.size, x.size):
            raise ConfigError(f"g: expected samples of shape {(t.size, x.size)}")
        g = SourceShape(samples)
    else:
        fn = presets.source(name, params)
        g = SourceShape(np.broadcast_to(fn(t[:, None], x[None, :]), (t.size, x.size)), fn)

    name, params, _ = _descriptor(cfg["omega"], "omega", allow_samples=False)
    omega = preset_weight(name, **params)
    return Problem(coefficients, domain, grid, u0, mu, nu, g, omega, phi, p, g0, cfg)


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Check:
    name: str
    verdict: Verdict
    measured: float | None = None
    threshold: float | None = None
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "verdict": self.verdict.value, "measured": self.measured,
                "threshold": self.threshold, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple

    @property
    def passed(self):
        return all(c.verdict != Verdict.FAIL for c in self.checks)

    def failures(self):
        return [c for c in self.checks if c.verdict == Verdict.FAIL]

    def to_dict(self):
        return {"passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def observe_samples(pb, values):
    """Trapezoid quadrature of values[..., x] * omega over the grid."""
    return np.asarray(values) @ (pb.quad_weights * pb.omega_rows[0])


def g1_samples(pb):
    return observe_samples(pb, pb.g.grid_samples)


def compat_residual(pb):
    return float(abs(pb.phi.samples[0] - observe_samples(pb, pb.u0)))


def compat_tolerance(pb):
    return 1e-8 * (1.0 + float(l2_space(pb.u0, pb.grid.h)))


def _check(name, ok, measured, threshold, detail=""):
    return Check(name, Verdict.PASS if ok else Verdict.FAIL, float(measured),
                 None if threshold is None else float(threshold), detail)


def validate_problem(pb):
    """Hypothesis and sanity checks for a control experiment. Pure."""
    checks = []
    grid = pb.grid
    checks.append(_check("grid.time_span", abs(grid.n_time * grid.tau - grid.T) <= 1e-9 * grid.T,
                         abs(grid.n_time * grid.tau - grid.T), 1e-9 * grid.T))
    checks.append(_check("grid.space_span",
                         abs(grid.n_space * grid.h - pb.domain.span) <= 1e-9 * pb.domain.span,
                         abs(grid.n_space * grid.h - pb.domain.span), 1e-9 * pb.domain.span))
    finite = all(np.all(np.isfinite(a)) for a in
                 (pb.u0, pb.mu.samples, pb.nu.samples, pb.phi.samples, pb.g.grid_samples))
    checks.append(_check("data.finite", finite, 0.0 if finite else 1.0, None))

    res, tol = compat_residual(pb), compat_tolerance(pb)
    checks.append(_check("compatibility", res <= tol, res, tol,
                         "|phi(0) - int u0 omega dx|"))

    g1 = g1_samples(pb)
    gmin = float(np.min(np.abs(g1)))
    same_sign = bool(np.all(g1 > 0) or np.all(g1 < 0))
    if gmin >= pb.g0 and same_sign:
        checks.append(_check("g1.lower_bound", True, gmin, pb.g0))
    elif same_sign and pb.g0 - gmin < G1_NOISE:
        checks.append(Check("g1.lower_bound", Verdict.ADVISORY, gmin, pb.g0,
                            "below g0 by quadrature noise only; clamped"))
    else:
        checks.append(_check("g1.lower_bound", False, gmin, pb.g0,
                             "min_t |int g omega dx| must be >= g0"))

    rows = pb.omega_rows
    if pb.domain.kind == RIGHT_HALF_LINE:
        traces = pb.omega.at(0.0)[:3]
        tr = float(np.max(np.abs(traces)))
        ok = pb.omega.class_tag == "J_right" and tr <= TRACE_TOL
        checks.append(_check("weight.class", ok, tr, TRACE_TOL,
                             f"class {pb.omega.class_tag}; omega, omega', omega'' at 0"))
        ends = [-1]
    else:
        checks.append(Check("weight.class", Verdict.PASS, 0.0, None,
                            f"class {pb.omega.class_tag} on the real line"))
        ends = [0, -1]
    tail = float(np.max(np.abs(rows[:, ends])))
    checks.append(_check("weight.decay", tail < DECAY_TOL, tail, DECAY_TOL))
    h5 = float(np.sqrt(np.sum(pb.quad_weights * rows * rows)))
    checks.append(_check("weight.h5_finite", math.isfinite(h5), h5 if math.isfinite(h5) else -1, None))
    u_tail = float(np.max(np.abs(pb.u0[ends])))
    checks.append(_check("u0.decay", u_tail < DECAY_TOL, u_tail, DECAY_TOL))
    g_tail = float(np.max(np.abs(pb.g.grid_samples[:, ends])))
    checks.append(_check("g.decay", g_tail < DECAY_TOL, g_tail, DECAY_TOL))

    if pb.domain.kind == RIGHT_HALF_LINE:
        corner = abs(pb.u0[0] - pb.mu.samples[0])
        checks.append(Check("corner.compatibility",
                            Verdict.PASS if corner <= 1e-10 else Verdict.ADVISORY,
                            float(corner), 1e-10, "u0(0) = mu(0); mismatch degrades accuracy"))
    return ValidationReport(tuple(checks))


def p_label(p):
    return "inf" if p == INF else p


@dataclass(frozen=True)
class BoundCheck:
    """Two sides of an a-priori estimate with the verdict and empirical constant."""

    name: str
    verdict: Verdict
    lhs: float
    rhs: float
    constant: float | None = None
    detail: str = ""

    def to_dict(self):
        return {"name": self.name, "verdict": self.verdict.value, "lhs": self.lhs,
                "rhs": self.rhs, "constant": self.constant, "detail": self.detail}
