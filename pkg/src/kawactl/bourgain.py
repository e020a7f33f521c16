"""Discrete surrogates for Fourier-restriction norms and an empirical bilinear probe.

Fields are zero-extended to a padded box before the 2-D transform. For a function
f(t, x) the transform variables are tau (time) and xi (space) with the convention
that exp(i(x xi + t tau)) sits at (tau, xi), so free linear waves lie on tau = xi^5.
Zero extension is one admissible extension, so these values bound the restriction
norms from above; they are not the infimum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import next_fast_len

from .errors import DomainError
from .norms import fractional_sobolev_norm

KINDS = ("Xsb", "Ysb", "Dalpha")


def bracket(z):
    return np.sqrt(1.0 + z * z)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    values: np.ndarray  # [t, x]
    h: float
    tau: float
    pad: int = 2
    extension: str = "zero"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("field must be a 2-D array [t, x]")
        if not np.all(np.isfinite(v)):
            raise ValueError("field has non-finite values")
        if self.pad < 1:
            raise ValueError("pad must be >= 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def padded_shape(self):
        nt, nx = self.values.shape
        return next_fast_len(self.pad * nt, True), next_fast_len(self.pad * nx, True)

    def frequencies(self):
        mt, mx = self.padded_shape
        tau = 2.0 * np.pi * np.fft.fftfreq(mt, self.tau)
        xi = 2.0 * np.pi * np.fft.fftfreq(mx, self.h)
        return tau[:, None], xi[None, :]

    def transform(self):
        return np.fft.fft2(self.values, s=self.padded_shape)

    def l2(self):
        """Riemann-sum L^2 norm over the space-time box."""
        return float(np.sqrt(self.h * self.tau * np.sum(self.values ** 2)))


def spectral_weight(field, kind, s, b_or_alpha):
    tau, xi = field.frequencies()
    if kind == "Xsb":
        return bracket(xi) ** (2 * s) * bracket(tau - xi ** 5) ** (2 * b_or_alpha)
    if kind == "Ysb":
        return bracket(tau) ** (2 * s / 5) * bracket(tau - xi ** 5) ** (2 * b_or_alpha)
    if kind == "Dalpha":
        return bracket(tau) ** (2 * b_or_alpha) * (np.abs(xi) <= 1.0)
    raise DomainError(f"unknown norm kind {kind!r}; expected one of {KINDS}")


def _norm_from_spectrum(field, spec, kind, s, b_or_alpha):
    w = spectral_weight(field, kind, s, b_or_alpha)
    mt, mx = field.padded_shape
    total = field.h * field.tau * np.sum(w * np.abs(spec) ** 2) / (mt * mx)
    return float(np.sqrt(max(total, 0.0)))


def weighted_spacetime_norm(field, kind, s, b_or_alpha):
    """Weighted l^2 norm of the 2-D transform of the zero-extended field."""
    if not (np.isfinite(s) and np.isfinite(b_or_alpha)):
        raise DomainError("norm parameters must be finite")
    return _norm_from_spectrum(field, field.transform(), kind, s, b_or_alpha)


def dx_product_norm(u, v, s, b):
    """||d/dx (u v)||_{X^{s,-b}} with the derivative taken spectrally."""
    prod = SpaceTimeField(u.values * v.values, u.h, u.tau, u.pad)
    _, xi = prod.frequencies()
    return _norm_from_spectrum(prod, 1j * xi * prod.transform(), "Xsb", s, -b)


def intersection_norm(f, s, b, alpha):
    """max(||f||_{X^{s,b}}, ||f||_{D^alpha}) as the norm on the intersection."""
    spec = f.transform()
    return max(_norm_from_spectrum(f, spec, "Xsb", s, b),
               _norm_from_spectrum(f, spec, "Dalpha", s, alpha))


# ---------------------------------------------------------------- bilinear probe

@dataclass(frozen=True)
class ProbeReport:
    s: float
    b: float
    alpha: float
    seed: int
    ensemble_size: int
    ratios: tuple
    ratios_refined: tuple
    max_ratio: float
    median_ratio: float
    max_ratio_refined: float
    relative_change: float
    stable: bool
    empirical_only: bool = True

    def to_dict(self):
        return {"s": self.s, "b": self.b, "alpha": self.alpha, "seed": self.seed,
                "ensemble_size": self.ensemble_size, "max_ratio": self.max_ratio,
                "median_ratio": self.median_ratio, "max_ratio_refined": self.max_ratio_refined,
                "relative_change": self.relative_change, "stable": self.stable,
                "empirical_only": self.empirical_only}


def random_bump_field(rng, x, t):
    """A sum of two Gaussian-windowed wave packets, negligible at the box edges."""
    X, Tt = x[None, :], t[:, None]
    L, T = x[-1], t[-1]
    out = np.zeros((t.size, x.size))
    for _ in range(2):
        a = rng.standard_normal()
        xc = rng.uniform(0.35, 0.65) * L
        wx = rng.uniform(0.05, 0.1) * L
        tc = rng.uniform(0.4, 0.6) * T
        wt = rng.uniform(0.08, 0.12) * T
        k = rng.uniform(0.0, 2.0)
        om = rng.uniform(-2.0, 2.0)
        out += (a * np.exp(-((X - xc) / wx) ** 2 - ((Tt - tc) / wt) ** 2)
                * np.cos(k * (X - xc) + om * (Tt - tc)))
    return out


def check_probe_params(s, b, alpha):
    if not b < 0.5:
        raise DomainError(f"b = {b} must be < 1/2")
    if not alpha > 0.5:
        raise DomainError(f"alpha = {alpha} must be > 1/2")
    if not s > -1.75:
        raise DomainError(f"s = {s} must be > -7/4")


def probe_ratio(u, v, s, b, alpha):
    if not np.any(u.values) or not np.any(v.values):
        return 0.0
    den = intersection_norm(u, s, b, alpha) * intersection_norm(v, s, b, alpha)
    return dx_product_norm(u, v, s, b) / den


def _ensemble(children, s, b, alpha, length, horizon, h, dt):
    x = np.arange(0.0, length + 0.5 * h, h)
    t = np.arange(0.0, horizon + 0.5 * dt, dt)
    shape = (t.size, x.size)
    grid = SpaceTimeField(np.zeros(shape), h, dt)
    _, xi = grid.frequencies()
    # weights are shared by every member on this grid
    w_x = spectral_weight(grid, "Xsb", s, b)
    w_d = spectral_weight(grid, "Dalpha", s, alpha)
    w_num = spectral_weight(grid, "Xsb", s, -b) * xi * xi
    mt, mx = grid.padded_shape
    c = h * dt / (mt * mx)

    def norm(w, spec2):
        return np.sqrt(c * np.sum(w * spec2))

    ratios = []
    for child in children:
        rng = np.random.default_rng(child)
        u = random_bump_field(rng, x, t)
        v = random_bump_field(rng, x, t)
        su = np.abs(np.fft.fft2(u, s=(mt, mx))) ** 2
        sv = np.abs(np.fft.fft2(v, s=(mt, mx))) ** 2
        sp = np.abs(np.fft.fft2(u * v, s=(mt, mx))) ** 2
        den = max(norm(w_x, su), norm(w_d, su)) * max(norm(w_x, sv), norm(w_d, sv))
        ratios.append(0.0 if den == 0.0 else float(norm(w_num, sp) / den))
    return np.array(ratios)


def bilinear_probe(ensemble_size, s, b, alpha, seed, *, length=20.0, horizon=4.0,
                   h=0.1, dt=0.02, stability_tol=0.3):
    """Empirical constant in ||(uv)_x||_{X^{s,-b}} <= c ||u||_{X^{s,b} cap D^alpha} ||v||_{..}.

    Each member draws a pair of smooth localised fields; the ensemble is evaluated on
    the base grid and on the grid with h and dt halved (same member seeds).
    """
    check_probe_params(s, b, alpha)
    if ensemble_size < 1:
        raise DomainError("ensemble_size must be >= 1")
    children = np.random.SeedSequence(seed).spawn(ensemble_size)
    base = _ensemble(children, s, b, alpha, length, horizon, h, dt)
    fine = _ensemble(children, s, b, alpha, length, horizon, h / 2, dt / 2)
    top, top_fine = float(base.max()), float(fine.max())
    change = abs(top_fine - top) / top if top > 0 else 0.0
    return ProbeReport(float(s), float(b), float(alpha), int(seed), int(ensemble_size),
                       tuple(base.tolist()), tuple(fine.tolist()), top, float(np.median(base)),
                       top_fine, change, bool(np.isfinite(top) and change <= stability_tol))


def trace_sobolev_diagnostic(values, h, tau, s=0.0):
    """max over grid columns of sum_{j=0,1} ||d_x^j f(., x)||_{H^{(s+2-j)/5}(0,T)}.

    A diagnostic for the boundary-trace part of the solution norm; the maximum is
    over grid columns, not a true supremum over x. Returns (value, x index).
    """
    values = np.asarray(values, dtype=float)
    orders = ((s + 2.0) / 5.0, (s + 1.0) / 5.0)
    if not all(0.0 <= o <= 1.0 for o in orders):
        raise DomainError("trace orders (s+2)/5 and (s+1)/5 must lie in [0, 1]")
    dx = np.gradient(values, h, axis=1, edge_order=2)
    col = np.array([fractional_sobolev_norm(values[:, j], orders[0], tau)
                    + fractional_sobolev_norm(dx[:, j], orders[1], tau)
                    for j in range(values.shape[1])])
    j = int(np.argmax(col))
    return float(col[j]), j
