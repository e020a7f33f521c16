"""Discrete norms on time signals and spatial profiles.

Functions accept either a ``TimeSignal`` (anything with ``samples`` and ``tau``)
or a raw sample array together with ``tau``.
"""

from __future__ import annotations

import math

import numpy as np

INF = math.inf


def trapezoid_weights(n_points, spacing):
    w = np.full(n_points, float(spacing))
    if n_points > 1:
        w[0] = w[-1] = 0.5 * spacing
    return w


def parse_p(p):
    """Normalise a norm exponent: 'inf'/None-like strings map to math.inf."""
    if isinstance(p, str):
        if p.lower() in ("inf", "infinity"):
            return INF
        raise ValueError(f"bad norm exponent {p!r}")
    return float(p)


def _unpack(s, tau):
    if hasattr(s, "samples"):
        return np.asarray(s.samples, dtype=float), float(s.tau)
    if tau is None:
        raise TypeError("tau is required for raw sample arrays")
    return np.asarray(s, dtype=float), float(tau)


def lp_time_norm(s, p=2.0, tau=None):
    """Composite-trapezoid L^p(0,T) norm; p = inf gives max |samples|."""
    samples, tau = _unpack(s, tau)
    p = parse_p(p)
    if p == INF:
        return float(np.max(np.abs(samples))) if samples.size else 0.0
    if p < 1:
        raise ValueError("p must be >= 1")
    a = np.abs(samples)
    top = a.max() if a.size else 0.0
    if top == 0.0:
        return 0.0
    w = trapezoid_weights(len(a), tau)
    return float(top * np.sum(w * (a / top) ** p) ** (1.0 / p))


def log_weighted_lp_norm(s, gamma, p=2.0, tau=None):
    """log ||exp(-gamma t) s||_p, evaluated in log space so large gamma cannot underflow.

    Returns -inf for the zero signal.
    """
    samples, tau = _unpack(s, tau)
    p = parse_p(p)
    t = tau * np.arange(len(samples))
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(samples)) - gamma * t
    top = logs.max()
    if not np.isfinite(top):
        return -INF
    if p == INF:
        return float(top)
    w = trapezoid_weights(len(samples), tau)
    return float(top + np.log(np.sum(w * np.exp(p * (logs - top)))) / p)


def weighted_lp_ratio(num, den, gamma, p=2.0, tau=None):
    """||e^{-gamma t} num||_p / ||e^{-gamma t} den||_p without underflow."""
    a = log_weighted_lp_norm(num, gamma, p, tau)
    b = log_weighted_lp_norm(den, gamma, p, tau)
    if b == -INF:
        return 0.0 if a == -INF else INF
    return float(np.exp(a - b))


def fractional_sobolev_norm(s, order, tau=None):
    """Discrete H^order(0,T) norm via the DFT of the even reflection.

    The samples s_0..s_N are mirrored to the period-2T sequence
    s_0..s_N, s_{N-1}..s_1, and each mode with angular frequency k is
    weighted by <k>^(2 order). At order 0 this is exactly the trapezoid L^2 norm.
    The reflection is a surrogate for the intrinsic norm on (0,T).
    """
    samples, tau = _unpack(s, tau)
    if not 0.0 <= order <= 1.0:
        raise ValueError("order must lie in [0, 1]")
    n = len(samples) - 1
    if n < 1:
        return 0.0
    ext = np.concatenate([samples, samples[-2:0:-1]])
    spec = np.fft.fft(ext)
    period = 2.0 * n * tau
    k = 2.0 * np.pi * np.fft.fftfreq(2 * n, d=period / (2 * n))
    weight = (1.0 + k * k) ** order
    energy = 0.5 * tau * np.sum(weight * np.abs(spec) ** 2) / (2 * n)
    return float(np.sqrt(max(energy, 0.0)))


def l2_space(values, h):
    """Trapezoid L^2 norm along the last axis (vectorised over leading axes)."""
    values = np.asarray(values, dtype=float)
    w = trapezoid_weights(values.shape[-1], h)
    return np.sqrt(np.sum(w * values * values, axis=-1))


def l1_space(values, h):
    values = np.asarray(values, dtype=float)
    w = trapezoid_weights(values.shape[-1], h)
    return np.sum(w * np.abs(values), axis=-1)


def lp_l2(field, h, tau, p=2.0):
    """||f||_{L^p(0,T; L^2)} for a space-time array f[t, x]."""
    return lp_time_norm(l2_space(field, h), p, tau)
