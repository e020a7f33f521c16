"""Closed-form data presets: weights, time signals, initial data and source shapes.

Every preset is addressed by name plus a flat ``params`` mapping. Besides its own
parameters, each family accepts generic affine reparametrisations so that the
scaling symmetry can be expressed without leaving the preset language:

* time signals:   ``amplitude * s(time_scale * t)``
* spatial data:   ``amplitude * u(space_scale * x)``
* source shapes:  ``amplitude * g(time_scale * t, space_scale * x)``
* weights:        ``amplitude * w(dilation * x)``
"""

from __future__ import annotations

import math

import numpy as np
from numpy.polynomial import hermite

from .errors import ConfigError

N_WEIGHT_DERIVS = 6  # omega and its derivatives up to order five


def monomial_exp_derivs(x, power, max_order=5):
    """Rows k=0..max_order of d^k/dx^k [x**power * exp(-x)], exact."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-x)
    out = np.empty((max_order + 1,) + x.shape)
    for k in range(max_order + 1):
        acc = np.zeros_like(x)
        for i in range(min(k, power) + 1):
            coef = math.comb(k, i) * math.perm(power, i) * (-1) ** (k - i)
            acc = acc + coef * x ** (power - i)
        out[k] = acc * e
    return out


def gaussian_derivs(x, max_order=5):
    """Rows k=0..max_order of d^k/dx^k exp(-x**2) = (-1)^k H_k(x) exp(-x**2)."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-x * x)
    out = np.empty((max_order + 1,) + x.shape)
    for k in range(max_order + 1):
        c = np.zeros(k + 1)
        c[k] = 1.0
        out[k] = (-1) ** k * hermite.hermval(x, c) * e
    return out


# name -> (derivative rows callable, class tag)
WEIGHTS = {
    "cubic_exp": (lambda x: monomial_exp_derivs(x, 3), "J_right"),
    "quartic_exp": (lambda x: monomial_exp_derivs(x, 4), "J_right"),
    "gaussian_realline": (gaussian_derivs, "RealLineH5"),
}


def _check_params(kind, name, params, allowed):
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigError(f"{kind} preset {name!r}: unknown params {sorted(unknown)}")
    merged = dict(allowed)
    for key, val in params.items():
        if isinstance(val, list):
            if not all(isinstance(v, (int, float)) and math.isfinite(v) for v in val):
                raise ConfigError(f"{kind} preset {name!r}: param {key!r} must be finite numbers")
        elif not isinstance(val, (int, float)) or isinstance(val, bool) or not math.isfinite(val):
            raise ConfigError(f"{kind} preset {name!r}: param {key!r} must be a finite number")
        merged[key] = val
    return merged


def weight_rows(name, params):
    """Return (callable x -> (6, n) derivative rows, class tag) for a weight preset."""
    if name not in WEIGHTS:
        raise ConfigError(f"unknown weight preset {name!r}; known: {sorted(WEIGHTS)}")
    base, tag = WEIGHTS[name]
    p = _check_params("weight", name, params, {"amplitude": 1.0, "dilation": 1.0})
    amp, dil = float(p["amplitude"]), float(p["dilation"])
    if dil <= 0:
        raise ConfigError("weight dilation must be positive")
    powers = dil ** np.arange(N_WEIGHT_DERIVS)

    def rows(x):
        x = np.asarray(x, dtype=float)
        return amp * powers.reshape((-1,) + (1,) * x.ndim) * base(dil * x)

    return rows, tag


# ---------------------------------------------------------------- time signals

def _poly(c):
    c = np.asarray(c, dtype=float)
    dc = c[1:] * np.arange(1, len(c)) if len(c) > 1 else np.zeros(1)
    return (lambda t: np.polynomial.polynomial.polyval(t, c),
            lambda t: np.polynomial.polynomial.polyval(t, dc))


TIME_SIGNALS = {
    # name: (factory(params) -> (f, df), default params)
    "zero": (lambda p: (lambda t: 0.0 * t, lambda t: 0.0 * t), {}),
    "constant": (lambda p: (lambda t: p["value"] + 0.0 * t, lambda t: 0.0 * t), {"value": 1.0}),
    "exp_decay": (lambda p: (lambda t: np.exp(-t), lambda t: -np.exp(-t)), {}),
    "t_exp": (lambda p: (lambda t: t * np.exp(-t), lambda t: (1.0 - t) * np.exp(-t)), {}),
    "sine": (lambda p: (lambda t: np.sin(p["freq"] * t),
                        lambda t: p["freq"] * np.cos(p["freq"] * t)), {"freq": 1.0}),
    "cosine": (lambda p: (lambda t: np.cos(p["freq"] * t),
                          lambda t: -p["freq"] * np.sin(p["freq"] * t)), {"freq": 1.0}),
    "affine": (lambda p: (lambda t: p["start"] + (p["end"] - p["start"]) * t / p["horizon"],
                          lambda t: (p["end"] - p["start"]) / p["horizon"] + 0.0 * t),
               {"start": 0.0, "end": 0.0, "horizon": 1.0}),
    "poly": (lambda p: _poly(p["coeffs"]), {"coeffs": [0.0]}),
}


def time_signal(name, params):
    """Return (f, df) callables for a time-signal preset."""
    if name not in TIME_SIGNALS:
        raise ConfigError(f"unknown time-signal preset {name!r}; known: {sorted(TIME_SIGNALS)}")
    factory, defaults = TIME_SIGNALS[name]
    p = _check_params("time-signal", name, params,
                      {**defaults, "amplitude": 1.0, "time_scale": 1.0})
    f, df = factory(p)
    a, s = float(p["amplitude"]), float(p["time_scale"])
    return (lambda t: a * f(s * np.asarray(t, dtype=float)),
            lambda t: a * s * df(s * np.asarray(t, dtype=float)))


# ---------------------------------------------------------------- spatial data

SPATIAL = {
    "zero": (lambda p: lambda x: 0.0 * x, {}),
    "monomial_exp": (lambda p: lambda x: monomial_exp_derivs(x, int(p["power"]), 0)[0],
                     {"power": 2}),
    "manufactured": (lambda p: lambda x: (x + x * x) * np.exp(-x), {}),
    "gaussian": (lambda p: lambda x: np.exp(-((x - p["center"]) / p["width"]) ** 2),
                 {"center": 0.0, "width": 1.0}),
}


def spatial(name, params):
    if name not in SPATIAL:
        raise ConfigError(f"unknown spatial preset {name!r}; known: {sorted(SPATIAL)}")
    factory, defaults = SPATIAL[name]
    p = _check_params("spatial", name, params,
                      {**defaults, "amplitude": 1.0, "space_scale": 1.0})
    f = factory(p)
    a, s = float(p["amplitude"]), float(p["space_scale"])
    return lambda x: a * f(s * np.asarray(x, dtype=float))


# ---------------------------------------------------------------- source shapes

SOURCES = {
    "exp": (lambda p: lambda t, x: np.exp(-x) + 0.0 * t, {}),
    "exp_mod": (lambda p: lambda t, x: (1.0 + p["depth"] * np.sin(p["freq"] * t)) * np.exp(-x),
                {"depth": 0.5, "freq": 1.0}),
    "gaussian": (lambda p: lambda t, x: np.exp(-((x - p["center"]) / p["width"]) ** 2) + 0.0 * t,
                 {"center": 0.0, "width": 1.0}),
    "sign_change": (lambda p: lambda t, x: np.cos(np.pi * t / p["horizon"]) * np.exp(-x),
                    {"horizon": 1.0}),
    "monomial_exp": (lambda p: lambda t, x: monomial_exp_derivs(x, int(p["power"]), 0)[0] + 0.0 * t,
                     {"power": 1}),
}


def source(name, params):
    if name not in SOURCES:
        raise ConfigError(f"unknown source preset {name!r}; known: {sorted(SOURCES)}")
    factory, defaults = SOURCES[name]
    p = _check_params("source", name, params,
                      {**defaults, "amplitude": 1.0, "time_scale": 1.0, "space_scale": 1.0})
    g = factory(p)
    a, st, sx = float(p["amplitude"]), float(p["time_scale"]), float(p["space_scale"])
    return lambda t, x: a * g(st * np.asarray(t, dtype=float), sx * np.asarray(x, dtype=float))
