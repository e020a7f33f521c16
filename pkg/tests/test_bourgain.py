import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from kawactl.bourgain import (SpaceTimeField, bilinear_probe, bracket, intersection_norm,
                              probe_ratio, random_bump_field, trace_sobolev_diagnostic,
                              weighted_spacetime_norm)
from kawactl.errors import DomainError

KINDS = [("Xsb", 0.3, 0.4), ("Ysb", 0.3, 0.4), ("Dalpha", 0.0, 0.55)]


def _grid(nt=64, nx=128, h=0.1, dt=0.05):
    return np.arange(nt) * dt, np.arange(nx) * h - 6.0, h, dt


@pytest.mark.parametrize("kind,s,b", KINDS)
def test_zero_field(kind, s, b):
    assert weighted_spacetime_norm(SpaceTimeField(np.zeros((16, 20)), 0.1, 0.1), kind, s, b) == 0.0


def test_parseval(rng):
    f = SpaceTimeField(rng.standard_normal((50, 70)), 0.07, 0.03)
    for kind in ("Xsb", "Ysb"):
        norm = weighted_spacetime_norm(f, kind, 0.0, 0.0)
        assert abs(norm - f.l2()) <= 1e-10 * f.l2()
    assert f.l2() == pytest.approx(math.sqrt(0.07 * 0.03 * np.sum(f.values ** 2)), rel=1e-14)


def test_low_frequency_norm_ignores_oscillating_field():
    t, x, h, dt = _grid(nx=256)
    # envelopes negligible at the window edges, so truncation leaks nothing into |xi| <= 1
    env = np.exp(-((t[:, None] - 1.6) / 0.3) ** 2) * np.exp(-(x[None, :] / 1.0) ** 2)
    fast = SpaceTimeField(env * np.cos(15.0 * x[None, :]), h, dt)
    slow = SpaceTimeField(env, h, dt)
    d_fast = weighted_spacetime_norm(fast, "Dalpha", 0.0, 0.55)
    d_slow = weighted_spacetime_norm(slow, "Dalpha", 0.0, 0.55)
    assert d_fast <= 1e-8 * d_slow


def test_intersection_is_max():
    t, x, h, dt = _grid()
    f = SpaceTimeField(random_bump_field(np.random.default_rng(2), x, t), h, dt)
    parts = (weighted_spacetime_norm(f, "Xsb", 0.0, 0.45),
             weighted_spacetime_norm(f, "Dalpha", 0.0, 0.55))
    assert intersection_norm(f, 0.0, 0.45, 0.55) == max(parts)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (8, 12), elements=st.floats(-5, 5)),
       st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_monotone_in_b(values, s, b1, b2):
    lo, hi = sorted((b1, b2))
    f = SpaceTimeField(values, 0.2, 0.1)
    a = weighted_spacetime_norm(f, "Xsb", s, lo)
    c = weighted_spacetime_norm(f, "Xsb", s, hi)
    assert a <= c * (1 + 1e-12) + 1e-300


def test_bracket():
    assert bracket(0.0) == 1.0
    assert bracket(np.array([3.0]))[0] == pytest.approx(math.sqrt(10.0))


# ---------------------------------------------------------------- bilinear probe

@pytest.mark.parametrize("s,b,alpha", [(0.0, 0.5, 0.55), (0.0, 0.45, 0.5), (-2.0, 0.45, 0.55)])
def test_probe_parameter_ranges(s, b, alpha):
    with pytest.raises(DomainError):
        bilinear_probe(2, s, b, alpha, seed=0)


def test_zero_factor_ratio():
    t, x, h, dt = _grid()
    u = SpaceTimeField(random_bump_field(np.random.default_rng(0), x, t), h, dt)
    z = SpaceTimeField(np.zeros_like(u.values), h, dt)
    assert probe_ratio(u, z, 0.0, 0.45, 0.55) == 0.0


def test_single_bump_reproducible():
    t, x, h, dt = _grid()
    u = SpaceTimeField(random_bump_field(np.random.default_rng(5), x, t), h, dt)
    r = probe_ratio(u, u, 0.0, 0.45, 0.55)
    assert math.isfinite(r) and r > 0
    assert probe_ratio(u, u, 0.0, 0.45, 0.55) == r


def test_probe_report_is_empirical_and_seeded():
    a = bilinear_probe(4, 0.0, 0.45, 0.55, seed=21)
    b = bilinear_probe(4, 0.0, 0.45, 0.55, seed=21)
    assert a.ratios == b.ratios and a.max_ratio == b.max_ratio
    d = a.to_dict()
    assert d["empirical_only"] is True
    assert d["max_ratio"] == max(a.ratios)


def test_trace_diagnostic_picks_largest_column():
    # columns (j + 1) sin(pi t / T): the x-derivative is the same everywhere, the value
    # grows with j, so the last column carries the maximum
    t = np.arange(40) * 0.05
    vals = np.outer(np.sin(np.pi * t / t[-1]), np.arange(1, 31))
    value, index = trace_sobolev_diagnostic(vals, 0.1, 0.05, s=0.0)
    assert index == 29 and value > 0
    with pytest.raises(DomainError):
        trace_sobolev_diagnostic(vals, 0.1, 0.05, s=4.0)
