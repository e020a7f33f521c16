import math

import numpy as np
import pytest
import sympy as sp

import manufactured as mms
from kawactl.errors import DomainError
from kawactl.model import problem_from_dict
from kawactl.norms import l2_space
from kawactl.scaling import (cn_residual, delta0_from_c0, minimal_time, observation_equivalence,
                             rescale_problem, scaling_report, scaling_residual)
from kawactl.solver import Forcing, solve_nonlinear


def _mms_problem(h, tau):
    return problem_from_dict(mms.config(h, tau))


def _compatible_problem(h, tau):
    # u0 = 0, mu = nu = 0 and f0 = 3 t^3: the corner conditions hold to high order
    cfg = mms.config(h, tau)
    cfg["u0"] = {"preset": "zero"}
    cfg["nu"] = {"preset": "zero"}
    return problem_from_dict(cfg)


@pytest.mark.parametrize("delta", [0.0, -0.5, 1.5, float("nan"), float("inf")])
def test_delta_outside_unit_interval(canonical, delta):
    with pytest.raises(DomainError):
        rescale_problem(canonical, delta)


def test_identity_scaling(canonical):
    sp = rescale_problem(canonical, 1.0)
    assert sp.scaled.to_dict() == canonical.to_dict()
    np.testing.assert_array_equal(sp.scaled.u0, canonical.u0)


def test_scaled_coefficients_and_grid(canonical):
    sp = rescale_problem(canonical, 0.5)
    s = sp.scaled
    assert s.alpha == pytest.approx(0.5 ** 4) and s.beta == pytest.approx(0.25)
    assert s.grid.n_space == canonical.grid.n_space and s.grid.n_time == canonical.grid.n_time
    assert s.grid.h == pytest.approx(0.1) and s.T == pytest.approx(32.0)
    np.testing.assert_allclose(s.u0, 0.5 ** 4 * canonical.u0, rtol=1e-13, atol=1e-300)


@pytest.mark.parametrize("delta", [0.9, 0.5, 0.2])
def test_initial_norm_scales_like_delta_seven_halves(canonical_nonlinear, delta):
    # ||d^4 u0(d .)||_2 = d^4 d^{-1/2} ||u0||_2 by the substitution y = d x
    base = canonical_nonlinear
    s = rescale_problem(base, delta).scaled
    ratio = float(l2_space(s.u0, s.grid.h) / l2_space(base.u0, base.grid.h))
    assert ratio == pytest.approx(delta ** 3.5, rel=1e-12)
    # continuum oracle by exact integration of the same profile x^2 e^{-x}
    x, d = sp.symbols("x d", positive=True)
    u0 = x**2 * sp.exp(-x)
    lhs = sp.integrate((d**4 * u0.subs(x, d * x)) ** 2, (x, 0, sp.oo))
    rhs = sp.integrate(u0**2, (x, 0, sp.oo))
    assert sp.simplify(sp.sqrt(lhs / rhs) - d**sp.Rational(7, 2)) == 0


def test_composition(canonical):
    a = rescale_problem(rescale_problem(canonical, 0.7).scaled, 0.5).scaled
    b = rescale_problem(canonical, 0.35).scaled
    assert a.grid.h == pytest.approx(b.grid.h, rel=1e-12)
    assert a.grid.tau == pytest.approx(b.grid.tau, rel=1e-12)
    for fa, fb in ((a.u0, b.u0), (a.mu.samples, b.mu.samples), (a.nu.samples, b.nu.samples),
                   (a.phi.samples, b.phi.samples), (a.g.grid_samples, b.g.grid_samples),
                   (a.omega_rows, b.omega_rows)):
        np.testing.assert_allclose(fa, fb, rtol=1e-12, atol=1e-12 * max(np.max(np.abs(fb)), 1e-300))


def test_zero_solution_zero_residual(zero_data):
    assert scaling_residual(zero_data, 0.5) == 0.0


def test_unit_delta_reproduces_base_residual():
    pb = _mms_problem(0.1, 0.01)
    rep = scaling_report(pb, 1.0, 0.3 * np.cos(pb.t))
    assert rep.residual == pytest.approx(rep.base_residual, rel=1e-6)
    assert rep.passed


def test_base_residual_is_the_flux_splitting():
    pb = _compatible_problem(0.1, 0.01)
    f0 = 3 * pb.t ** 3
    lin = cn_residual(pb.replace(nonlinearity_power=1), np.zeros((pb.t.size, pb.x.size)), f0)
    traj = solve_nonlinear(pb, Forcing.pair(f0, pb.g))
    assert cn_residual(pb, traj.values, f0) < 1e-3 * lin


@pytest.mark.parametrize("delta", [0.7, 0.5])
def test_residual_shrinks_at_scheme_order(delta):
    res = []
    for h, tau in ((0.1, 0.01), (0.05, 0.005)):
        pb = _compatible_problem(h, tau)
        rep = scaling_report(pb, delta, 3 * pb.t ** 3)
        assert rep.passed
        res.append(rep.residual)
    assert res[0] / res[1] >= 3.5


def test_wrong_boundary_exponent_is_detected():
    pb = _mms_problem(0.1, 0.01)
    rep = scaling_report(pb, 0.5, 0.3 * np.cos(pb.t), nu_exponent=4.0)
    assert not rep.passed


def test_observation_equivalence_both_ways(canonical):
    from kawactl.control import control_linear

    pb = canonical.regrid(h=0.1, tau=0.01)
    f0 = control_linear(pb).f0
    for delta in (0.8, 0.5):
        ok = observation_equivalence(pb, delta, f0, nonlinear=False)
        assert ok.base_ok and ok.scaled_ok and ok.ratio == pytest.approx(1.0, rel=1e-6)
        bad = observation_equivalence(pb, delta, f0.scaled(0.5), nonlinear=False)
        assert not bad.base_ok and not bad.scaled_ok and bad.equivalent


def test_wrong_observation_exponent_breaks_equivalence(canonical):
    from kawactl.control import control_linear

    pb = canonical.regrid(h=0.1, tau=0.01)
    f0 = control_linear(pb).f0
    rep = observation_equivalence(pb, 0.5, f0, nonlinear=False, phi_exponent=4.0)
    assert rep.base_ok and not rep.scaled_ok and not rep.equivalent


# ---------------------------------------------------------------- minimal time

def test_delta0_formula():
    for c0 in (0.3, 1.0, 122.4):
        assert delta0_from_c0(c0) == pytest.approx((2 * c0) ** -0.2, rel=1e-15)
        assert delta0_from_c0(2 * c0) / delta0_from_c0(c0) == pytest.approx(2 ** -0.2, rel=1e-14)


def test_minimal_time_doubles_c0(canonical):
    a = minimal_time(canonical, C_T=0.6, c0=100.0)
    b = minimal_time(canonical, C_T=0.6, c0=200.0)
    assert not a.shrunk and not b.shrunk
    assert b.delta0 / a.delta0 == pytest.approx(2 ** -0.2, rel=1e-14)
    assert a.T0 == pytest.approx(a.delta0 ** 5, rel=1e-14)


def test_minimal_time_monotone_in_data_size(canonical_nonlinear):
    T0 = []
    for amp in (1e-3, 1e-1, 1.0, 10.0, 100.0):
        pb = canonical_nonlinear.replace(
            u0={"preset": "monomial_exp", "params": {"power": 2, "amplitude": amp}},
            phi={"preset": "poly", "params": {"coeffs": [1.875 * amp, 0.0]}})
        rep = minimal_time(pb, C_T=0.6)
        T0.append(rep.T0)
    assert all(b <= a for a, b in zip(T0, T0[1:]))
    assert T0[-1] < T0[0]


def test_minimal_time_certifies_canonical(canonical):
    rep = minimal_time(canonical, certify=True, certify_steps=40)
    assert rep.certified and rep.certification_residual <= 1e-8


def test_guarantee_is_one_sided(canonical_nonlinear):
    # large data: synthesis over the full horizon may fail, while the shrunken horizon
    # T0 is still certified; neither outcome is an error in the report
    from kawactl.control import control_nonlinear
    from kawactl.errors import KawaError

    pb = canonical_nonlinear.replace(
        u0={"preset": "monomial_exp", "params": {"power": 2, "amplitude": 30.0}},
        phi={"preset": "poly", "params": {"coeffs": [56.25, 0.0]}}).regrid(h=0.1, tau=0.005)
    with pytest.raises(KawaError):
        control_nonlinear(pb, C_T=0.6, max_iter=10)
    rep = minimal_time(pb, C_T=0.6, certify=True, certify_steps=40)
    assert rep.shrunk and rep.T0 < pb.T and rep.certified


def test_failed_certification_is_recorded(canonical):
    rep = minimal_time(canonical, C_T=0.6, certify=True, certify_steps=40, max_iter=1)
    assert rep.certified is False
    assert rep.detail.startswith("not certified")
