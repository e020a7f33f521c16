import numpy as np
import pytest

import manufactured as mms
from kawactl.errors import DimensionError, DivergenceError, PreconditionError
from kawactl.model import problem_from_dict
from kawactl.solver import (Forcing, energy_history, energy_residual, random_data,
                            solve_linear, solve_nonlinear, wellposedness_ratio)


@pytest.fixture(scope="module")
def coarse(canonical):
    return canonical.regrid(h=0.1, tau=0.01)


def _zeros(pb):
    return dict(u0=np.zeros_like(pb.x), mu=np.zeros_like(pb.t), nu=np.zeros_like(pb.t))


@pytest.mark.parametrize("solve", [solve_linear, solve_nonlinear])
def test_zero_data_gives_zero(zero_data, solve):
    traj = solve(zero_data)
    assert not np.any(traj.values)


def test_linearity(coarse, rng):
    d1 = random_data(coarse, rng)
    d2 = random_data(coarse, rng)
    a, b = 0.7, -1.9
    mix = [a * p + b * q for p, q in zip(d1, d2)]

    def S(d):
        u0, mu, nu, f = d
        return solve_linear(coarse, Forcing(f1=f), u0=u0, mu=mu, nu=nu).values

    lhs, rhs = S(mix), a * S(d1) + b * S(d2)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * np.max(np.abs(rhs))


def test_deterministic(coarse, rng):
    u0, mu, nu, f = random_data(coarse, rng, amplitude=0.1)
    runs = [solve_nonlinear(coarse, Forcing(f1=f), u0=u0, mu=mu, nu=nu).values for _ in range(2)]
    assert np.array_equal(*runs)


@pytest.mark.parametrize("power", [0, 1])
def test_manufactured_error_is_second_order(power):
    errs = []
    for h, tau in ((0.16, 0.008), (0.08, 0.004)):
        pb = problem_from_dict(mms.config(h, tau))
        tt, xx = pb.t[:, None], pb.x[None, :]
        F = Forcing(f1=mms.forcing_fn(power)(tt, xx))
        traj = (solve_nonlinear if power else solve_linear)(pb, F)
        errs.append(np.max(np.abs(traj.values - mms.exact_fn()(tt, xx))))
        assert errs[-1] <= 5.0 * (h * h + tau * tau)
    assert errs[0] / errs[1] >= 3.0


def test_quadratic_flux_manufactured():
    errs = []
    for h, tau in ((0.16, 0.008), (0.08, 0.004)):
        pb = problem_from_dict(mms.config(h, tau, power=2))
        tt, xx = pb.t[:, None], pb.x[None, :]
        traj = solve_nonlinear(pb, Forcing(f1=mms.forcing_fn(2)(tt, xx)))
        errs.append(np.max(np.abs(traj.values - mms.exact_fn()(tt, xx))))
    assert errs[0] / errs[1] >= 3.0


def test_small_data_close_to_linear(coarse, rng):
    u0, mu, nu, f = (1e-3 * a for a in random_data(coarse, rng))
    F = Forcing(f1=f)
    lin = solve_linear(coarse, F, u0=u0, mu=mu, nu=nu).l2_profile()
    non = solve_nonlinear(coarse, F, u0=u0, mu=mu, nu=nu).l2_profile()
    assert np.max(non) <= 2.0 * np.max(lin)
    assert np.max(np.abs(non - lin)) <= 1e-2 * np.max(lin)


def test_blow_up_is_reported(coarse):
    x = coarse.x
    u0 = 5e3 * np.exp(-((x - 10.0) / 0.3) ** 2)
    with pytest.raises(DivergenceError) as info:
        solve_nonlinear(coarse, u0=u0, mu=np.zeros_like(coarse.t), nu=np.zeros_like(coarse.t))
    assert info.value.step >= 1


def test_dimension_checks(coarse):
    with pytest.raises(DimensionError):
        solve_linear(coarse, u0=np.zeros(5))
    with pytest.raises(DimensionError):
        solve_linear(coarse, Forcing(f1=np.zeros((3, 3))))


def test_real_line_rejects_boundary_data(canonical_dict):
    canonical_dict["domain"] = {"kind": "RealLine", "R": 20.0, "left_cutoff": 20.0}
    canonical_dict["omega"] = {"preset": "gaussian_realline"}
    canonical_dict["u0"] = {"preset": "gaussian", "params": {"amplitude": 0.1}}
    canonical_dict["grid"] = {"h": 0.1, "tau": 0.01, "T": 0.5}
    pb = problem_from_dict(canonical_dict)
    assert pb.x[0] == -20.0
    traj = solve_linear(pb)
    assert np.max(np.abs(traj.values[-1])) < 0.1
    with pytest.raises(PreconditionError):
        solve_linear(pb, mu=np.ones_like(pb.t))


def test_trajectory_is_read_only(zero_data):
    traj = solve_linear(zero_data)
    with pytest.raises(ValueError):
        traj.values[0, 0] = 1.0


# ---------------------------------------------------------------- energy

def test_energy_zero_forcing(coarse):
    traj = solve_linear(coarse, **_zeros(coarse))
    assert energy_residual(traj, None) == 0.0


def test_energy_sign_flip_and_refinement(canonical, rng):
    state = rng.bit_generator.state
    worst = []
    for h, tau in ((0.1, 0.01), (0.05, 0.005)):
        pb = canonical.regrid(h=h, tau=tau)
        rng.bit_generator.state = state
        _, _, _, f = random_data(pb, rng)
        res = []
        for sign in (1.0, -1.0):
            F = Forcing(f1=sign * f)
            traj = solve_linear(pb, F, **_zeros(pb))
            E, _ = energy_history(traj, F)
            res.append(energy_residual(traj, F))
        assert res[0] == pytest.approx(res[1], rel=1e-12, abs=1e-14 * np.max(E))
        assert res[0] <= 10 * (h * h + tau * tau) * np.max(E)
        worst.append(max(res[0], 0.0) / np.max(E))
    assert worst[1] <= worst[0] / 3.0 or worst[1] < 1e-12


def test_energy_requires_homogeneous_data(canonical):
    traj = solve_linear(canonical.replace(u0={"preset": "monomial_exp"}))
    with pytest.raises(PreconditionError):
        energy_residual(traj, None)


# ---------------------------------------------------------------- well-posedness ratio

def test_ratio_zero_members(coarse):
    table = wellposedness_ratio(coarse, 3, seed=1, amplitude=0.0)
    assert table.ratios == (0.0, 0.0, 0.0)


def test_ratio_reproducible(coarse):
    a = wellposedness_ratio(coarse, 4, seed=9)
    b = wellposedness_ratio(coarse, 4, seed=9)
    assert a.ratios == b.ratios
    c = wellposedness_ratio(coarse, 4, seed=10)
    assert c.ratios != a.ratios


@pytest.mark.slow
def test_ratio_stable_under_refinement(canonical):
    coarse = wellposedness_ratio(canonical.regrid(h=0.1, tau=0.005), 50, seed=5)
    fine = wellposedness_ratio(canonical.regrid(h=0.05, tau=0.0025), 50, seed=5)
    assert abs(fine.max - coarse.max) <= 0.2 * coarse.max
