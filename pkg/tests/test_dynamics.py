import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from sivcpt import dynamics as d
from sivcpt.dynamics import EXC, MINUS, PLUS, LambdaParams

G = 2 * np.pi * 94e6


def random_state(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def test_params_validation_and_geometry():
    p = LambdaParams(1.0, 1.0, 1.0, 0.0, 1.0, delta_plus=2.0, omega_b=10.0, two_photon_delta=7.0)
    assert p.delta_minus == pytest.approx(-1.0)
    assert p.raman_detuning == 3.0
    assert p.scanned(10.0).delta_minus == pytest.approx(2.0)
    with pytest.raises(ValueError):
        LambdaParams(1, 1, 1, 0, 1, delta_plus=0, delta_minus=5.0)
    with pytest.raises(ValueError):
        LambdaParams(1, 1, -1, 0, 1)
    with pytest.raises(ValueError):
        LambdaParams(1, 1, 1, 0, 1, branch_plus=1.5)


def test_dark_state_is_stationary(cpt_params):
    p = LambdaParams(0.7e8, 1.3e8, 0.5 * G, 0.0, G, delta_plus=2e7, omega_b=1e9, two_photon_delta=1e9)
    rho = d.dark_state(p)
    assert d.generator_residual(rho, p) < 1e-12
    scale = np.max(np.abs(d.real_generator(p)))
    assert np.linalg.norm(d.rhs(rho, p)) / scale < 1e-12


def test_rhs_linearity(generic_params):
    rng = np.random.default_rng(0)
    r1, r2 = random_state(rng), random_state(rng)
    a, b = 0.3, -1.7
    lhs = d.rhs(a * r1 + b * r2, generic_params)
    rhs = a * d.rhs(r1, generic_params) + b * d.rhs(r2, generic_params)
    assert np.max(np.abs(lhs - rhs)) <= 1e-14 * np.max(np.abs(d.real_generator(generic_params)))


def test_coordinate_round_trip():
    rho = random_state(np.random.default_rng(3))
    np.testing.assert_allclose(d.from_coords(d.to_coords(rho)), rho, atol=1e-15)


def test_evolve_invariants_and_expm_oracle(generic_params):
    rho0 = random_state(np.random.default_rng(4))
    traj = d.evolve(rho0, generic_params, 2e-7)
    tr = np.trace(traj.states, axis1=1, axis2=2)
    assert np.max(np.abs(tr - 1)) < 1e-9
    assert np.max(np.abs(traj.states - np.conj(np.swapaxes(traj.states, 1, 2)))) < 1e-12
    assert np.min(np.linalg.eigvalsh(traj.states)) > -1e-9
    oracle = d.from_coords(expm(d.real_generator(generic_params) * 2e-7) @ d.to_coords(rho0))
    assert np.max(np.abs(traj.states[-1] - oracle)) < 1e-8


def test_evolve_argument_errors(generic_params):
    rho0 = d.ground_mixture(0.5)
    with pytest.raises(ValueError):
        d.evolve(rho0, generic_params, 0.0)
    with pytest.raises(ValueError):
        d.evolve(rho0, generic_params, 1e-6, t_eval=[0.0, 2e-6])
    with pytest.raises(d.IntegrationError):
        d.evolve(rho0, generic_params, 1e-6, max_steps=3)


def test_unphysical_initial_state_is_reported(generic_params):
    bad = np.diag([1.5, 0.0, -0.5]).astype(complex)
    with pytest.raises(d.InvariantViolation):
        d.evolve(bad, generic_params, 1e-8)


def test_propagate_matches_evolve(generic_params):
    rho0 = d.ground_mixture(0.8)
    a = d.propagate(rho0, generic_params, 5e-8)
    b = d.evolve(rho0, generic_params, 5e-8).states[-1]
    assert np.max(np.abs(a - b)) < 1e-8


def test_perfect_dark_state_steady_state():
    p = LambdaParams(1e8, 1e8, 0.5 * G, 0.0, G, omega_b=1e9, two_photon_delta=1e9,
                     spin_flip_up=0.0, spin_flip_down=0.0)
    # without any spin exchange the bright state still decays into the dark state uniquely
    rho = d.steady_state(p)
    assert rho[EXC, EXC].real < 1e-10
    assert rho[PLUS, PLUS].real == pytest.approx(0.5, abs=1e-9)
    assert rho[MINUS, PLUS] == pytest.approx(-0.5, abs=1e-9)


def test_optical_pumping_into_minus():
    p = LambdaParams(1e8, 0.0, 0.5 * G, 0.0, G, branch_plus=0.7)
    assert d.steady_state(p)[MINUS, MINUS].real == pytest.approx(1.0, abs=1e-12)
    rho = d.evolve(d.ground_mixture(1.0), p, 8e-6, rel_tol=1e-10, abs_tol=1e-12).states[-1]
    assert rho[MINUS, MINUS].real == pytest.approx(1.0, abs=1e-7)


def test_uniqueness_failure_explains_itself():
    p = LambdaParams(0.0, 0.0, 1.0, 0.0, 0.0)
    with pytest.raises(d.NonUniqueSteadyState, match="gamma_e = 0"):
        d.steady_state(p)


def test_steady_state_matches_long_time_evolution(generic_params):
    p = generic_params
    gs_eff = p.gamma_spin + p.spin_flip_up + p.spin_flip_down
    t = 50 * max(1 / gs_eff, 1 / p.gamma_e)
    end = d.propagate(d.ground_mixture(1.0), p, t)
    ss = d.steady_state(p)
    assert np.max(np.abs(end - ss)) < 1e-7
    d.check_density_matrix(ss)


def test_symmetry_swap_leaves_excited_population(generic_params):
    p = generic_params
    q = LambdaParams(p.omega_minus, p.omega_plus, p.gamma_opt, p.gamma_spin, p.gamma_e,
                     delta_plus=p.delta_minus, omega_b=0.0, two_photon_delta=p.raman_detuning,
                     branch_plus=1 - p.branch_plus, spin_flip_up=p.spin_flip_down,
                     spin_flip_down=p.spin_flip_up)
    assert q.raman_detuning == pytest.approx(-p.raman_detuning)
    a, b = d.steady_state(p), d.steady_state(q)
    assert a[EXC, EXC].real == pytest.approx(b[EXC, EXC].real, rel=1e-10)
    assert a[PLUS, PLUS].real == pytest.approx(b[MINUS, MINUS].real, rel=1e-9)


# adiabatic formulas -----------------------------------------------------------------

def test_adiabatic_coherence_limits(cpt_params):
    p = cpt_params.with_rabi(1e7, 0.0)
    ep, em = d.adiabatic_optical_coherences(0.4, 0.6, 0.0, p)
    assert ep == pytest.approx(-0.5j * 1e7 * 0.4 / p.gamma_opt)
    assert em == 0
    ep, em = d.adiabatic_optical_coherences(0.0, 0.0, 0.2 + 0.1j, cpt_params)
    assert ep == pytest.approx(-0.5j / cpt_params.gamma_opt * cpt_params.omega_minus * (0.2 + 0.1j))
    with pytest.raises(ValueError):
        d.adiabatic_optical_coherences(0, 0, 0, LambdaParams(1, 1, 0.0, 0, 1))


def test_adiabatic_population_limits(cpt_params):
    p = cpt_params
    assert d.adiabatic_excited_population(0.5, 0.5, -0.5, p) == pytest.approx(0.0, abs=1e-18)
    q = p.with_rabi(1e7, 0.0)
    assert d.adiabatic_excited_population(0.3, 0.7, 0.1, q) == pytest.approx(
        1e14 * 0.3 / (2 * q.gamma_e * q.gamma_opt))


def test_adiabatic_spin_coherence_limits(cpt_params):
    assert d.adiabatic_spin_coherence(0.5, 0.5, cpt_params.with_rabi(0.0, 1e7)) == 0
    dark = LambdaParams(1e7, 1e7, 1e8, 0.0, G)
    assert d.adiabatic_spin_coherence(0.5, 0.5, dark) == pytest.approx(-0.5)
    a = d.adiabatic_spin_coherence(0.5, 0.5, cpt_params.scanned(cpt_params.omega_b + 3e5))
    b = d.adiabatic_spin_coherence(0.5, 0.5, cpt_params.scanned(cpt_params.omega_b - 3e5))
    assert a.imag == pytest.approx(-b.imag) and a.real == pytest.approx(b.real)
    with pytest.raises(ZeroDivisionError):
        d.adiabatic_spin_coherence(0.5, 0.5, LambdaParams(0.0, 0.0, 1.0, 0.0, 1.0))


def test_halfwidth_law(cpt_params):
    p = cpt_params
    assert d.analytic_cpt_halfwidth(p.with_rabi(0, 0)) == p.gamma_spin
    w1 = d.analytic_cpt_halfwidth(p) - p.gamma_spin
    w2 = d.analytic_cpt_halfwidth(p.with_rabi(p.omega_plus * np.sqrt(2), p.omega_minus * np.sqrt(2))) - p.gamma_spin
    assert w2 == pytest.approx(2 * w1, rel=1e-14)


def test_re_spin_coherence_is_lorentzian_like_exact(cpt_params):
    hw = d.analytic_cpt_halfwidth(cpt_params)
    for x in (0.0, 0.5 * hw, hw, 3 * hw):
        p = cpt_params.scanned(cpt_params.omega_b + x)
        exact = d.steady_state(p)
        n_plus = (exact[PLUS, PLUS] - exact[EXC, EXC]).real
        n_minus = (exact[MINUS, MINUS] - exact[EXC, EXC]).real
        approx = d.adiabatic_spin_coherence(n_plus, n_minus, p)
        assert abs(approx.real - exact[MINUS, PLUS].real) < 0.02 * 0.5


def test_self_consistent_matches_exact_in_regime(cpt_params):
    for x in (0.0, 2e5, 2e6):
        p = cpt_params.scanned(cpt_params.omega_b + x)
        a = d.self_consistent_adiabatic_steady_state(p)
        e = d.steady_state(p)
        np.testing.assert_allclose(np.diag(a).real, np.diag(e).real, rtol=0.02, atol=1e-12)
        ep_exact, em_exact = e[EXC, PLUS], e[EXC, MINUS]
        assert abs(a[EXC, PLUS] - ep_exact) <= 0.02 * abs(ep_exact) + 1e-12
        assert abs(a[EXC, MINUS] - em_exact) <= 0.02 * abs(em_exact) + 1e-12


def test_self_consistent_dark_state():
    p = LambdaParams(1e7, 1e7, 0.5 * G, 0.0, G, spin_flip_up=1e3, spin_flip_down=1e3)
    rho = d.self_consistent_adiabatic_steady_state(p)
    assert rho[EXC, EXC].real < 1e-10 and rho[MINUS, PLUS].real == pytest.approx(-0.5, abs=1e-6)


def test_out_of_regime_flag_raised(cpt_params):
    p = LambdaParams(1e7, 1e7, 1e8, 1e8, G)
    assert "gamma_spin > 0.1 min(gamma_opt, gamma_e)" in d.regime_flags(p)
    with pytest.warns(d.RegimeWarning):
        d.self_consistent_adiabatic_steady_state(p)
    assert d.regime_flags(cpt_params) == []


def test_closure_nonconvergence_reports_residual(cpt_params):
    with pytest.raises(d.ConvergenceError) as info:
        d.self_consistent_adiabatic_steady_state(cpt_params.with_rabi(1e8, 1e8), max_iter=2)
    assert info.value.residual > 0


def test_adiabatic_deviation_decreases_with_gamma_spin():
    g = 0.5 * G
    for w in (0.05, 0.3):
        devs = []
        for ratio in (1e-2, 1e-3, 1e-4):
            base = LambdaParams(w * g, w * g, g, ratio * g, G)
            hw = d.analytic_cpt_halfwidth(base)
            ex, ad = [], []
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", d.RegimeWarning)
                for x in np.linspace(-10 * hw, 10 * hw, 21):
                    p = base.scanned(x)
                    ex.append(d.steady_state(p)[EXC, EXC].real)
                    ad.append(d.self_consistent_adiabatic_steady_state(p)[EXC, EXC].real)
            ex, ad = np.array(ex), np.array(ad)
            devs.append(np.max(np.abs(ex - ad)) / (ex.max() - ex.min()))
        assert all(b <= a for a, b in zip(devs, devs[1:])), devs


positive = st.floats(1e5, 1e9)


@settings(max_examples=30, deadline=None)
@given(wp=positive, wm=positive, gs=st.floats(0, 1e7), dp=st.floats(-1e8, 1e8), raman=st.floats(-1e8, 1e8),
       b=st.floats(0.05, 0.95), ku=st.floats(0, 1e6), kd=st.floats(1e2, 1e6))
def test_random_steady_states_are_physical(wp, wm, gs, dp, raman, b, ku, kd):
    p = LambdaParams(wp, wm, 0.5 * G + gs, gs, G, delta_plus=dp, omega_b=raman, branch_plus=b,
                     spin_flip_up=ku, spin_flip_down=kd)
    rho = d.steady_state(p)
    d.check_density_matrix(rho, tol=1e-9)
    assert d.generator_residual(rho, p) < 1e-9
