"""End-to-end acceptance criteria.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts the criterion at its stated tolerance and time budget.
"""

import filecmp
import subprocess
import sys
import time
import warnings

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import record_acceptance
from sivcpt import cpt, dynamics, levels, phonons, pulses
from sivcpt.dynamics import EXC, MINUS, PLUS, LambdaParams

pytestmark = pytest.mark.acceptance

TWO_PI = 2 * np.pi
G = TWO_PI * 94e6


def check(number, title, passed, detail, elapsed, budget):
    ok = bool(passed) and elapsed < budget
    record_acceptance(number, title, ok, f"{detail}; {elapsed:.2f} s (budget {budget:g} s)")
    assert passed, detail
    assert elapsed < budget, f"took {elapsed:.2f} s, budget {budget} s"


def test_01_dark_state_exactness():
    t0 = time.perf_counter()
    p = LambdaParams(TWO_PI * 5e6, TWO_PI * 5e6, 0.5 * G, 0.0, G, omega_b=TWO_PI * 3e9,
                     two_photon_delta=TWO_PI * 3e9)
    rho = dynamics.steady_state(p)
    ree = rho[EXC, EXC].real
    coh_err = abs(rho[MINUS, PLUS] - (-0.5))
    elapsed = time.perf_counter() - t0
    check(1, "dark-state exactness", ree < 1e-10 and coh_err <= 1e-9,
          f"rho_ee = {ree:.2e}, |rho_-+ + 0.5| = {coh_err:.2e}", elapsed, 1.0)


def test_02_adiabatic_equivalence():
    t0 = time.perf_counter()
    g = 0.5 * G  # radiatively limited optical coherence, Gamma = 2 gamma
    worst = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", dynamics.RegimeWarning)
        for ratio in (1e-4, 1e-3):
            for w in (0.05, 0.1, 0.3):
                base = LambdaParams(w * g, w * g, g, ratio * g, G, branch_plus=0.5)
                hw = dynamics.analytic_cpt_halfwidth(base)
                grid = np.linspace(-10 * hw, 10 * hw, 41)
                exact = cpt.compute_cpt_spectrum(base, grid, mode="exact").y
                adiab = cpt.compute_cpt_spectrum(base, grid, mode="adiabatic").y
                contrast = exact.max() - exact.min()
                worst[(ratio, w)] = float(np.max(np.abs(adiab - exact)) / contrast)
    elapsed = time.perf_counter() - t0
    failing = {k: v for k, v in worst.items() if v >= 0.02}
    detail = "max deviation / contrast: " + ", ".join(
        f"(gs/g={r:g}, W/g={w:g}) {v:.2%}" for (r, w), v in sorted(worst.items()))
    check(2, "adiabatic equivalence", not failing, detail, elapsed, 10.0)


def test_03_power_broadening_law():
    t0 = time.perf_counter()
    g = 0.5 * G
    base = LambdaParams(0.0, 0.0, g, 1e-3 * g, G, omega_b=TWO_PI * 3e9)
    powers = np.array([0.5, 1.0, 1.5, 2.0, 3.0, 4.0])
    k = g * base.gamma_spin  # broadening k P / 4 gamma reaches gamma_s at P = 4
    res = cpt.power_sweep(base, powers, k)
    intercept_truth = base.gamma_spin / np.pi
    slope_truth = k / (4 * np.pi * g)
    e_int = abs(res.intrinsic_fwhm / intercept_truth - 1)
    e_slope = abs(res.slope / slope_truth - 1)
    lin = res.max_linearity_deviation()
    elapsed = time.perf_counter() - t0
    check(3, "power-broadening law", lin < 0.01 and e_int < 0.02 and e_slope < 0.02,
          f"linearity {lin:.3%}, intercept error {e_int:.2%}, slope error {e_slope:.2%}", elapsed, 10.0)


def test_04_intrinsic_linewidth_round_trip():
    t0 = time.perf_counter()
    gs = np.pi * 0.5e6  # 0.5 MHz intrinsic FWHM
    g = 1000 * gs
    base = LambdaParams(0.0, 0.0, g, gs, G, omega_b=TWO_PI * 3e9)
    powers = np.linspace(1.0, 5.0, 5)
    k = 0.9e6 * 4 * np.pi * g  # 0.9 MHz of FWHM per unit power
    spectra = cpt.sweep_spectra(base, powers, k)
    truth = 0.5e6
    est, err = [], []
    for r in range(200):
        res = cpt.analyze_sweep(powers, spectra, counts_per_unit=6e3, seed=r * powers.size)
        est.append(res.intrinsic_fwhm)
        err.append(res.intrinsic_fwhm_err)
    est, err = np.array(est), np.array(err)
    z = np.abs(est - truth) / err
    in1, in3 = float(np.mean(z <= 1)), float(np.mean(z <= 3))
    elapsed = time.perf_counter() - t0
    check(4, "intrinsic-linewidth round trip", in1 >= 0.68 and in3 >= 0.99,
          f"mean sigma {err.mean() / 1e6:.3f} MHz, within 1 sigma {in1:.1%}, within 3 sigma {in3:.1%}",
          elapsed, 30.0)


def test_05_bose_numbers():
    t0 = time.perf_counter()
    n3 = phonons.thermal_occupation(3e9, 1.0)
    n50 = phonons.thermal_occupation(50e9, 4.0)
    temps = np.geomspace(0.05, 300.0, 50)
    a = phonons.two_phonon_factor(50e9, temps, "absorption")
    e = phonons.two_phonon_factor(50e9, temps, "emission")
    ident = float(np.max(np.abs(a - e) / a))
    elapsed = time.perf_counter() - t0
    check(5, "Bose numbers", abs(n3 - 6.458) <= 0.001 and abs(n50 - 1.2166) <= 0.0005 and ident < 1e-12,
          f"n(3 GHz, 1 K) = {n3:.4f}, n(50 GHz, 4 K) = {n50:.5f}, identity error {ident:.1e}", elapsed, 1.0)


def test_06_relaxation_ratios():
    t0 = time.perf_counter()
    m = phonons.ThermalModel(rate1=1.0, rate2=1.0)
    r1 = phonons.single_phonon_rate(m, 4.0) / phonons.single_phonon_rate(m, 1.0)
    r2 = phonons.two_phonon_rate(m, 4.0) / phonons.two_phonon_rate(m, 1.0)
    elapsed = time.perf_counter() - t0
    check(6, "relaxation ratios", abs(r1 - 24.6) <= 0.2 and abs(r2 - 88.6) <= 0.5,
          f"single-phonon {r1:.2f}, two-phonon {r2:.2f}", elapsed, 1.0)


def test_07_dephasing_plateau():
    t0 = time.perf_counter()
    m = phonons.calibrated_dephasing_model(2.35e6, 4.0, 0.5e6)
    amp = m.dephasing_amplitude
    f1 = phonons.dephasing_fwhm(m, 1.0)
    f015 = phonons.dephasing_fwhm(m, 0.15)
    spread = float(np.ptp(phonons.dephasing_fwhm(m, np.linspace(0.15, 1.0, 50))))
    ok = (abs(amp - 1.521e6) <= 0.5e3 and abs(f1 - 0.652e6) <= 0.5e3 and abs(f015 - 0.500e6) <= 0.5e3
          and spread < 0.16e6)
    elapsed = time.perf_counter() - t0
    check(7, "dephasing plateau", ok,
          f"A = {amp / 1e6:.4f} MHz, FWHM(1 K) = {f1 / 1e6:.4f} MHz, FWHM(0.15 K) = {f015 / 1e6:.4f} MHz, "
          f"spread {spread / 1e6:.3f} MHz", elapsed, 1.0)


def test_08_t1_pipeline_round_trip():
    t0 = time.perf_counter()
    t1 = 0.3e-6
    seq = pulses.PulseSequence(exchange_rate=1 / t1, temperature=4.0)
    taus = t1 * np.geomspace(0.1, 10.0, 12)
    traces = pulses.recovery_traces(seq, taus)
    noiseless = pulses.fit_recovery(pulses.curve_from_traces(taus, traces))["T1"]
    e0 = abs(noiseless / t1 - 1)
    fits = np.array([
        pulses.fit_recovery(pulses.curve_from_traces(taus, traces, counts_at_peak=1e4, seed=s * taus.size))["T1"]
        for s in range(100)])
    frac = float(np.mean(np.abs(fits / t1 - 1) < 0.10))
    elapsed = time.perf_counter() - t0
    check(8, "T1 pipeline round trip", e0 < 0.01 and frac == 1.0,
          f"noiseless error {e0:.3%}, noisy seeds within 10%: {frac:.0%} (spread {np.std(fits) / t1:.2%})",
          elapsed, 30.0)


def test_09_evolution_correctness():
    t0 = time.perf_counter()
    p = LambdaParams(3.1e8, 1.7e8, 4.0e8, 2.0e6, G, delta_plus=3e7, omega_b=TWO_PI * 3e9,
                     two_photon_delta=TWO_PI * 3e9 - 4e7, branch_plus=0.35, spin_flip_up=1e5, spin_flip_down=1.3e5)
    rng = np.random.default_rng(2024)
    t_final = 1e-7
    prop = expm(dynamics.real_generator(p) * t_final)
    worst_end = worst_tr = worst_herm = 0.0
    lowest = np.inf
    for _ in range(100):
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        rho0 = a @ a.conj().T
        rho0 /= np.trace(rho0).real
        traj = dynamics.evolve(rho0, p, t_final, t_eval=np.linspace(0, t_final, 51))
        oracle = dynamics.from_coords(prop @ dynamics.to_coords(rho0))
        worst_end = max(worst_end, float(np.max(np.abs(traj.states[-1] - oracle))))
        worst_tr = max(worst_tr, float(np.max(np.abs(np.trace(traj.states, axis1=1, axis2=2) - 1))))
        worst_herm = max(worst_herm, float(np.max(np.abs(traj.states - np.conj(np.swapaxes(traj.states, 1, 2))))))
        lowest = min(lowest, float(np.min(np.linalg.eigvalsh(traj.states))))
    elapsed = time.perf_counter() - t0
    check(9, "evolution correctness",
          worst_end < 1e-8 and worst_tr < 1e-9 and worst_herm < 1e-12 and lowest >= -1e-9,
          f"endpoint error {worst_end:.1e}, trace error {worst_tr:.1e}, hermiticity {worst_herm:.1e}, "
          f"lowest eigenvalue {lowest:.1e}", elapsed, 10.0)


def test_10_model_discrimination():
    t0 = time.perf_counter()
    m = phonons.calibrated_relaxation_model(0.3e-6, 4.0, which="two")
    temps = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0])
    comparison = phonons.compare_relaxation_models(temps, phonons.spin_lifetime(m, temps))
    ratio = comparison.residual_ratio
    elapsed = time.perf_counter() - t0
    check(10, "model discrimination", ratio >= 10 and comparison.preferred == "two",
          f"residual-norm ratio single/two = {ratio:.3g}", elapsed, 5.0)


def test_11_level_structure_anchors():
    t0 = time.perf_counter()
    zero = levels.LevelParams()
    eg = levels.eigensystem(zero, "ground").energies / TWO_PI
    ee = levels.eigensystem(zero, "excited").energies / TWO_PI
    err_g = abs((eg[2] - eg[0]) / 50e9 - 1)
    err_e = abs((ee[2] - ee[0]) / 260e9 - 1)
    table = levels.transition_table(levels.eigensystem(zero, "ground"), levels.eigensystem(zero, "excited"))
    flips = [r.strength for r in table if not r.spin_conserving]
    split = levels.ground_splitting(levels.operating_point_params()) / TWO_PI
    ok = err_g < 1e-12 and err_e < 1e-12 and all(s == 0.0 for s in flips) and abs(split / 3e9 - 1) < 0.05
    elapsed = time.perf_counter() - t0
    check(11, "level-structure anchors", ok,
          f"doublet errors {err_g:.1e} / {err_e:.1e}, max spin-flip strength {max(flips):g}, "
          f"lower-doublet splitting {split / 1e9:.4f} GHz", elapsed, 1.0)


def test_12_reproduce_paper_determinism(tmp_path):
    runs = []
    times = []
    for name in ("a", "b"):
        out = tmp_path / name
        t0 = time.perf_counter()
        res = subprocess.run([sys.executable, "-m", "sivcpt", "reproduce-paper", "--seed", "7", "--out", str(out)],
                             capture_output=True, text=True)
        times.append(time.perf_counter() - t0)
        assert res.returncode == 0, res.stderr
        runs.append(out)
    files_a = sorted(p.relative_to(runs[0]) for p in runs[0].rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(runs[1]) for p in runs[1].rglob("*") if p.is_file())
    same_set = files_a == files_b and len(files_a) > 0
    _, mismatch, errors = filecmp.cmpfiles(runs[0], runs[1], [str(f) for f in files_a], shallow=False)
    identical = same_set and not mismatch and not errors
    check(12, "reproduce-paper determinism", identical,
          f"{len(files_a)} files, mismatched: {mismatch or 'none'}", max(times), 60.0)
