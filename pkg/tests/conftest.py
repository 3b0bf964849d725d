import numpy as np
import pytest

from sivcpt.dynamics import LambdaParams

TWO_PI = 2 * np.pi
GAMMA_E = TWO_PI * 94e6

# (number, title, passed, detail) for every acceptance criterion that ran
ACCEPTANCE_RESULTS = []


def record_acceptance(number, title, passed, detail):
    ACCEPTANCE_RESULTS.append((number, title, bool(passed), detail))
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} -- {detail}"
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            f"[{'PASS' if passed else 'FAIL'}] criterion {number:2d}: {title} -- {detail}")


@pytest.fixture
def cpt_params():
    """In-regime CPT point: gamma_s = 1e-3 gamma, Omega = 0.05 gamma, on two-photon resonance."""
    g = 0.5 * GAMMA_E
    return LambdaParams(omega_plus=0.05 * g, omega_minus=0.05 * g, gamma_opt=g, gamma_spin=1e-3 * g,
                        gamma_e=GAMMA_E, omega_b=TWO_PI * 3e9, two_photon_delta=TWO_PI * 3e9)


@pytest.fixture
def generic_params():
    """Off-resonant, asymmetric, with spin exchange: a unique steady state with all couplings active."""
    return LambdaParams(omega_plus=3.1e8, omega_minus=1.7e8, gamma_opt=4.0e8, gamma_spin=2.0e6,
                        gamma_e=GAMMA_E, delta_plus=3.0e7, omega_b=TWO_PI * 3e9,
                        two_photon_delta=TWO_PI * 3e9 - 4.0e7, branch_plus=0.35,
                        spin_flip_up=1.0e5, spin_flip_down=1.3e5)
