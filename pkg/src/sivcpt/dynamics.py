"""Rotating-frame density-matrix model of a driven Lambda system.

Basis order is (|+>, |e>, |->): index 0 is the lower ground state, 1 the
excited state, 2 the upper ground state (omega_b above |+>).  Matrix
elements follow rho[i, j] = <C_i C_j*>, so ``rho[1, 0]`` is rho_{e+},
``rho[1, 2]`` is rho_{e-} and ``rho[2, 0]`` is rho_{-+}.

All rates and frequencies are angular (rad/s); population decay rates are
plain s^-1.

Real coordinates used by the integrator and the steady-state solver::

    (rho_++, rho_ee, rho_--, Re rho_e+, Im rho_e+, Re rho_e-, Im rho_e-,
     Re rho_-+, Im rho_-+)
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import expm

from . import kernels

PLUS, EXC, MINUS = 0, 1, 2


class IntegrationError(RuntimeError):
    def __init__(self, message, t_fail):
        super().__init__(f"{message} at t = {t_fail:.6g} s")
        self.t_fail = t_fail


class InvariantViolation(RuntimeError):
    """A propagated state left the set of physical density matrices."""


class NonUniqueSteadyState(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3g})")
        self.residual = residual


class RegimeWarning(UserWarning):
    """Parameters lie outside the adiabatic-elimination regime."""


@dataclass(frozen=True)
class LambdaParams:
    """Three-level model parameters.

    ``delta_minus`` may be omitted; it is then fixed by the rotating-frame
    geometry ``delta_plus - delta_minus = omega_b - two_photon_delta``.
    ``spin_flip_up`` moves population |+> -> |-> (up in energy),
    ``spin_flip_down`` moves |-> -> |+>.
    """

    omega_plus: float
    omega_minus: float
    gamma_opt: float
    gamma_spin: float
    gamma_e: float
    delta_plus: float = 0.0
    delta_minus: float | None = None
    two_photon_delta: float = 0.0
    omega_b: float = 0.0
    branch_plus: float = 0.5
    spin_flip_up: float = 0.0
    spin_flip_down: float = 0.0

    def __post_init__(self):
        for name in ("gamma_opt", "gamma_spin", "gamma_e", "spin_flip_up", "spin_flip_down"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.branch_plus <= 1.0:
            raise ValueError("branch_plus must lie in [0, 1]")
        geometric = self.delta_plus - (self.omega_b - self.two_photon_delta)
        if self.delta_minus is None:
            object.__setattr__(self, "delta_minus", geometric)
        else:
            scale = max(abs(self.delta_plus), abs(self.delta_minus), abs(self.omega_b),
                        abs(self.two_photon_delta), 1.0)
            if abs(self.delta_minus - geometric) > 1e-9 * scale:
                raise ValueError(
                    "inconsistent detunings: need delta_plus - delta_minus = omega_b - two_photon_delta")

    @property
    def raman_detuning(self):
        """omega_b - delta, the ground-state frequency in the rotating frame."""
        return self.omega_b - self.two_photon_delta

    def scanned(self, two_photon_delta):
        """Copy with a new two-photon detuning, holding delta_plus fixed."""
        return replace(self, two_photon_delta=two_photon_delta, delta_minus=None)

    def with_rabi(self, omega_plus, omega_minus):
        return replace(self, omega_plus=omega_plus, omega_minus=omega_minus)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    params: LambdaParams
    n_steps: int = 0

    def __post_init__(self):
        if self.times.shape[0] != self.states.shape[0]:
            raise ValueError("times and states differ in length")

    def population(self, index):
        return self.states[:, index, index].real


# state helpers -----------------------------------------------------------------

def pure_state(amplitudes):
    v = np.asarray(amplitudes, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def dark_state(params):
    """|D> = (Omega_- |+> - Omega_+ |->) / norm, decoupled from both fields."""
    return pure_state([params.omega_minus, 0.0, -params.omega_plus])


def ground_mixture(p_plus):
    rho = np.zeros((3, 3), dtype=complex)
    rho[PLUS, PLUS] = p_plus
    rho[MINUS, MINUS] = 1.0 - p_plus
    return rho


def check_density_matrix(rho, tol=1e-9, herm_tol=1e-10):
    """Raise InvariantViolation unless rho is Hermitian, unit-trace and positive."""
    rho = np.asarray(rho)
    if rho.shape != (3, 3):
        raise InvariantViolation(f"expected a 3x3 matrix, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise InvariantViolation("density matrix is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise InvariantViolation(f"trace {tr!r} differs from 1")
    lo = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0]
    if lo < -tol:
        raise InvariantViolation(f"negative eigenvalue {lo:.3g}")
    return rho


# generators --------------------------------------------------------------------

def hamiltonian(params):
    """Rotating-frame Hamiltonian; diagonal (0, delta_plus, omega_b - delta)."""
    h = np.zeros((3, 3), dtype=complex)
    h[EXC, EXC] = params.delta_plus
    h[MINUS, MINUS] = params.raman_detuning
    h[EXC, PLUS] = h[PLUS, EXC] = 0.5 * params.omega_plus
    h[EXC, MINUS] = h[MINUS, EXC] = 0.5 * params.omega_minus
    return h


def liouvillian(params):
    """Complex 9x9 generator acting on row-major vec(rho)."""
    h = hamiltonian(params)
    eye = np.eye(3)
    lv = -1j * (np.kron(h, eye) - np.kron(eye, h.T))

    def idx(i, j):
        return 3 * i + j

    ku, kd = params.spin_flip_up, params.spin_flip_down
    # spin exchange also dephases the ground coherence (Lindblad-consistent)
    g_spin = params.gamma_spin + 0.5 * (ku + kd)
    for (i, j), rate in {
        (EXC, PLUS): params.gamma_opt, (PLUS, EXC): params.gamma_opt,
        (EXC, MINUS): params.gamma_opt, (MINUS, EXC): params.gamma_opt,
        (MINUS, PLUS): g_spin, (PLUS, MINUS): g_spin,
    }.items():
        lv[idx(i, j), idx(i, j)] -= rate

    gam, b = params.gamma_e, params.branch_plus
    ee, pp, mm = idx(EXC, EXC), idx(PLUS, PLUS), idx(MINUS, MINUS)
    lv[ee, ee] -= gam
    lv[pp, ee] += b * gam
    lv[mm, ee] += (1.0 - b) * gam
    lv[pp, pp] -= ku
    lv[mm, pp] += ku
    lv[mm, mm] -= kd
    lv[pp, mm] += kd
    return lv


def rhs(rho, params):
    """Time derivative of rho (complex-linear in rho)."""
    rho = np.asarray(rho, dtype=complex)
    return (liouvillian(params) @ rho.reshape(9)).reshape(3, 3)


def _coord_basis():
    # column k is vec(rho) for the k-th real coordinate set to 1
    basis = np.zeros((9, 9), dtype=complex)
    for k, i in enumerate((PLUS, EXC, MINUS)):
        basis[4 * i, k] = 1.0
    for n, (i, j) in enumerate(((EXC, PLUS), (EXC, MINUS), (MINUS, PLUS))):
        re, im = 3 + 2 * n, 4 + 2 * n
        basis[3 * i + j, re] = basis[3 * j + i, re] = 1.0
        basis[3 * i + j, im] = 1j
        basis[3 * j + i, im] = -1j
    return basis


_VEC_OF_COORD = _coord_basis()


def to_coords(rho):
    rho = np.asarray(rho)
    return np.array([
        rho[0, 0].real, rho[1, 1].real, rho[2, 2].real,
        rho[1, 0].real, rho[1, 0].imag, rho[1, 2].real, rho[1, 2].imag,
        rho[2, 0].real, rho[2, 0].imag,
    ])


def from_coords(x):
    """Density matrices from real coordinates; accepts shape (9,) or (n, 9)."""
    x = np.asarray(x, dtype=float)
    v = x @ _VEC_OF_COORD.T
    return v.reshape(x.shape[:-1] + (3, 3))


def real_generator(params):
    """Real 9x9 matrix M with d/dt coords = M @ coords."""
    q = liouvillian(params) @ _VEC_OF_COORD
    return np.vstack([
        q[0].real, q[4].real, q[8].real,
        q[3].real, q[3].imag, q[5].real, q[5].imag, q[6].real, q[6].imag,
    ])


# time evolution ----------------------------------------------------------------

def _check_trajectory(states, tol):
    tr = np.trace(states, axis1=1, axis2=2).real
    bad = np.abs(tr - 1.0) > tol
    if np.any(bad):
        k = int(np.argmax(bad))
        raise InvariantViolation(f"trace drifted to {tr[k]!r} at sample {k}")
    herm = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))
    lo = np.linalg.eigvalsh(herm)[:, 0]
    if np.any(lo < -tol):
        k = int(np.argmin(lo))
        raise InvariantViolation(f"negative eigenvalue {lo[k]:.3g} at sample {k}")


def evolve(initial, params, t_final, rel_tol=1e-8, abs_tol=1e-10, t_eval=None,
           max_steps=10_000_000, check_tol=1e-7):
    """Integrate the master equation with an adaptive Dormand-Prince 5(4) pair.

    States are reported at ``t_eval`` (default: 201 uniform samples over
    [0, t_final]).  Emitted states are checked, never renormalized:
    trace or positivity errors above ``check_tol`` raise
    :class:`InvariantViolation`.
    """
    if t_final <= 0:
        raise ValueError("t_final must be > 0")
    if rel_tol <= 0 or abs_tol <= 0:
        raise ValueError("tolerances must be > 0")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_final, 201)
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) <= 0) or t_eval[0] < 0 or t_eval[-1] > t_final * (1 + 1e-12):
        raise ValueError("t_eval must be strictly ascending within [0, t_final]")
    rho0 = np.asarray(initial, dtype=complex)
    m = real_generator(params)
    ys, status, t_fail, n_steps = kernels.integrate_linear(
        m, to_coords(rho0), t_eval, float(rel_tol), float(abs_tol), int(max_steps))
    if status == kernels.STATUS_STEP_UNDERFLOW:
        raise IntegrationError("step size underflow", t_fail)
    if status == kernels.STATUS_MAX_STEPS:
        raise IntegrationError(f"step budget of {max_steps} exhausted", t_fail)
    states = from_coords(ys)
    _check_trajectory(states, check_tol)
    return Trajectory(times=t_eval, states=states, params=params, n_steps=int(n_steps))


def propagate(initial, params, t):
    """Exact propagation over a constant-generator segment (matrix exponential)."""
    x = expm(real_generator(params) * t) @ to_coords(np.asarray(initial, dtype=complex))
    return from_coords(x)


# steady state ------------------------------------------------------------------

def _uniqueness_failure(params):
    reasons = []
    if params.gamma_e == 0:
        reasons.append("gamma_e = 0")
    elif params.branch_plus in (0.0, 1.0):
        reasons.append(f"branch_plus = {params.branch_plus} feeds only one ground state")
    if params.spin_flip_up == 0 and params.spin_flip_down == 0:
        reasons.append("no ground-state spin exchange")
    if params.omega_plus == 0 or params.omega_minus == 0:
        reasons.append("a ground state is not optically driven")
    return "; ".join(reasons) or "null space of the generator is degenerate"


def steady_state(params, null_tol=1e-11):
    """Exact stationary density matrix from the real 9x9 generator.

    The first population row is replaced by the trace condition and the
    system is solved by pivoted Gaussian elimination.
    """
    m = real_generator(params)
    scale = np.max(np.abs(m))
    if scale == 0:
        raise NonUniqueSteadyState("generator vanishes: " + _uniqueness_failure(params))
    ms = m / scale
    sv = np.linalg.svd(ms, compute_uv=False)
    nullity = int(np.sum(sv <= null_tol * sv[0]))
    if nullity > 1:
        raise NonUniqueSteadyState(
            f"non-unique steady state (null space dimension {nullity}): " + _uniqueness_failure(params))
    a = ms.copy()
    a[0] = 0.0
    a[0, :3] = 1.0
    b = np.zeros(9)
    b[0] = 1.0
    x, pivot = kernels.solve_pivoted(a, b)
    if pivot == 0.0 or not np.all(np.isfinite(x)):
        raise NonUniqueSteadyState("trace-augmented generator is singular: " + _uniqueness_failure(params))
    return from_coords(x)


def generator_residual(rho, params):
    """Norm of the real generator applied to rho, in units of its largest rate."""
    m = real_generator(params)
    return float(np.linalg.norm(m @ to_coords(rho)) / np.max(np.abs(m)))


# adiabatic elimination -----------------------------------------------------------

def regime_flags(params):
    """Reasons the adiabatic formulas may be inaccurate; empty when in regime."""
    flags = []
    g = params.gamma_opt
    if abs(params.delta_plus) > 0.1 * g:
        flags.append("|delta_plus| > 0.1 gamma_opt")
    if abs(params.delta_minus) > 0.1 * g:
        flags.append("|delta_minus| > 0.1 gamma_opt")
    if params.gamma_spin > 0.1 * min(g, params.gamma_e):
        flags.append("gamma_spin > 0.1 min(gamma_opt, gamma_e)")
    return flags


def _warn_regime(params):
    flags = regime_flags(params)
    if flags:
        warnings.warn("outside adiabatic regime: " + ", ".join(flags), RegimeWarning, stacklevel=3)
    return flags


def adiabatic_optical_coherences(n_plus, n_minus, rho_mp, params):
    """Optical coherences slaved to the populations and rho_{-+} (detunings dropped).

    rho_e+ = -(i / 2 gamma) (Omega_+ N_+ + Omega_- rho_-+)
    rho_e- = -(i / 2 gamma) (Omega_- N_- + Omega_+ rho_+-)
    """
    g = params.gamma_opt
    if g == 0:
        raise ValueError("gamma_opt must be > 0")
    _warn_regime(params)
    wp, wm = params.omega_plus, params.omega_minus
    rho_ep = -0.5j / g * (wp * n_plus + wm * rho_mp)
    rho_em = -0.5j / g * (wm * n_minus + wp * np.conj(rho_mp))
    return rho_ep, rho_em


def adiabatic_excited_population(n_plus, n_minus, rho_mp, params):
    g, gam = params.gamma_opt, params.gamma_e
    if g * gam == 0:
        raise ValueError("gamma_opt and gamma_e must be > 0")
    wp, wm = params.omega_plus, params.omega_minus
    return float((wp ** 2 * n_plus + wm ** 2 * n_minus + 2 * wp * wm * np.real(rho_mp)) / (2 * gam * g))


def adiabatic_spin_coherence(n_plus, n_minus, params):
    """Steady-state ground coherence with optical power broadening."""
    g = params.gamma_opt
    wp, wm = params.omega_plus, params.omega_minus
    den = 1j * params.raman_detuning + params.gamma_spin + (wp ** 2 + wm ** 2) / (4 * g)
    if den == 0:
        raise ZeroDivisionError("spin-coherence denominator vanishes")
    return -(wp * wm / (4 * g)) * (n_plus + n_minus) / den


def analytic_cpt_halfwidth(params):
    """HWHM (rad/s) of the CPT dip in the two-photon detuning."""
    if params.gamma_opt <= 0:
        raise ValueError("gamma_opt must be > 0")
    return params.gamma_spin + (params.omega_plus ** 2 + params.omega_minus ** 2) / (4 * params.gamma_opt)


def _rate_balance(rho_mp_re, params):
    """Populations (p+, pe, p-) solving the adiabatic rate balance at fixed Re rho_-+."""
    g, gam, b = params.gamma_opt, params.gamma_e, params.branch_plus
    wp, wm = params.omega_plus, params.omega_minus
    ku, kd = params.spin_flip_up, params.spin_flip_down
    # unknowns (p+, pe, p-); N_+ = p+ - pe, N_- = p- - pe
    a = np.zeros((3, 3))
    rhs_ = np.zeros(3)
    # 2 gamma Gamma pe = wp^2 N+ + wm^2 N- + 2 wp wm r
    a[0] = [wp ** 2, -(wp ** 2 + wm ** 2) - 2 * gam * g, wm ** 2]
    rhs_[0] = -2 * wp * wm * rho_mp_re
    # d p+/dt = b Gamma pe - (wp / 2 gamma)(wp N+ + wm r) - ku p+ + kd p- = 0
    a[1] = [-wp ** 2 / (2 * g) - ku, b * gam + wp ** 2 / (2 * g), kd]
    rhs_[1] = wp * wm * rho_mp_re / (2 * g)
    a[2] = [1.0, 1.0, 1.0]
    rhs_[2] = 1.0
    return np.linalg.solve(a, rhs_)


def self_consistent_adiabatic_steady_state(params, damping=0.5, tol=1e-10, max_iter=1000):
    """Close the adiabatic equations by a damped fixed-point iteration on rho_-+."""
    _warn_regime(params)
    rho_mp = 0.0 + 0.0j
    residual = np.inf
    for _ in range(max_iter):
        p_plus, pe, p_minus = _rate_balance(rho_mp.real, params)
        target = adiabatic_spin_coherence(p_plus - pe, p_minus - pe, params)
        residual = abs(target - rho_mp)
        rho_mp = (1.0 - damping) * rho_mp + damping * target
        if residual < tol:
            break
    else:
        raise ConvergenceError("adiabatic closure did not converge", residual)
    p_plus, pe, p_minus = _rate_balance(rho_mp.real, params)
    n_plus, n_minus = p_plus - pe, p_minus - pe
    rho_mp = adiabatic_spin_coherence(n_plus, n_minus, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeWarning)
        rho_ep, rho_em = adiabatic_optical_coherences(n_plus, n_minus, rho_mp, params)
    rho = np.zeros((3, 3), dtype=complex)
    rho[PLUS, PLUS], rho[EXC, EXC], rho[MINUS, MINUS] = p_plus, pe, p_minus
    rho[EXC, PLUS], rho[EXC, MINUS], rho[MINUS, PLUS] = rho_ep, rho_em, rho_mp
    rho[PLUS, EXC], rho[MINUS, EXC], rho[PLUS, MINUS] = np.conj(rho_ep), np.conj(rho_em), np.conj(rho_mp)
    return rho
