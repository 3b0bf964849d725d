"""Two-pulse optical-pumping measurement of the ground-spin lifetime.

Pulse 1 drives the spin-conserving transition out of |+> (Omega_- = 0);
decay through the weak spin-flip channel (fraction ``pump_branch`` of
Gamma) pumps the population into |->.  During the dark interval only the
spin exchange acts, returning the populations towards equilibrium.  Pulse 2
repeats pulse 1, and its leading fluorescence peak relative to that of
pulse 1 measures how much |+> population has come back.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import dynamics, fitting, phonons
from .dynamics import LambdaParams
from .fitting import FitError, FitResult
from .signals import FluorescenceTrace

TWO_PI = 2 * np.pi
GAMMA_E = TWO_PI * 94e6  # ~1.7 ns optical lifetime


class NoTransient(ValueError):
    """The pulse shows no leading-edge peak above its pumped level."""


def default_drive(omega_b=TWO_PI * 3e9):
    """Single-beam resonant drive, Omega = Gamma, radiatively limited optical coherence."""
    return LambdaParams(omega_plus=GAMMA_E, omega_minus=0.0, gamma_opt=0.5 * GAMMA_E,
                        gamma_spin=0.0, gamma_e=GAMMA_E, omega_b=omega_b)


@dataclass(frozen=True)
class PulseSequence:
    """Square pulse - dark interval - square pulse.

    ``exchange_rate`` is 1/T1 (1/s) of the ground spin, split into up and
    down rates by detailed balance at ``drive.omega_b`` and ``temperature``.
    ``sample_step`` is the fluorescence time bin.
    """

    drive: LambdaParams = field(default_factory=default_drive)
    pulse_duration: float = 500e-9
    wait_tau: float = 1e-6
    pump_branch: float = 0.1
    exchange_rate: float = 0.0
    temperature: float = 4.0
    sample_step: float = 0.5e-9
    exchange_during_pulses: bool = True

    def __post_init__(self):
        if self.pulse_duration <= 0 or self.sample_step <= 0:
            raise ValueError("pulse_duration and sample_step must be > 0")
        if self.wait_tau < 0:
            raise ValueError("wait_tau must be >= 0")
        if not 0.0 < self.pump_branch < 1.0:
            raise ValueError("pump_branch must lie in (0, 1)")
        if self.exchange_rate < 0:
            raise ValueError("exchange_rate must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.drive.omega_minus != 0:
            raise ValueError("the pulse drive is single-beam: omega_minus must be 0")
        if self.sample_step > self.pulse_duration:
            raise ValueError("sample_step exceeds the pulse duration")

    @classmethod
    def from_thermal(cls, model: phonons.ThermalModel, temperature, **kw):
        """Exchange rate from the phonon relaxation laws at ``temperature``."""
        rate = float(phonons.combined_relaxation_rate(model, temperature))
        return cls(exchange_rate=rate, temperature=temperature, **kw)

    @property
    def nu_b(self):
        return self.drive.omega_b / TWO_PI

    def exchange(self):
        """(up, down) spin-exchange rates."""
        return phonons.exchange_rates(self.exchange_rate, self.nu_b, self.temperature)

    def pulse_params(self):
        up, down = self.exchange() if self.exchange_during_pulses else (0.0, 0.0)
        return replace(self.drive, branch_plus=1.0 - self.pump_branch, spin_flip_up=up, spin_flip_down=down)

    def dark_params(self):
        up, down = self.exchange()
        return replace(self.drive, omega_plus=0.0, omega_minus=0.0,
                       branch_plus=1.0 - self.pump_branch, spin_flip_up=up, spin_flip_down=down)

    def thermal_state(self):
        p_plus, _ = phonons.thermal_populations(self.nu_b, self.temperature)
        return dynamics.ground_mixture(p_plus)

    def pulse_times(self):
        n = int(round(self.pulse_duration / self.sample_step))
        return np.arange(n) * self.sample_step


def _pulse(rho0, seq, t):
    traj = dynamics.evolve(rho0, seq.pulse_params(), seq.pulse_duration, t_eval=t)
    final = dynamics.propagate(traj.states[-1], seq.pulse_params(), seq.pulse_duration - t[-1])
    return traj.population(dynamics.EXC), final


def simulate_noiseless(seq: PulseSequence) -> FluorescenceTrace:
    """Gamma * rho_ee(t) over both pulses; times are absolute (s)."""
    t = seq.pulse_times()
    pe1, after1 = _pulse(seq.thermal_state(), seq, t)
    before2 = dynamics.propagate(after1, seq.dark_params(), seq.wait_tau) if seq.wait_tau > 0 else after1
    pe2, _ = _pulse(before2, seq, t)
    g = seq.drive.gamma_e
    start2 = seq.pulse_duration + seq.wait_tau
    return FluorescenceTrace(
        times=np.concatenate([t, start2 + t]),
        signal=g * np.concatenate([pe1, pe2]),
        window=np.concatenate([np.zeros(t.size, dtype=int), np.ones(t.size, dtype=int)]),
        pulse_duration=seq.pulse_duration,
        meta={"wait_tau": seq.wait_tau, "pulse_starts": (0.0, start2)},
    )


def add_trace_noise(trace: FluorescenceTrace, counts_scale: float, seed) -> FluorescenceTrace:
    """Poisson counts with mean counts_scale * signal per time bin."""
    if counts_scale <= 0:
        raise ValueError("counts_scale must be > 0")
    rng = np.random.default_rng(seed)
    mean = counts_scale * np.clip(trace.signal, 0.0, None)
    return replace(trace, signal=rng.poisson(mean).astype(float), counts=True)


def counts_scale_for_peak(trace: FluorescenceTrace, counts_at_peak: float) -> float:
    """Scale putting ``counts_at_peak`` mean counts in the brightest bin of pulse 1."""
    _, s = trace.pulse(0)
    return counts_at_peak / float(np.max(s))


def simulate_readout(seq: PulseSequence, counts_at_peak: Optional[float] = None, seed=0) -> FluorescenceTrace:
    trace = simulate_noiseless(seq)
    if counts_at_peak is None:
        return trace
    return add_trace_noise(trace, counts_scale_for_peak(trace, counts_at_peak), seed)


@dataclass(frozen=True)
class PeakRatio:
    ratio: float
    sigma: float
    peaks: tuple


def extract_peak_ratio(trace: FluorescenceTrace, window_fraction=0.2) -> PeakRatio:
    """Second-pulse over first-pulse maximum within each leading-edge window."""
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError("window_fraction must lie in (0, 1]")
    if trace.windows() != [0, 1]:
        raise ValueError(f"expected exactly two pulse windows, found {trace.windows()}")
    peaks, tails = [], []
    for w in (0, 1):
        t, s = trace.pulse(w)
        lead = s[(t - t[0]) < window_fraction * trace.pulse_duration]
        if lead.size == 0:
            raise ValueError(f"leading-edge window of pulse {w} is empty")
        peaks.append(float(np.max(lead)))
        tails.append(float(np.mean(s[-max(1, s.size // 10):])))
    p1, p2 = peaks
    threshold = 3.0 * np.sqrt(max(p1, 1.0)) if trace.counts else 1e-3 * p1
    if p1 <= 0 or p1 - tails[0] <= threshold:
        raise NoTransient("no leading-edge transient in the first pulse")
    ratio = p2 / p1
    if trace.counts:
        sigma = ratio * np.sqrt(1.0 / p1 + 1.0 / max(p2, 1.0))
    else:
        sigma = 0.0
    return PeakRatio(ratio=ratio, sigma=float(sigma), peaks=(p1, p2))


@dataclass(frozen=True)
class RecoveryCurve:
    tau: np.ndarray
    ratio: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if not (np.shape(self.tau) == np.shape(self.ratio) == np.shape(self.sigma)):
            raise ValueError("tau, ratio and sigma must have equal length")

    def rows(self):
        return np.column_stack([self.tau, self.ratio, self.sigma])


def recovery_traces(seq: PulseSequence, tau_grid):
    """Noiseless traces, one per waiting time."""
    taus = np.asarray(tau_grid, dtype=float)
    if taus.ndim != 1 or np.any(taus < 0) or np.any(np.diff(taus) <= 0):
        raise ValueError("tau grid must be ascending and nonnegative")
    return [simulate_noiseless(replace(seq, wait_tau=float(tau))) for tau in taus]


def curve_from_traces(taus, traces, counts_at_peak=None, seed=0, window_fraction=0.2) -> RecoveryCurve:
    """Peak ratios per trace; point i is noised with seed ``seed + i``."""
    ratios, sigmas = [], []
    for i, trace in enumerate(traces):
        if counts_at_peak is not None:
            trace = add_trace_noise(trace, counts_scale_for_peak(trace, counts_at_peak), seed + i)
        pr = extract_peak_ratio(trace, window_fraction)
        ratios.append(pr.ratio)
        sigmas.append(pr.sigma)
    return RecoveryCurve(np.asarray(taus, dtype=float), np.array(ratios), np.array(sigmas))


def recovery_curve(seq: PulseSequence, tau_grid, counts_at_peak=None, seed=0, window_fraction=0.2) -> RecoveryCurve:
    traces = recovery_traces(seq, tau_grid)
    return curve_from_traces(tau_grid, traces, counts_at_peak, seed, window_fraction)


def _recovery_guess(tau, ratio, free_asymptote):
    a0 = float(np.max(ratio)) if free_asymptote else 1.0
    r0 = float(ratio[0])
    target = a0 - (a0 - r0) / np.e
    k = int(np.argmax(ratio >= target)) if np.any(ratio >= target) else tau.size - 1
    t1 = float(tau[k]) if tau[k] > 0 else float(tau[tau > 0][0])
    return r0, t1, a0


def fit_recovery(curve: RecoveryCurve, free_asymptote=False) -> FitResult:
    """Fit R(tau) = A - (A - R0) exp(-tau / T1), with A = 1 unless freed."""
    tau, ratio, sigma = curve.tau, curve.ratio, curve.sigma
    if tau.size < 4:
        raise ValueError("need at least 4 waiting times")
    y_err = sigma if np.all(sigma > 0) else None
    r0, t1, a0 = _recovery_guess(tau, ratio, free_asymptote)
    if free_asymptote:
        problem = fitting.FitProblem(
            model=fitting.exp_recovery, jac=fitting.exp_recovery_jac, p0=[r0, t1, a0], x=tau, y=ratio,
            y_err=y_err, names=("R0", "T1", "asymptote"), bounds=[(None, None), (0.0, None), (None, None)])
    else:
        problem = fitting.FitProblem(
            model=lambda x, p: fitting.exp_recovery(x, (p[0], p[1], 1.0)),
            jac=lambda x, p: fitting.exp_recovery_jac(x, (p[0], p[1], 1.0))[:, :2],
            p0=[r0, t1], x=tau, y=ratio, y_err=y_err, names=("R0", "T1"),
            bounds=[(None, None), (0.0, None)])
    res = fitting.least_squares(problem)
    if not res.converged:
        raise FitError(f"recovery fit did not converge after {res.n_iter} iterations")
    t1_fit = res["T1"]
    positive = tau[tau > 0]
    if positive.size and (positive[-1] < t1_fit or positive[0] > t1_fit):
        res.warnings.append("ill-conditioned: waiting times do not bracket the fitted T1")
    elif positive.size and positive[-1] / positive[0] < 100:
        res.warnings.append("waiting times span less than two decades")
    return res
