"""Temperature laws: Bose occupation, phonon dephasing of the spin
coherence, one- and two-phonon spin relaxation and the lifetime bound set
by the direct spin transition.

Frequencies are in Hz, temperatures in K, rates in 1/s.  h and k_B are the
exact SI values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import constants

from . import fitting
from .fitting import FitResult

H_PLANCK = constants.h  # 6.62607015e-34 J s
K_BOLTZMANN = constants.k  # 1.380649e-23 J/K

TWO_PHONON_FORMS = ("absorption", "emission")


class InfiniteLifetime(ValueError):
    """The total relaxation rate is zero, so the lifetime diverges."""


def _check_temperature(temp):
    t = np.asarray(temp, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError("temperature must be > 0 K (the T -> 0 limit of n is 0)")
    return t


def thermal_occupation(nu, temp):
    """Bose-Einstein occupation 1/(exp(h nu / k_B T) - 1)."""
    t = _check_temperature(temp)
    nu = np.asarray(nu, dtype=float)
    if np.any(~(nu > 0)):
        raise ValueError("frequency must be > 0")
    x = H_PLANCK * nu / (K_BOLTZMANN * t)
    with np.errstate(over="ignore"):
        n = 1.0 / np.expm1(x)
    return n if n.ndim else float(n)


def boltzmann_factor(nu, temp):
    """exp(-h nu / k_B T)."""
    t = _check_temperature(temp)
    return np.exp(-H_PLANCK * np.asarray(nu, dtype=float) / (K_BOLTZMANN * t))


@dataclass(frozen=True)
class ThermalModel:
    nu_so: float = 50e9
    dephasing_amplitude: float = 0.0  # Hz of FWHM per phonon
    bath_floor: float = 0.0  # Hz of FWHM
    rate1: float = 0.0  # 1/s
    rate2: float = 0.0  # 1/s
    nu_direct: float = 3e9

    def __post_init__(self):
        if self.nu_so <= 0 or self.nu_direct <= 0:
            raise ValueError("frequencies must be > 0")
        for name in ("dephasing_amplitude", "bath_floor", "rate1", "rate2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def single_phonon_factor(nu_so, temp):
    n = thermal_occupation(nu_so, temp)
    return n * (1.0 + n)


def two_phonon_factor(nu_so, temp, form="absorption"):
    n = thermal_occupation(nu_so, temp)
    n_half = thermal_occupation(0.5 * nu_so, temp)
    if form == "absorption":
        return n_half ** 2 * (1.0 + n)
    if form == "emission":
        return n * (1.0 + n_half) ** 2
    raise ValueError(f"form must be one of {TWO_PHONON_FORMS}, not {form!r}")


def dephasing_fwhm(model: ThermalModel, temp):
    return model.bath_floor + model.dephasing_amplitude * thermal_occupation(model.nu_so, temp)


def single_phonon_rate(model: ThermalModel, temp):
    return model.rate1 * single_phonon_factor(model.nu_so, temp)


def two_phonon_rate(model: ThermalModel, temp, form="absorption"):
    return model.rate2 * two_phonon_factor(model.nu_so, temp, form)


def combined_relaxation_rate(model: ThermalModel, temp):
    return single_phonon_rate(model, temp) + two_phonon_rate(model, temp)


def spin_lifetime(model: ThermalModel, temp):
    rate = np.asarray(combined_relaxation_rate(model, temp), dtype=float)
    if np.any(rate <= 0):
        raise InfiniteLifetime("total relaxation rate is zero; spin lifetime is unbounded")
    out = 1.0 / rate
    return out if out.ndim else float(out)


def exchange_rates(total_rate, nu_b, temp):
    """Split 1/T1 into (up, down) rates obeying detailed balance at nu_b.

    ``up`` populates the upper spin level; up/down = exp(-h nu_b / k_B T).
    """
    if total_rate < 0:
        raise ValueError("total_rate must be >= 0")
    boltz = float(boltzmann_factor(nu_b, temp))
    down = total_rate / (1.0 + boltz)
    return total_rate - down, down


def thermal_populations(nu_b, temp):
    """(p_lower, p_upper) of a two-level spin in equilibrium."""
    boltz = float(boltzmann_factor(nu_b, temp))
    return 1.0 / (1.0 + boltz), boltz / (1.0 + boltz)


def bound_multiplier(temp, nu_direct=3e9):
    """1 + 2 n(nu_direct, T): stimulated up plus stimulated-and-spontaneous down."""
    if temp == 0:
        return 1.0
    return 1.0 + 2.0 * thermal_occupation(nu_direct, temp)


def spontaneous_lifetime_bound(t1_observed, temp, model: ThermalModel | None = None):
    """Lower bound on the zero-temperature lifetime of the direct spin transition."""
    if t1_observed <= 0:
        raise ValueError("t1_observed must be > 0")
    nu = model.nu_direct if model is not None else 3e9
    return t1_observed * bound_multiplier(temp, nu)


# fits -------------------------------------------------------------------------

RELAXATION_MODELS = ("single", "two", "both")


def _design(which, nu_so, temps):
    f1 = single_phonon_factor(nu_so, temps)
    f2 = two_phonon_factor(nu_so, temps)
    if which == "single":
        return ("rate1",), np.stack([f1], axis=-1)
    if which == "two":
        return ("rate2",), np.stack([f2], axis=-1)
    if which == "both":
        return ("rate1", "rate2"), np.stack([f1, f2], axis=-1)
    raise ValueError(f"which must be one of {RELAXATION_MODELS}, not {which!r}")


def _linear_fit(design, y, y_err, names, relative):
    """Weighted linear fit through the shared engine.

    With ``relative`` the weights only express the relative scatter of the
    points, so the covariance is rescaled by the reduced chi-square.
    """
    amp0 = np.linalg.lstsq(design / y_err[:, None], y / y_err, rcond=None)[0]
    amp0 = np.where(amp0 > 0, amp0, np.max(np.abs(amp0)) * 1e-3 + 1e-300)
    res = fitting.least_squares(fitting.FitProblem(
        model=lambda x, p: design @ p, jac=lambda x, p: design, p0=amp0,
        x=np.arange(y.size, dtype=float), y=y, y_err=y_err, names=names))
    if not res.converged:
        raise fitting.FitError("; ".join(res.warnings))
    if relative and np.isfinite(res.chi2_red):
        res.covariance = res.covariance * res.chi2_red
        res.sigma = np.sqrt(np.diag(res.covariance))
    return res


def fit_relaxation_model(temps, t1, t1_err=None, which="two", nu_so=50e9) -> FitResult:
    """Fit amplitudes of the phonon relaxation laws to (T, T1) data.

    The fit is done on rates 1/T1, where the laws are linear in their
    amplitudes, with sigma_rate = sigma_T1 / T1^2.  Without T1 errors the
    points are weighted by their own rate (equal relative scatter).
    """
    temps = _check_temperature(temps)
    t1 = np.asarray(t1, dtype=float)
    if temps.shape != t1.shape or temps.ndim != 1:
        raise ValueError("temps and t1 must be 1-d arrays of equal length")
    if temps.size < 3:
        raise ValueError("need at least 3 (T, T1) points")
    if np.any(t1 <= 0):
        raise ValueError("T1 values must be > 0")
    rate = 1.0 / t1
    relative = t1_err is None
    rate_err = rate.copy() if relative else np.asarray(t1_err, dtype=float) / t1 ** 2
    names, design = _design(which, nu_so, temps)
    return _linear_fit(design, rate, rate_err, names, relative)


@dataclass
class ModelComparison:
    single: FitResult
    two: FitResult
    notes: list = field(default_factory=list)

    @property
    def residual_ratio(self):
        """Residual norm of the single-phonon fit over that of the two-phonon fit."""
        if self.two.residual_norm == 0:
            return float("inf")
        return self.single.residual_norm / self.two.residual_norm

    @property
    def preferred(self):
        return "two" if self.residual_ratio >= 1 else "single"


def compare_relaxation_models(temps, t1, t1_err=None, nu_so=50e9) -> ModelComparison:
    return ModelComparison(
        single=fit_relaxation_model(temps, t1, t1_err, "single", nu_so),
        two=fit_relaxation_model(temps, t1, t1_err, "two", nu_so),
    )


def fit_dephasing_model(temps, fwhm, fwhm_err=None, nu_so=50e9, pin_floor=None) -> FitResult:
    """Fit FWHM(T) = floor + A n(nu_so, T); ``pin_floor`` fixes the floor (Hz)."""
    temps = _check_temperature(temps)
    fwhm = np.asarray(fwhm, dtype=float)
    if temps.shape != fwhm.shape or temps.ndim != 1:
        raise ValueError("temps and fwhm must be 1-d arrays of equal length")
    n = thermal_occupation(nu_so, temps)
    relative = fwhm_err is None
    err = np.ones_like(fwhm) if relative else np.asarray(fwhm_err, dtype=float)
    if pin_floor is None:
        if temps.size < 3:
            raise ValueError("need at least 3 points to fit floor and amplitude")
        design = np.stack([np.ones_like(n), n], axis=-1)
        return _linear_fit(design, fwhm, err, ("bath_floor", "dephasing_amplitude"), relative)
    if temps.size < 2:
        raise ValueError("need at least 2 points")
    return _linear_fit(n[:, None], fwhm - pin_floor, err, ("dephasing_amplitude",), relative)


def calibrated_dephasing_model(fwhm_hot=2.35e6, temp_hot=4.0, floor=0.5e6, nu_so=50e9) -> ThermalModel:
    """Floor plus amplitude chosen so the FWHM equals ``fwhm_hot`` at ``temp_hot``."""
    amp = (fwhm_hot - floor) / thermal_occupation(nu_so, temp_hot)
    return ThermalModel(nu_so=nu_so, dephasing_amplitude=amp, bath_floor=floor)


def calibrated_relaxation_model(t1_hot=0.3e-6, temp_hot=4.0, which="two", nu_so=50e9) -> ThermalModel:
    """Single- or two-phonon amplitude chosen so that T1(temp_hot) = t1_hot."""
    if which == "two":
        return ThermalModel(nu_so=nu_so, rate2=1.0 / (t1_hot * two_phonon_factor(nu_so, temp_hot)))
    if which == "single":
        return ThermalModel(nu_so=nu_so, rate1=1.0 / (t1_hot * single_phonon_factor(nu_so, temp_hot)))
    raise ValueError("which must be 'single' or 'two'")
