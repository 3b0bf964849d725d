"""CPT spectra: synthesis from the Lambda model, photon-counting noise, dip
fits and the linewidth-versus-power extrapolation.

Linewidth convention: reported widths are FWHM in Hz, so a pure spin
dephasing rate gamma_spin (rad/s) gives an intrinsic FWHM of
gamma_spin / pi and T2* = 1 / gamma_spin.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import dynamics, fitting
from .dynamics import LambdaParams, RegimeWarning
from .fitting import FitError, FitResult
from .signals import Spectrum

TWO_PI = 2 * np.pi


class NoDipDetected(FitError):
    pass


def compute_cpt_spectrum(params: LambdaParams, delta_grid, mode="exact") -> Spectrum:
    """Steady-state rho_ee while scanning the two-photon detuning at fixed delta_plus."""
    x = np.asarray(delta_grid, dtype=float)
    if x.ndim != 1 or x.size == 0 or np.any(np.diff(x) <= 0):
        raise ValueError("delta_grid must be a nonempty ascending 1-d array")
    y = np.empty_like(x)
    flags = set()
    for i, delta in enumerate(x):
        p = params.scanned(delta)
        if mode == "exact":
            y[i] = dynamics.steady_state(p)[1, 1].real
        elif mode == "adiabatic":
            flags.update(dynamics.regime_flags(p))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RegimeWarning)
                y[i] = dynamics.self_consistent_adiabatic_steady_state(p)[1, 1].real
        else:
            raise ValueError(f"mode must be 'exact' or 'adiabatic', not {mode!r}")
    return Spectrum(x=x, y=y, kind="two_photon", flags=tuple(sorted(flags)))


def cpt_grid(params: LambdaParams, halfwidths=10.0, n_points=101):
    """Two-photon detuning grid centred on omega_b spanning +-halfwidths HWHM."""
    hw = dynamics.analytic_cpt_halfwidth(params)
    return params.omega_b + np.linspace(-halfwidths * hw, halfwidths * hw, n_points)


def add_counting_noise(spec: Spectrum, counts_per_unit: float, seed) -> Spectrum:
    """Replace the signal by Poisson counts with mean counts_per_unit * y."""
    if counts_per_unit <= 0:
        raise ValueError("counts_per_unit must be > 0")
    mean = counts_per_unit * np.clip(spec.y, 0.0, None)
    rng = np.random.default_rng(seed)
    counts = rng.poisson(mean).astype(float)
    return replace(spec, y=counts, y_err=np.sqrt(mean), counts=True)


def _initial_dip_guess(x, y):
    n = x.size
    edge = max(2, n // 10)
    baseline = float(np.median(np.concatenate([y[:edge], y[-edge:]])))
    # a short moving average keeps single noisy bins from posing as the dip
    m = max(1, n // 25) | 1
    ys = np.convolve(np.pad(y, m // 2, mode="edge"), np.ones(m) / m, mode="valid")
    k = int(np.argmin(ys))
    depth = baseline - float(ys[k])
    half = baseline - 0.5 * depth
    lo = k
    while lo > 0 and ys[lo] < half:
        lo -= 1
    hi = k
    while hi < n - 1 and ys[hi] < half:
        hi += 1
    width = max(float(x[hi] - x[lo]), 2.0 * float(np.min(np.diff(x))))
    return baseline, depth, float(x[k]), width


def fit_cpt_dip(spec: Spectrum, slope=False, max_iter=200) -> FitResult:
    """Fit an inverted Lorentzian (optionally on a linear background).

    Returns parameters ``baseline, depth, center_hz, fwhm_hz`` (and
    ``slope`` per rad/s if requested).
    """
    x, y = spec.x, spec.y
    if x.size < 8:
        raise ValueError("need at least 8 points to fit a dip")
    x_ref = float(np.mean(x))
    xs = x - x_ref
    y_err = None
    if spec.y_err is not None:
        y_err = spec.y_err.copy()
        pos = y_err[y_err > 0]
        y_err[y_err <= 0] = pos.min() if pos.size else 1.0
    b0, d0, c0, w0 = _initial_dip_guess(xs, y)
    centre = (float(xs[0]), float(xs[-1]))
    pad = 0.25 * float(np.min(np.diff(xs)))
    c0 = min(max(c0, centre[0] + pad), centre[1] - pad)
    if slope:
        model, jac = fitting.lorentzian_dip_sloped, fitting.lorentzian_dip_sloped_jac
        p0 = [b0, d0, c0, w0, 0.0]
        names = ("baseline", "depth", "center", "fwhm", "slope")
        bounds = [(None, None), (None, None), centre, (0.0, None), (None, None)]
    else:
        model, jac = fitting.lorentzian_dip, fitting.lorentzian_dip_jac
        p0 = [b0, d0, c0, w0]
        names = ("baseline", "depth", "center", "fwhm")
        bounds = [(None, None), (None, None), centre, (0.0, None)]
    res = fitting.least_squares(fitting.FitProblem(
        model=model, jac=jac, p0=p0, x=xs, y=y, y_err=y_err, names=names,
        bounds=bounds, max_iter=max_iter))
    if not res.converged:
        raise FitError(f"dip fit did not converge: {res.n_iter} iterations, "
                       f"residual norm {res.residual_norm:.4g}, last point {res.params.tolist()}")
    # back to absolute detuning, angular -> Hz
    params = res.params.copy()
    params[2] += x_ref
    scale = np.ones_like(params)
    scale[2] = scale[3] = 1.0 / TWO_PI
    params = params * scale
    cov = res.covariance * np.outer(scale, scale)
    out = replace(res, names=("baseline", "depth", "center_hz", "fwhm_hz") + (("slope",) if slope else ()),
                  params=params, covariance=cov, sigma=np.sqrt(np.diag(cov)), warnings=list(res.warnings))
    depth, depth_err = out["depth"], out.err("depth")
    if depth <= 2.0 * depth_err:
        raise NoDipDetected(f"dip depth {depth:.4g} is within 2 sigma ({depth_err:.3g}) of zero")
    if np.ptp(x) / TWO_PI < 2.0 * out["fwhm_hz"]:
        out.warnings.append("scan spans less than twice the fitted FWHM")
    return out


@dataclass
class PowerSweepResult:
    powers: np.ndarray
    fwhm: np.ndarray  # Hz
    fwhm_err: np.ndarray  # Hz
    intrinsic_fwhm: float
    intrinsic_fwhm_err: float
    slope: float  # Hz per power unit
    slope_err: float
    line_fit: FitResult
    dip_fits: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def max_linearity_deviation(self):
        pred = self.intrinsic_fwhm + self.slope * self.powers
        return float(np.max(np.abs(self.fwhm - pred)) / np.mean(self.fwhm))


def rabi_for_power(power, rabi_per_power, sideband_ratio):
    """(Omega_+, Omega_-) with Omega_+^2 + Omega_-^2 = k P and Omega_+ / Omega_- fixed."""
    om2 = rabi_per_power * power / (1.0 + sideband_ratio ** 2)
    om_minus = np.sqrt(om2)
    return sideband_ratio * om_minus, om_minus


def sweep_spectra(base: LambdaParams, power_grid, rabi_per_power, sideband_ratio=1.0, mode="exact",
                  halfwidths=10.0, n_points=101):
    """Noiseless spectra, one per power, each on a grid of +-halfwidths analytic HWHM."""
    powers = _check_powers(power_grid)
    out = []
    for power in powers:
        p = base.with_rabi(*rabi_for_power(power, rabi_per_power, sideband_ratio))
        out.append(compute_cpt_spectrum(p, cpt_grid(p, halfwidths, n_points), mode=mode))
    return out


def _check_powers(power_grid):
    powers = np.asarray(power_grid, dtype=float)
    if powers.ndim != 1 or powers.size < 2 or np.unique(powers).size != powers.size:
        raise ValueError("power grid needs at least two distinct values")
    if np.any(powers <= 0):
        raise ValueError("powers must be > 0")
    return powers


def analyze_sweep(powers, spectra, counts_per_unit=None, seed=0, polarization_error=0.0,
                  slope=False) -> PowerSweepResult:
    """Fit every spectrum's dip and extrapolate FWHM(P) = L0 + s P to zero power.

    With ``counts_per_unit`` set, spectrum i is Poisson-noised with seed
    ``seed + i`` first.  ``polarization_error`` adds that fraction of each
    FWHM in quadrature to its error bar.
    """
    powers = _check_powers(powers)
    if len(spectra) != powers.size:
        raise ValueError("need one spectrum per power")
    notes = []
    if powers.size < 3:
        notes.append("ill-conditioned: fewer than 3 powers, line fit has no residual degrees of freedom")
    fwhm, err, fits = [], [], []
    for i, spec in enumerate(spectra):
        if counts_per_unit is not None:
            spec = add_counting_noise(spec, counts_per_unit, seed + i)
        res = fit_cpt_dip(spec, slope=slope)
        fits.append(res)
        fwhm.append(res["fwhm_hz"])
        err.append(res.err("fwhm_hz"))
    fwhm = np.array(fwhm)
    err = np.hypot(np.array(err), polarization_error * fwhm)
    weighted = counts_per_unit is not None and bool(np.all(err > 0))
    p_scale = float(np.max(powers))
    line = _fit_line(powers / p_scale, fwhm, err if weighted else None)
    if weighted:
        # per-point errors grow with the fitted width, so weights taken at the
        # observed widths favour low fluctuations; re-evaluate them at the line
        pred = fitting.line(powers / p_scale, line.params)
        if np.all(pred > 0):
            line = _fit_line(powers / p_scale, fwhm, err * pred / fwhm)
        # scatter beyond the error bars (saturation curvature, approximate
        # per-spectrum errors) inflates the covariance by the Birge ratio
        if np.isfinite(line.chi2_red) and line.chi2_red > 1.0:
            line.covariance = line.covariance * line.chi2_red
            line.sigma = np.sqrt(np.diag(line.covariance))
            notes.append(f"line-fit errors scaled by the Birge ratio {np.sqrt(line.chi2_red):.3g}")
    return PowerSweepResult(
        powers=powers, fwhm=fwhm, fwhm_err=err,
        intrinsic_fwhm=line["intercept"], intrinsic_fwhm_err=line.err("intercept"),
        slope=line["slope"] / p_scale, slope_err=line.err("slope") / p_scale,
        line_fit=line, dip_fits=fits, warnings=notes,
    )


def _fit_line(x, y, y_err):
    return fitting.least_squares(fitting.FitProblem(
        model=fitting.line, jac=fitting.line_jac, p0=[float(y[0]), 0.0], x=x, y=y,
        y_err=y_err, names=("intercept", "slope")))


def power_sweep(base: LambdaParams, power_grid, rabi_per_power, sideband_ratio=1.0, mode="exact",
                counts_per_unit=None, seed=0, halfwidths=10.0, n_points=101,
                polarization_error=0.0, slope=False) -> PowerSweepResult:
    """FWHM of the CPT dip versus power and its straight-line extrapolation.

    ``rabi_per_power`` is k in Omega_+^2 + Omega_-^2 = k P (rad^2/s^2 per
    power unit); the expected slope is k / (4 pi gamma_opt) Hz per unit and
    the intercept gamma_spin / pi Hz.
    """
    spectra = sweep_spectra(base, power_grid, rabi_per_power, sideband_ratio, mode, halfwidths, n_points)
    return analyze_sweep(power_grid, spectra, counts_per_unit, seed, polarization_error, slope)
