"""Run configuration: one TOML (or JSON) document, strictly validated.

Units at this boundary are the experimentalist's: frequencies in Hz
(``*_hz``, multiplied by 2 pi internally), decay rates in 1/s
(``*_per_s``, used as angular rates), fields in tesla, temperatures in
kelvin, times in seconds.  Every key is optional.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from . import levels, phonons, pulses
from .dynamics import LambdaParams

TWO_PI = 2 * np.pi


class ConfigError(ValueError):
    pass


# kind names: float, int, bool, str, floats (list), vec2, vec3, optfloat
SCHEMA = {
    "seed": "int",
    "levels": {
        "lambda_so_ground_hz": "float", "lambda_so_excited_hz": "float",
        "b_field_t": "vec3", "strain_ground_hz": "vec2", "strain_excited_hz": "vec2",
        "gyromagnetic_spin_hz_per_t": "float", "gyromagnetic_orbital_hz_per_t": "float",
        "orbital_quenching": "float", "target_splitting_hz": "optfloat",
        "ple_linewidth_hz": "float", "ple_span_hz": "float", "ple_points": "int",
    },
    "lambda": {
        "omega_plus_hz": "float", "omega_minus_hz": "float", "gamma_opt_per_s": "float",
        "gamma_spin_per_s": "float", "gamma_e_per_s": "float", "delta_plus_hz": "float",
        "omega_b_hz": "float", "branch_plus": "float",
    },
    "spectrum": {
        "mode": "str", "span_halfwidths": "float", "n_points": "int",
        "counts_per_unit": "optfloat", "fit": "bool", "slope": "bool",
    },
    "power_sweep": {
        "powers": "floats", "rabi_hz_at_unit_power": "float", "sideband_ratio": "float",
        "mode": "str", "counts_per_unit": "optfloat", "polarization_error": "float",
        "span_halfwidths": "float", "n_points": "int", "slope": "bool",
    },
    "thermal": {
        "nu_so_hz": "float", "dephasing_amplitude_hz": "optfloat", "bath_floor_hz": "float",
        "rate1_per_s": "optfloat", "rate2_per_s": "optfloat", "nu_direct_hz": "float",
        "reference_t1_s": "float", "reference_temp_k": "float", "reference_fwhm_hz": "float",
    },
    "temp_sweep": {
        "mode": "str", "temps_k": "floats", "which": "str", "data_csv": "optstr",
        "pin_floor_hz": "optfloat",
    },
    "pulse": {
        "pulse_duration_s": "float", "pump_branch": "float", "rabi_hz": "float",
        "gamma_e_per_s": "float", "gamma_opt_per_s": "float", "omega_b_hz": "float",
        "temperature_k": "float", "exchange_rate_per_s": "optfloat", "sample_step_s": "float",
        "window_fraction": "float", "counts_at_peak": "optfloat", "tau_s": "floats",
        "n_tau": "int", "free_asymptote": "bool", "trace_tau_s": "optfloat",
    },
    "bound": {"t1_s": "float", "temp_k": "float", "nu_hz": "float"},
}

_DEFAULT_GAMMA_E = pulses.GAMMA_E

DEFAULTS = {
    "seed": 0,
    "levels": {
        "lambda_so_ground_hz": 50e9, "lambda_so_excited_hz": 260e9,
        "b_field_t": [0.12, 0.0, 0.0],
        "strain_ground_hz": [levels.OPERATING_STRAIN_GROUND / TWO_PI, 0.0],
        "strain_excited_hz": [50e9 * np.cos(np.pi / 6), 50e9 * np.sin(np.pi / 6)],
        "gyromagnetic_spin_hz_per_t": 28e9, "gyromagnetic_orbital_hz_per_t": 28e9,
        "orbital_quenching": 0.1, "target_splitting_hz": None,
        "ple_linewidth_hz": 300e6, "ple_span_hz": 8e9, "ple_points": 801,
    },
    "lambda": {
        # gamma_spin gives a 0.5 MHz intrinsic FWHM; optical dephasing 1000x that
        "omega_plus_hz": 5e6, "omega_minus_hz": 5e6,
        "gamma_opt_per_s": 1000 * np.pi * 0.5e6, "gamma_spin_per_s": np.pi * 0.5e6,
        "gamma_e_per_s": _DEFAULT_GAMMA_E, "delta_plus_hz": 0.0, "omega_b_hz": 3e9,
        "branch_plus": 0.5,
    },
    "spectrum": {
        "mode": "exact", "span_halfwidths": 10.0, "n_points": 201,
        "counts_per_unit": None, "fit": True, "slope": False,
    },
    "power_sweep": {
        "powers": [1.0, 2.0, 3.0, 4.0, 5.0], "rabi_hz_at_unit_power": None,
        "sideband_ratio": 1.0, "mode": "exact", "counts_per_unit": None,
        "polarization_error": 0.0, "span_halfwidths": 10.0, "n_points": 101, "slope": False,
    },
    "thermal": {
        "nu_so_hz": 50e9, "dephasing_amplitude_hz": None, "bath_floor_hz": 0.5e6,
        "rate1_per_s": None, "rate2_per_s": None, "nu_direct_hz": 3e9,
        "reference_t1_s": 0.3e-6, "reference_temp_k": 4.0, "reference_fwhm_hz": 2.35e6,
    },
    "temp_sweep": {
        "mode": "t1", "temps_k": [0.15, 0.3, 0.5, 0.83, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
        "which": "two", "data_csv": None, "pin_floor_hz": None,
    },
    "pulse": {
        "pulse_duration_s": 500e-9, "pump_branch": 0.1, "rabi_hz": _DEFAULT_GAMMA_E / TWO_PI,
        "gamma_e_per_s": _DEFAULT_GAMMA_E, "gamma_opt_per_s": 0.5 * _DEFAULT_GAMMA_E,
        "omega_b_hz": 3e9, "temperature_k": 4.0, "exchange_rate_per_s": None,
        "sample_step_s": 0.5e-9, "window_fraction": 0.2, "counts_at_peak": None,
        "tau_s": [], "n_tau": 12, "free_asymptote": False, "trace_tau_s": None,
    },
    "bound": {"t1_s": 30e-6, "temp_k": 1.0, "nu_hz": 3e9},
}
# the power grid's Rabi scale: 0.9 MHz of broadening per unit power by default
DEFAULTS["power_sweep"]["rabi_hz_at_unit_power"] = float(
    np.sqrt(0.9e6 * 4 * np.pi * DEFAULTS["lambda"]["gamma_opt_per_s"]) / TWO_PI)


def _convert(kind, value, where):
    def bad(expect):
        return ConfigError(f"key '{where}' must be {expect}, got {value!r}")

    if kind in ("float", "optfloat"):
        if value is None and kind == "optfloat":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad("a number")
        v = float(value)
        if not np.isfinite(v):
            raise bad("finite")
        return v
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad("an integer")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise bad("true or false")
        return value
    if kind in ("str", "optstr"):
        if value is None and kind == "optstr":
            return None
        if not isinstance(value, str):
            raise bad("a string")
        return value
    if kind in ("floats", "vec2", "vec3"):
        if not isinstance(value, (list, tuple)):
            raise bad("a list of numbers")
        out = [_convert("float", v, where) for v in value]
        size = {"vec2": 2, "vec3": 3}.get(kind)
        if size is not None and len(out) != size:
            raise bad(f"a list of {size} numbers")
        return out
    raise AssertionError(kind)


def _normalize(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a table/object at top level")
    out = json.loads(json.dumps(DEFAULTS))
    for key, value in doc.items():
        if key not in SCHEMA:
            raise ConfigError(f"unknown key '{key}'")
        kind = SCHEMA[key]
        if isinstance(kind, dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{key}' must be a table")
            for sub, v in value.items():
                if sub not in kind:
                    raise ConfigError(f"unknown key '{key}.{sub}'")
                out[key][sub] = _convert(kind[sub], v, f"{key}.{sub}")
        else:
            out[key] = _convert(kind, value, key)
    return out


@dataclass(frozen=True)
class RunConfig:
    data: dict
    source: str = "<defaults>"

    def __getitem__(self, section):
        return self.data[section]

    @property
    def seed(self):
        return self.data["seed"]

    def with_overrides(self, **sections):
        data = json.loads(json.dumps(self.data))
        for section, values in sections.items():
            if section == "seed":
                data["seed"] = values
                continue
            for key, value in values.items():
                data[section][key] = _convert(SCHEMA[section][key], value, f"{section}.{key}")
        return RunConfig(data, self.source)

    def hash(self):
        canonical = json.dumps(self.data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def parse_config(doc, source="<dict>") -> RunConfig:
    return RunConfig(_normalize(doc), source)


def load_config(path=None) -> RunConfig:
    """Read TOML (default) or JSON (``.json`` suffix); ``None`` gives the defaults."""
    if path is None:
        return RunConfig(_normalize({}))
    p = Path(path)
    try:
        raw = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        if p.suffix.lower() == ".json":
            doc = json.loads(raw.decode("utf-8"))
        else:
            doc = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config {p}: {exc}") from None
    return RunConfig(_normalize(doc), str(p))


# builders: config units -> model objects ----------------------------------------

def _wrap(fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def level_params(cfg: RunConfig) -> levels.LevelParams:
    c = cfg["levels"]
    params = _wrap(
        levels.LevelParams,
        lambda_so_ground=TWO_PI * c["lambda_so_ground_hz"],
        lambda_so_excited=TWO_PI * c["lambda_so_excited_hz"],
        b_field=tuple(c["b_field_t"]),
        strain_ground=tuple(TWO_PI * v for v in c["strain_ground_hz"]),
        strain_excited=tuple(TWO_PI * v for v in c["strain_excited_hz"]),
        gyromagnetic_spin=TWO_PI * c["gyromagnetic_spin_hz_per_t"],
        gyromagnetic_orbital=TWO_PI * c["gyromagnetic_orbital_hz_per_t"],
        orbital_quenching=c["orbital_quenching"],
    )
    if c["target_splitting_hz"] is not None:
        params = _wrap(levels.calibrate_ground_strain, params, TWO_PI * c["target_splitting_hz"])
    return params


def lambda_params(cfg: RunConfig) -> LambdaParams:
    c = cfg["lambda"]
    return _wrap(
        LambdaParams,
        omega_plus=TWO_PI * c["omega_plus_hz"], omega_minus=TWO_PI * c["omega_minus_hz"],
        gamma_opt=c["gamma_opt_per_s"], gamma_spin=c["gamma_spin_per_s"], gamma_e=c["gamma_e_per_s"],
        delta_plus=TWO_PI * c["delta_plus_hz"], omega_b=TWO_PI * c["omega_b_hz"],
        two_photon_delta=TWO_PI * c["omega_b_hz"], branch_plus=c["branch_plus"],
    )


def rabi_per_power(cfg: RunConfig) -> float:
    """k in Omega_+^2 + Omega_-^2 = k P (rad^2 s^-2 per power unit)."""
    return (TWO_PI * cfg["power_sweep"]["rabi_hz_at_unit_power"]) ** 2


def thermal_model(cfg: RunConfig) -> phonons.ThermalModel:
    """Unset amplitudes are calibrated to the reference T1 / FWHM at the reference temperature."""
    c = cfg["thermal"]
    nu, t_ref = c["nu_so_hz"], c["reference_temp_k"]
    for key in ("nu_so_hz", "reference_t1_s", "reference_temp_k"):
        if c[key] <= 0:
            raise ConfigError(f"key 'thermal.{key}' must be > 0")
    amp = c["dephasing_amplitude_hz"]
    if amp is None:
        amp = (c["reference_fwhm_hz"] - c["bath_floor_hz"]) / phonons.thermal_occupation(nu, t_ref)
    rate1 = c["rate1_per_s"]
    if rate1 is None:
        rate1 = 1.0 / (c["reference_t1_s"] * phonons.single_phonon_factor(nu, t_ref))
    rate2 = c["rate2_per_s"]
    if rate2 is None:
        rate2 = 1.0 / (c["reference_t1_s"] * phonons.two_phonon_factor(nu, t_ref))
    return _wrap(phonons.ThermalModel, nu_so=nu, dephasing_amplitude=amp, bath_floor=c["bath_floor_hz"],
                 rate1=rate1, rate2=rate2, nu_direct=c["nu_direct_hz"])


def pulse_sequence(cfg: RunConfig) -> pulses.PulseSequence:
    c = cfg["pulse"]
    drive = _wrap(LambdaParams, omega_plus=TWO_PI * c["rabi_hz"], omega_minus=0.0,
                  gamma_opt=c["gamma_opt_per_s"], gamma_spin=0.0, gamma_e=c["gamma_e_per_s"],
                  omega_b=TWO_PI * c["omega_b_hz"])
    rate = c["exchange_rate_per_s"]
    if rate is None:
        model = thermal_model(cfg)
        # the pulse pipeline follows the two-phonon law, which the T1 data favour
        rate = float(phonons.two_phonon_rate(model, c["temperature_k"])) if c["temperature_k"] > 0 else 0.0
    return _wrap(pulses.PulseSequence, drive=drive, pulse_duration=c["pulse_duration_s"],
                 pump_branch=c["pump_branch"], exchange_rate=rate, temperature=c["temperature_k"],
                 sample_step=c["sample_step_s"])
