"""``sivcpt`` command-line interface.

Exit status: 0 success, 2 configuration/usage error, 3 numerical failure.
On 2 and 3 a one-line JSON error document is printed on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import cpt, dynamics, fitting, levels, phonons, pulses
from .config import ConfigError, RunConfig
from .io import OutputSet, read_table

TWO_PI = 2 * np.pi

NUMERICAL_ERRORS = (
    fitting.FitError, dynamics.IntegrationError, dynamics.InvariantViolation,
    dynamics.NonUniqueSteadyState, dynamics.ConvergenceError, pulses.NoTransient,
    phonons.InfiniteLifetime, np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError,
)

MODES = {
    "spectrum": ("exact", "adiabatic"),
    "power-sweep": ("exact", "adiabatic"),
    "temp-sweep": ("dephasing", "t1"),
}


class UsageError(ConfigError):
    pass


def _fit_doc(res: fitting.FitResult, **extra):
    doc = {
        "parameters": [{"parameter": r["parameter"], "estimate": r["estimate"], "sigma": r["sigma"]}
                       for r in res.to_records()],
        "names": list(res.names),
        "covariance": [float(v) for v in res.covariance.ravel()],
        "residual_norm": res.residual_norm,
        "chi2_red": res.chi2_red,
        "n_points": res.n_points,
        "converged": res.converged,
        "iterations": res.n_iter,
        "warnings": list(res.warnings),
    }
    doc.update(extra)
    return doc


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


# pipelines -------------------------------------------------------------------------

def run_levels(cfg: RunConfig, out: OutputSet):
    params = cfgmod.level_params(cfg)
    ground = levels.eigensystem(params, "ground")
    excited = levels.eigensystem(params, "excited")
    table = levels.transition_table(ground, excited)
    out.table("transitions", ["label", "lower", "upper", "freq_hz", "strength"],
              [(r.label, r.lower, r.upper, r.freq / TWO_PI, r.strength) for r in table])
    c = cfg["levels"]
    grid = TWO_PI * np.linspace(-0.5 * c["ple_span_hz"], 0.5 * c["ple_span_hz"], c["ple_points"])
    spec = levels.ple_spectrum(table, TWO_PI * c["ple_linewidth_hz"], grid, families="C")
    out.table("ple", ["detuning_hz", "signal"], zip(spec.x_hz, spec.y))
    c2, c3, c4 = (table.by_label(k) for k in ("C2", "C3", "C4"))
    return {
        "ground_splitting_hz": ground.splitting(0, 1) / TWO_PI,
        "excited_splitting_hz": excited.splitting(0, 1) / TWO_PI,
        "c2_c3_separation_hz": (c2.freq - c3.freq) / TWO_PI,
        "c4_over_c2_strength": c4.strength / c2.strength,
    }


def run_spectrum(cfg: RunConfig, out: OutputSet, mode, seed):
    c = cfg["spectrum"]
    params = cfgmod.lambda_params(cfg)
    grid = cpt.cpt_grid(params, c["span_halfwidths"], c["n_points"])
    spec = cpt.compute_cpt_spectrum(params, grid, mode=mode)
    for flag in spec.flags:
        _warn(f"adiabatic regime: {flag}")
    if c["counts_per_unit"] is not None:
        spec = cpt.add_counting_noise(spec, c["counts_per_unit"], seed)
        rows = zip(spec.x_hz, spec.y, spec.y_err)
        cols = ["delta_hz", "signal", "sigma"]
    else:
        rows = zip(spec.x_hz, spec.y)
        cols = ["delta_hz", "signal"]
    out.table("spectrum", cols, rows, comments=[f"mode: {mode}"])
    summary = {"min_signal": float(np.min(spec.y)),
               "analytic_fwhm_hz": 2 * dynamics.analytic_cpt_halfwidth(params) / TWO_PI}
    if c["fit"]:
        res = cpt.fit_cpt_dip(spec, slope=c["slope"])
        out.document("spectrum_fit.json", _fit_doc(res, mode=mode, analytic_fwhm_hz=summary["analytic_fwhm_hz"]))
        summary["fit_fwhm_hz"] = res["fwhm_hz"]
        summary["fit_fwhm_err_hz"] = res.err("fwhm_hz")
    return summary


def run_power_sweep(cfg: RunConfig, out: OutputSet, mode, seed, counts_per_unit="config"):
    c = cfg["power_sweep"]
    base = cfgmod.lambda_params(cfg)
    k = cfgmod.rabi_per_power(cfg)
    cpu = c["counts_per_unit"] if counts_per_unit == "config" else counts_per_unit
    res = cpt.power_sweep(base, c["powers"], k, c["sideband_ratio"], mode=mode, counts_per_unit=cpu, seed=seed,
                          halfwidths=c["span_halfwidths"], n_points=c["n_points"],
                          polarization_error=c["polarization_error"], slope=c["slope"])
    for w in res.warnings:
        _warn(w)
    out.table("power_sweep", ["power", "fwhm_hz", "fwhm_err_hz"], zip(res.powers, res.fwhm, res.fwhm_err),
              comments=[f"mode: {mode}", f"noise: {'poisson' if cpu is not None else 'none'}"])
    doc = _fit_doc(
        res.line_fit,
        intrinsic_fwhm_hz=res.intrinsic_fwhm, intrinsic_fwhm_err_hz=res.intrinsic_fwhm_err,
        slope_hz_per_power=res.slope, slope_err_hz_per_power=res.slope_err,
        expected_intrinsic_fwhm_hz=base.gamma_spin / np.pi,
        expected_slope_hz_per_power=k / (4 * np.pi * base.gamma_opt),
        max_linearity_deviation=res.max_linearity_deviation(),
        mode=mode, sweep_warnings=res.warnings,
    )
    doc["parameters"][1]["parameter"] = "slope_per_unit_power"
    doc["parameters"][1]["estimate"] = res.slope
    doc["parameters"][1]["sigma"] = res.slope_err
    scale = np.array([1.0, 1.0 / float(np.max(res.powers))])
    doc["covariance"] = [float(v) for v in (res.line_fit.covariance * np.outer(scale, scale)).ravel()]
    out.document("intrinsic_linewidth.json", doc)
    return {"intrinsic_fwhm_hz": res.intrinsic_fwhm, "intrinsic_fwhm_err_hz": res.intrinsic_fwhm_err,
            "slope_hz_per_power": res.slope}


def run_temp_sweep(cfg: RunConfig, out: OutputSet, mode, data_path=None):
    c = cfg["temp_sweep"]
    model = cfgmod.thermal_model(cfg)
    temps = np.asarray(c["temps_k"], dtype=float)
    if temps.size == 0 or np.any(temps <= 0):
        raise ConfigError("key 'temp_sweep.temps_k' needs positive temperatures")
    which = c["which"]
    if which not in phonons.RELAXATION_MODELS:
        raise ConfigError(f"key 'temp_sweep.which' must be one of {phonons.RELAXATION_MODELS}")
    data_path = data_path or c["data_csv"]
    summary = {}
    if mode == "dephasing":
        fwhm = phonons.dephasing_fwhm(model, temps)
        out.table("dephasing_model", ["temp_k", "fwhm_hz", "fwhm_err_hz"],
                  zip(temps, fwhm, np.zeros_like(temps)))
        summary.update({
            "dephasing_amplitude_hz": model.dephasing_amplitude,
            "fwhm_at_4k_hz": float(phonons.dephasing_fwhm(model, 4.0)),
            "fwhm_at_1k_hz": float(phonons.dephasing_fwhm(model, 1.0)),
            "fwhm_at_0p15k_hz": float(phonons.dephasing_fwhm(model, 0.15)),
        })
        if data_path is not None:
            d = read_table(data_path, ["temp_k", "fwhm_hz"])
            err = d.get("fwhm_err_hz")
            err = err if err is not None and np.all(err > 0) else None
            res = phonons.fit_dephasing_model(d["temp_k"], d["fwhm_hz"], err, model.nu_so,
                                              pin_floor=c["pin_floor_hz"])
            out.document("dephasing_fit.json", _fit_doc(res, data=str(data_path)))
            summary["fit"] = dict(zip(res.names, res.params.tolist()))
        out.document("dephasing_summary.json", summary)
        return summary

    laws = {
        "single": lambda t: phonons.single_phonon_rate(model, t),
        "two": lambda t: phonons.two_phonon_rate(model, t),
        "both": lambda t: phonons.combined_relaxation_rate(model, t),
    }
    rate = laws[which]
    with np.errstate(divide="ignore"):
        t1 = 1.0 / np.asarray(rate(temps), dtype=float)
    out.table("t1_model", ["temp_k", "t1_s", "t1_err_s"], zip(temps, t1, np.zeros_like(temps)),
              comments=[f"law: {which}"])
    summary.update({
        "law": which,
        "t1_at_4k_s": float(1.0 / rate(4.0)),
        "t1_at_1k_s": float(1.0 / rate(1.0)),
        "rate_ratio_4k_over_1k": float(rate(4.0) / rate(1.0)),
    })
    if data_path is not None:
        d = read_table(data_path, ["temp_k", "t1_s"])
        err = d.get("t1_err_s")
        err = err if err is not None and np.all(err > 0) else None
        cmp_ = phonons.compare_relaxation_models(d["temp_k"], d["t1_s"], err, model.nu_so)
        doc = {
            "single": _fit_doc(cmp_.single),
            "two": _fit_doc(cmp_.two),
            "residual_ratio_single_over_two": cmp_.residual_ratio,
            "preferred": cmp_.preferred,
            "data": str(data_path),
        }
        if which == "both":
            doc["both"] = _fit_doc(phonons.fit_relaxation_model(d["temp_k"], d["t1_s"], err, "both", model.nu_so))
        out.document("t1_fit.json", doc)
        summary["residual_ratio_single_over_two"] = cmp_.residual_ratio
    out.document("t1_summary.json", summary)
    return summary


def run_t1_sim(cfg: RunConfig, out: OutputSet, seed, counts_at_peak="config"):
    c = cfg["pulse"]
    seq = cfgmod.pulse_sequence(cfg)
    if seq.exchange_rate <= 0:
        raise ConfigError("no spin relaxation in the dark interval (exchange rate is 0)")
    t1_true = 1.0 / seq.exchange_rate
    taus = np.asarray(c["tau_s"], dtype=float)
    if taus.size == 0:
        taus = t1_true * np.geomspace(0.1, 10.0, c["n_tau"])
    counts = c["counts_at_peak"] if counts_at_peak == "config" else counts_at_peak
    trace_tau = c["trace_tau_s"] if c["trace_tau_s"] is not None else t1_true
    # the example trace uses the seed itself; recovery points use seed + 1 + index
    trace = pulses.simulate_readout(replace(seq, wait_tau=trace_tau), counts_at_peak=counts, seed=seed)
    out.table("trace", ["t_s", "counts", "window"], zip(trace.times, trace.signal, trace.window),
              comments=[f"wait_tau_s: {trace_tau!r}",
                        "counts: " + ("poisson counts per bin" if counts is not None else "noiseless Gamma*rho_ee (1/s)")])
    curve = pulses.recovery_curve(seq, taus, counts_at_peak=counts, seed=seed + 1,
                                  window_fraction=c["window_fraction"])
    out.table("recovery", ["tau_s", "ratio", "sigma"], curve.rows())
    res = pulses.fit_recovery(curve, free_asymptote=c["free_asymptote"])
    for w in res.warnings:
        _warn(w)
    out.document("t1_fit.json", _fit_doc(res, injected_t1_s=t1_true, temperature_k=seq.temperature))
    return {"t1_fit_s": res["T1"], "t1_fit_err_s": res.err("T1"), "t1_injected_s": t1_true, "r0": res["R0"]}


def run_bound(t1, temp, nu):
    if t1 <= 0:
        raise ConfigError("--t1 must be > 0")
    if temp < 0:
        raise ConfigError("--temp must be >= 0")
    if nu <= 0:
        raise ConfigError("--nu must be > 0")
    mult = phonons.bound_multiplier(temp, nu)
    return {"t1_s": t1, "temp_k": temp, "nu_hz": nu, "multiplier": float(mult), "bound_s": float(t1 * mult)}


def run_reproduce(cfg: RunConfig, out_dir: Path, seed, fmt):
    """All figure-level pipelines at the default operating point plus a headline table."""
    h = cfg.hash()
    outs = {name: OutputSet(out_dir / name, h, fmt) for name in
            ("levels", "spectrum", "power_sweep", "power_sweep_noisy", "dephasing", "t1_model",
             "t1_model_single", "t1_sim", "t1_sim_noisy")}
    lv = run_levels(cfg, outs["levels"])
    sp = run_spectrum(cfg, outs["spectrum"], "exact", seed)
    ps = run_power_sweep(cfg, outs["power_sweep"], "exact", seed, counts_per_unit=None)
    noisy_cpu = cfg["power_sweep"]["counts_per_unit"] or 6e3
    psn = run_power_sweep(cfg, outs["power_sweep_noisy"], "exact", seed, counts_per_unit=noisy_cpu)
    de = run_temp_sweep(cfg, outs["dephasing"], "dephasing")
    t2 = run_temp_sweep(cfg.with_overrides(temp_sweep={"which": "two"}), outs["t1_model"], "t1")
    t1s = run_temp_sweep(cfg.with_overrides(temp_sweep={"which": "single"}), outs["t1_model_single"], "t1")
    ts = run_t1_sim(cfg, outs["t1_sim"], seed, counts_at_peak=None)
    noisy_counts = cfg["pulse"]["counts_at_peak"] or 1e4
    tsn = run_t1_sim(cfg, outs["t1_sim_noisy"], seed, counts_at_peak=noisy_counts)
    b = cfg["bound"]
    bd = run_bound(b["t1_s"], b["temp_k"], b["nu_hz"])

    rows = [
        ("ground_splitting_hz", lv["ground_splitting_hz"], 3e9),
        ("c4_over_c2_strength", lv["c4_over_c2_strength"], float("nan")),
        ("spectrum_fit_fwhm_hz", sp.get("fit_fwhm_hz", float("nan")), sp["analytic_fwhm_hz"]),
        ("intrinsic_fwhm_noiseless_hz", ps["intrinsic_fwhm_hz"], cfg["lambda"]["gamma_spin_per_s"] / np.pi),
        ("intrinsic_fwhm_noisy_hz", psn["intrinsic_fwhm_hz"], 0.5e6),
        ("intrinsic_fwhm_noisy_err_hz", psn["intrinsic_fwhm_err_hz"], 0.33e6),
        ("dephasing_fwhm_4k_hz", de["fwhm_at_4k_hz"], 2.35e6),
        ("dephasing_fwhm_1k_hz", de["fwhm_at_1k_hz"], float("nan")),
        ("dephasing_fwhm_0p15k_hz", de["fwhm_at_0p15k_hz"], 0.5e6),
        ("single_phonon_ratio_4k_1k", t1s["rate_ratio_4k_over_1k"], 25.0),
        ("two_phonon_ratio_4k_1k", t2["rate_ratio_4k_over_1k"], 100.0),
        ("t1_two_phonon_1k_s", t2["t1_at_1k_s"], float("nan")),
        ("t1_fit_noiseless_s", ts["t1_fit_s"], 0.3e-6),
        ("t1_fit_noisy_s", tsn["t1_fit_s"], 0.3e-6),
        ("bound_multiplier", bd["multiplier"], float("nan")),
        ("lifetime_bound_s", bd["bound_s"], 0.2e-3),
    ]
    summary = OutputSet(out_dir, h, fmt)
    summary.table("summary", ["quantity", "value", "reference"], rows,
                  comments=[f"seed: {seed}", "reference: headline value quoted for comparison (nan: none)"])
    summary.document("summary.json", {"seed": seed, "values": {k: v for k, v, _ in rows}})
    written = []
    for name, o in outs.items():
        written += [f"{name}/{f}" for f in o.write()]
    written += summary.write()
    return {"files": written, "values": {k: v for k, v, _ in rows}}


# argument handling ---------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="sivcpt", description="CPT and phonon-limited spin relaxation toolkit for a Lambda-type emitter.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, modes=None):
        sp.add_argument("--config", metavar="PATH", help="TOML or JSON run configuration")
        sp.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
        sp.add_argument("--seed", type=int, default=None, help="root random seed (overrides config)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv", help="table format")
        if modes is not None:
            sp.add_argument("--mode", choices=modes, default=None)
        return sp

    common(sub.add_parser("levels", help="transition table and PLE spectrum"))
    common(sub.add_parser("spectrum", help="CPT spectrum and dip fit"), MODES["spectrum"])
    common(sub.add_parser("power-sweep", help="linewidth versus power and intrinsic linewidth"), MODES["power-sweep"])
    ts = common(sub.add_parser("temp-sweep", help="temperature laws and fits"), MODES["temp-sweep"])
    ts.add_argument("--data", metavar="CSV", help="measured data to fit (overrides temp_sweep.data_csv)")
    ts.add_argument("--single-phonon", action="store_true", help="tabulate the single-phonon law")
    common(sub.add_parser("t1-sim", help="two-pulse T1 measurement simulation"))
    b = common(sub.add_parser("bound", help="lifetime bound of the direct spin transition"))
    b.add_argument("--t1", type=float, default=None, help="observed T1 (s)")
    b.add_argument("--temp", type=float, default=None, help="temperature (K)")
    b.add_argument("--nu", type=float, default=None, help="transition frequency (Hz)")
    common(sub.add_parser("reproduce-paper", help="run every pipeline with the default operating point"))
    return p


def _dispatch(args):
    cfg = cfgmod.load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.seed
    if seed < 0:
        raise ConfigError("seed must be >= 0")
    cfg = cfg.with_overrides(seed=seed)
    out_dir = Path(args.out)
    cmd = args.command
    if cmd == "bound":
        b = cfg["bound"]
        doc = run_bound(args.t1 if args.t1 is not None else b["t1_s"],
                        args.temp if args.temp is not None else b["temp_k"],
                        args.nu if args.nu is not None else b["nu_hz"])
        doc["config_hash"] = cfg.hash()
        out = OutputSet(out_dir, cfg.hash(), args.format)
        out.document("bound.json", doc)
        out.write()
        return doc
    if cmd == "reproduce-paper":
        return run_reproduce(cfg, out_dir, seed, args.format)
    mode = None
    if cmd in MODES:
        mode = args.mode or cfg[cmd.replace("-", "_")]["mode"]
        if mode not in MODES[cmd]:
            raise ConfigError(f"key '{cmd.replace('-', '_')}.mode' must be one of {MODES[cmd]}, not {mode!r}")
    if cmd == "temp-sweep" and args.single_phonon:
        cfg = cfg.with_overrides(temp_sweep={"which": "single"})
    out = OutputSet(out_dir, cfg.hash(), args.format)
    if cmd == "levels":
        summary = run_levels(cfg, out)
    elif cmd == "spectrum":
        summary = run_spectrum(cfg, out, mode, seed)
    elif cmd == "power-sweep":
        summary = run_power_sweep(cfg, out, mode, seed)
    elif cmd == "temp-sweep":
        summary = run_temp_sweep(cfg, out, mode, args.data)
    elif cmd == "t1-sim":
        summary = run_t1_sim(cfg, out, seed)
    else:  # pragma: no cover - argparse restricts the choices
        raise UsageError(f"unknown command {cmd}")
    return {"files": out.write(), "summary": summary}


def _fail(code, kind, message):
    print(json.dumps({"error": kind, "exit_code": code, "message": message}), file=sys.stderr)
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(2, "usage", str(exc))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", dynamics.RegimeWarning)
            result = _dispatch(args)
    except ConfigError as exc:
        return _fail(2, "config", str(exc))
    except NUMERICAL_ERRORS as exc:
        return _fail(3, "numerical", f"{type(exc).__name__}: {exc}")
    except (ValueError, OSError) as exc:
        return _fail(2, "config", f"{type(exc).__name__}: {exc}")
    print(json.dumps(result, indent=2, sort_keys=True, default=float))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
