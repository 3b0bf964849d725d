import json
import subprocess
import sys

import numpy as np
import pytest

from sivcpt import cli, config, io, levels, phonons

TWO_PI = 2 * np.pi


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    cap = capsys.readouterr()
    return code, cap.out, cap.err


# config ---------------------------------------------------------------------------

def test_defaults_parse_and_hash_is_stable():
    a, b = config.parse_config({}), config.parse_config({})
    assert a.hash() == b.hash() and len(a.hash()) == 16
    c = config.parse_config({"seed": 4})
    assert c.hash() != a.hash() and c.seed == 4


def test_unknown_and_mistyped_keys_name_the_key():
    with pytest.raises(config.ConfigError, match="lambda.bogus"):
        config.parse_config({"lambda": {"bogus": 1}})
    with pytest.raises(config.ConfigError, match="power_sweep.powers"):
        config.parse_config({"power_sweep": {"powers": "many"}})
    with pytest.raises(config.ConfigError):
        config.parse_config({"nonsense": {}})


def test_load_toml_and_json(tmp_path):
    t = tmp_path / "c.toml"
    t.write_text("seed = 3\n[lambda]\ngamma_spin_per_s = 1e6\n")
    j = tmp_path / "c.json"
    j.write_text(json.dumps({"seed": 3, "lambda": {"gamma_spin_per_s": 1e6}}))
    a, b = config.load_config(t), config.load_config(j)
    assert a.hash() == b.hash()
    assert config.lambda_params(a).gamma_spin == 1e6
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = [\n")
    with pytest.raises(config.ConfigError):
        config.load_config(bad)
    with pytest.raises(config.ConfigError):
        config.load_config(tmp_path / "missing.toml")


def test_builders_convert_units():
    cfg = config.parse_config({})
    lp = config.lambda_params(cfg)
    assert lp.omega_plus == pytest.approx(TWO_PI * 5e6)
    assert lp.raman_detuning == 0.0
    # default calibration: 0.9 MHz of FWHM per unit power
    assert config.rabi_per_power(cfg) / (4 * np.pi * lp.gamma_opt) == pytest.approx(0.9e6)
    m = config.thermal_model(cfg)
    assert phonons.spin_lifetime(phonons.ThermalModel(rate2=m.rate2), 4.0) == pytest.approx(0.3e-6)
    assert phonons.dephasing_fwhm(m, 4.0) == pytest.approx(2.35e6)
    seq = config.pulse_sequence(cfg)
    assert seq.exchange_rate == pytest.approx(1 / 0.3e-6)


def test_level_calibration_from_config():
    cfg = config.parse_config({"levels": {"target_splitting_hz": 2.0e9}})
    assert levels.ground_splitting(config.level_params(cfg)) / TWO_PI == pytest.approx(2.0e9, rel=1e-9)
    with pytest.raises(config.ConfigError):
        config.level_params(config.parse_config({"levels": {"orbital_quenching": 3.0}}))


# io ---------------------------------------------------------------------------------

def test_table_round_trip(tmp_path):
    text = io.table_text(["a", "b"], [(1.0, 2), (0.1, 3)], "abc", comments=["note"])
    assert text.startswith("# config-hash: abc\n# note\n")
    p = tmp_path / "t.csv"
    p.write_text(text)
    cols = io.read_table(p, ["a", "b"])
    np.testing.assert_array_equal(cols["a"], [1.0, 0.1])
    with pytest.raises(ValueError, match="missing column"):
        io.read_table(p, ["c"])
    doc = json.loads(io.table_text(["a"], [(np.nan,)], "abc", fmt="json"))
    assert doc["rows"] == [[None]] and doc["config_hash"] == "abc"


def test_read_table_reports_bad_cells(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("temp_k,t1_s\n1.0,abc\n")
    with pytest.raises(ValueError, match="not a number"):
        io.read_table(p, ["temp_k"])


# cli ---------------------------------------------------------------------------------

@pytest.mark.parametrize("cmd,files", [
    ("levels", ["transitions.csv", "ple.csv"]),
    ("spectrum", ["spectrum.csv", "spectrum_fit.json"]),
    ("power-sweep", ["power_sweep.csv", "intrinsic_linewidth.json"]),
    ("temp-sweep", ["t1_model.csv", "t1_summary.json"]),
    ("bound", ["bound.json"]),
])
def test_subcommands_write_outputs(capsys, tmp_path, cmd, files):
    code, out, err = run_cli(capsys, cmd, "--out", str(tmp_path))
    assert code == 0, err
    json.loads(out)
    for name in files:
        assert (tmp_path / name).exists()
        if name.endswith(".csv"):
            assert (tmp_path / name).read_text().startswith("# config-hash: ")


def test_spectrum_fit_matches_analytic(capsys, tmp_path):
    assert run_cli(capsys, "spectrum", "--out", str(tmp_path))[0] == 0
    doc = json.loads((tmp_path / "spectrum_fit.json").read_text())
    est = {p["parameter"]: p["estimate"] for p in doc["parameters"]}
    assert est["fwhm_hz"] == pytest.approx(doc["analytic_fwhm_hz"], rel=0.01)


def test_temp_sweep_dephasing_mode_and_data_fit(capsys, tmp_path):
    assert run_cli(capsys, "temp-sweep", "--mode", "dephasing", "--out", str(tmp_path))[0] == 0
    assert (tmp_path / "dephasing_model.csv").exists()
    data = tmp_path / "data.csv"
    m = phonons.calibrated_relaxation_model()
    temps = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    data.write_text("temp_k,t1_s\n" + "".join(f"{float(t)!r},{float(v)!r}\n" for t, v in zip(temps, phonons.spin_lifetime(m, temps))))
    out_dir = tmp_path / "fit"
    code, _, err = run_cli(capsys, "temp-sweep", "--mode", "t1", "--data", str(data), "--out", str(out_dir))
    assert code == 0, err
    doc = json.loads((out_dir / "t1_fit.json").read_text())
    assert doc["preferred"] == "two"


def test_bound_flags(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "bound", "--t1", "1e-3", "--temp", "1.0", "--out", str(tmp_path))
    assert code == 0
    doc = json.loads((tmp_path / "bound.json").read_text())
    assert doc["bound_s"] == pytest.approx(1e-3 * phonons.bound_multiplier(1.0))


def test_json_format(capsys, tmp_path):
    assert run_cli(capsys, "levels", "--format", "json", "--out", str(tmp_path))[0] == 0
    doc = json.loads((tmp_path / "transitions.json").read_text())
    assert doc["columns"][0] == "label" and "config_hash" in doc


@pytest.mark.parametrize("argv,code", [
    (["spectrum", "--mode", "dephasing"], 2),
    (["nonexistent-command"], 2),
    (["spectrum", "--config", "/no/such/file.toml"], 2),
    (["spectrum", "--seed", "-1"], 2),
])
def test_usage_and_config_errors(capsys, tmp_path, argv, code):
    got, out, err = run_cli(capsys, *argv, "--out", str(tmp_path / "o"))
    assert got == code
    doc = json.loads(err.strip().splitlines()[-1])
    assert doc["exit_code"] == code and doc["message"]
    assert not (tmp_path / "o").exists()


def test_unknown_config_key_exit_2(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[lambda]\nbogus = 1\n")
    code, _, err = run_cli(capsys, "spectrum", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 2 and "lambda.bogus" in json.loads(err)["message"]


def test_numerical_failure_exit_3_writes_nothing(capsys, tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[lambda]\nomega_plus_hz = 0.0\nomega_minus_hz = 0.0\n")
    code, _, err = run_cli(capsys, "spectrum", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 3
    doc = json.loads(err)
    assert doc["error"] == "numerical" and "NonUniqueSteadyState" in doc["message"]
    assert not (tmp_path / "o").exists()


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "sivcpt", "bound", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["bound_s"] > 0
