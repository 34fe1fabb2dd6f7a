import json
import subprocess
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superengine.cli_io import ConfigError, RunConfig, emit_config, main, parse_config


def write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, "N: 300\ngamma_down: 0.01\nT: -0.5\n"))
    assert (cfg.N, cfg.gamma_down, cfg.T) == (300, 0.01, -0.5)
    assert cfg.omega0 == 1.0 and cfg.gamma_up == 0.0 and cfg.schema_version == 1
    assert cfg.warnings == []


def test_empty_file_lists_required_fields(tmp_path):
    with pytest.raises(ConfigError, match="N, T"):
        parse_config(write(tmp_path, ""))


def test_strong_pump_is_accepted_with_warning(tmp_path):
    cfg = parse_config(write(tmp_path, "N: 80\nT: 0.5\ngamma_down: 0.01\nx: 20\n"))
    assert cfg.x == 20.0
    assert any("validity" in w for w in cfg.warnings)


def test_overrides_are_yaml_scalars(tmp_path):
    cfg = parse_config(write(tmp_path, "N: 10\nT: 1\n"),
                       ["x=2.5", "sweep_grid=[40, 80]", "sweep_axis=N", "hard_switch=true"])
    assert cfg.x == 2.5 and cfg.sweep_grid == [40.0, 80.0] and cfg.hard_switch is True


@pytest.mark.parametrize("text,field", [
    ("N: 10\nT: 1\ncolour: red\n", "colour"),
    ("N: ten\nT: 1\n", "N"),
    ("N: 10\nT: 0\n", "T"),
    ("N: 10\nT: 1\ngamma_down: -1\n", "gamma_down"),
    ("N: 10\nT: 1\ndt: 0\n", "dt"),
    ("N: 10\nT: 1\nschema_version: 2\n", "schema_version"),
    ("N: 2.5\nT: 1\n", "N"),
    ("N: 10\nT: 1\nhard_switch: 1\n", "hard_switch"),
])
def test_validation_names_the_field(tmp_path, text, field):
    with pytest.raises(ConfigError, match=field):
        parse_config(write(tmp_path, text))


def test_yaml_syntax_error_reports_line(tmp_path):
    with pytest.raises(ConfigError, match="line 2, column 1"):
        parse_config(write(tmp_path, "N: 10\n\tT: 1\n"))


def test_bad_override_syntax():
    with pytest.raises(ConfigError):
        parse_config(None, ["N"])


configs = st.builds(
    RunConfig,
    N=st.integers(1, 500),
    T=st.floats(0.01, 100).flatmap(lambda t: st.sampled_from([t, -t])),
    gamma_down=st.floats(0, 0.01),
    gamma_up=st.floats(0, 0.01),
    x=st.floats(0, 10),
    n_cycles=st.integers(1, 9),
    stroke_duration=st.none() | st.floats(0.1, 100),
    tau_switch=st.none() | st.floats(1e-3, 10),
    hard_switch=st.booleans(),
    sweep_axis=st.none() | st.sampled_from(["x", "N", "tau_switch"]),
    sweep_grid=st.none() | st.lists(st.floats(0.1, 100), min_size=1, max_size=4),
    out=st.text("abcxyz_/", min_size=1, max_size=8),
)


@settings(max_examples=60, deadline=None)
@given(cfg=configs)
def test_emit_parse_round_trip(tmp_path_factory, cfg):
    path = tmp_path_factory.mktemp("rt") / "cfg.yaml"
    path.write_text(emit_config(cfg))
    assert parse_config(path) == cfg


@pytest.fixture(scope="module")
def pulse_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pulse")
    cfg = write(root, "N: 100\ngamma_down: 0.01\nT: -0.5\n")
    assert main(["pulse", "--config", str(cfg), "--out", str(root / "out"), "--quiet"]) == 0
    return root


def test_pulse_writes_curves_and_comparison(pulse_dir):
    out = pulse_dir / "out"
    assert (out / "exact.csv").read_text().splitlines()[0] == "t,intensity,sz"
    assert (out / "mean_field.csv").read_text().splitlines()[0] == "t,intensity,sx,sy,sz"
    text = (out / "comparison.json").read_text()
    data = json.loads(text)
    assert text == json.dumps(data, indent=2, sort_keys=True) + "\n"
    assert data["comparison"]["peak_rel_err"] < 0.15


def test_fit_consumes_pulse_output(pulse_dir, tmp_path):
    csv_path = pulse_dir / "out" / "exact.csv"
    rc = main(["fit", "--set", "N=100", "--set", "T=-0.5", "--set", f"input_csv={csv_path}",
               "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    fit = json.loads((tmp_path / "pulse_fit.json").read_text())
    assert set(fit) == {"I0", "t_d_fit", "tau_fit", "rms_residual", "iterations", "converged"}
    tau = 2 / (100 * 0.01 * 0.7615941559557649)
    assert fit["tau_fit"] == pytest.approx(tau, rel=0.15)


def test_runs_are_byte_identical(pulse_dir, tmp_path):
    cfg = pulse_dir / "run.yaml"
    assert main(["pulse", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    for name in ("exact.csv", "mean_field.csv", "comparison.json"):
        assert (tmp_path / name).read_bytes() == (pulse_dir / "out" / name).read_bytes()


def test_cycle_and_sweep_outputs(tmp_path):
    args = ["--set", "N=20", "--set", "T=0.5", "--set", "gamma_down=0.01", "--set", "n_cycles=2"]
    assert main(["cycle", *args, "--out", str(tmp_path / "c"), "--quiet"]) == 0
    report = json.loads((tmp_path / "c" / "report.json").read_text())
    assert len(report["cycles"]) == 2
    assert (tmp_path / "c" / "cycle2_em.csv").exists()
    rc = main(["sweep", *args, "--set", "sweep_axis=N", "--set", "sweep_grid=[20, 40, 80]",
               "--set", "workers=3", "--out", str(tmp_path / "s"), "--quiet"])
    assert rc == 0
    for name in ("sweep.json", "sweep.csv", "scaling.json", "scaling.csv"):
        assert (tmp_path / "s" / name).exists()


def test_runtime_errors_become_json_on_stderr(tmp_path, capsys):
    rc = main(["fit", "--set", "N=10", "--set", "T=1", "--out", str(tmp_path)])
    assert rc == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "input_csv" in err["message"]


def test_config_errors_exit_nonzero(tmp_path, capsys):
    rc = main(["pulse", "--config", str(write(tmp_path, ""))])
    assert rc == 1
    assert "missing required fields" in json.loads(capsys.readouterr().err)["message"]


def test_unknown_subcommand_prints_usage(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["launch"])
    assert exc.value.code != 0
    assert "usage:" in capsys.readouterr().err


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "superengine", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "pulse" in proc.stdout and "--set" in proc.stdout
