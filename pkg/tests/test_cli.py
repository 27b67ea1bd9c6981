import math

import pytest

from cavity_raman import __version__
from cavity_raman.cli import ConfigError, KEYS, main, parse_config
from cavity_raman.model import khz

SMALL_SCAN = """\
field_a = fock:0
field_b = fock:0
scan_start_khz = -10
scan_stop_khz = 10
scan_step_khz = 10
"""


def test_defaults_match_model():
    cfg = parse_config("")
    assert cfg.params.omega0 == pytest.approx(khz(49))
    assert cfg.params.delta == pytest.approx(khz(128))
    assert cfg.params.waist == pytest.approx(6e-3)
    assert cfg.params.kappa_b == pytest.approx(1 / 0.9e-3)
    assert set(cfg.values) == set(KEYS)


def test_override_and_comments():
    cfg = parse_config("# slower atoms\nvelocity_mps = 100  # m/s\nn_th = 0\nrelaxation = off\n")
    assert cfg.params.velocity == 100.0
    assert cfg.params.n_th_a == cfg.params.n_th_b == 0.0
    assert cfg["relaxation"] is False


@pytest.mark.parametrize("text,key", [
    ("delta_khz = -5", "delta_khz"),
    ("colour = blue", "colour"),
    ("velocity_mps = fast", "velocity_mps"),
    ("shots = 2.5", "shots"),
    ("p_enter_g = 2", "p_enter_g"),
    ("relaxation = maybe", "relaxation"),
    ("field_a = squeezed:1", "field_a"),
    ("scan_start_khz = 10\nscan_stop_khz = 0", "scan_stop_khz"),
    ("n_th = 1\nn_th = 2", "n_th"),
])
def test_config_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(text)


def test_config_hash_tracks_values():
    a, b = parse_config(""), parse_config("velocity_mps = 150")
    assert a.config_hash() == parse_config("").config_hash()
    assert a.config_hash() != b.config_hash()
    assert "velocity_mps = 150.0" in b.echo()


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("delta_khz = -5\n")
    assert main(["scan", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "delta_khz" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert main(["scan", "--config", str(tmp_path / "none.cfg"), "--out", str(tmp_path)]) == 4


def test_threads_must_be_positive(tmp_path):
    assert main(["analytic", "resonance", "--threads", "0", "--out", str(tmp_path)]) == 2


def test_scan_output(tmp_path):
    cfg = tmp_path / "scan.cfg"
    cfg.write_text(SMALL_SCAN)
    assert main(["scan", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "scan.csv").read_text().splitlines()
    assert lines[0] == f"# cavity-raman {__version__}"
    assert lines[1] == "# command scan"
    assert lines[2].startswith("# config_hash ")
    # empty modes still get room for emitted and bath photons
    assert lines[3] == "# truncation n_max_a=4 n_max_b=4"
    assert lines[4] == "delta_khz,p_g"
    rows = [tuple(map(float, x.split(","))) for x in lines[5:]]
    assert [r[0] for r in rows] == [-10.0, 0.0, 10.0]
    assert all(0.0 <= r[1] <= 1.0 for r in rows)
    assert (tmp_path / "config.echo").exists()


def test_scan_shots_are_seeded(tmp_path):
    cfg = tmp_path / "scan.cfg"
    cfg.write_text(SMALL_SCAN.replace("fock:0", "fock:1") + "shots = 1000\n")
    outs = []
    for run in ("a", "b"):
        assert main(["scan", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / run)]) == 0
        outs.append((tmp_path / run / "scan.csv").read_text())
    assert outs[0] == outs[1]
    values = [float(x.split(",")[1]) for x in outs[0].splitlines()[5:]]
    assert all(math.isclose(v * 1000, round(v * 1000)) for v in values)


def test_analytic_prints_value(tmp_path, capsys):
    assert main(["analytic", "raman-coupling", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "raman-coupling = 1.55 kHz"
    assert main(["analytic", "light-shift", "--detuning-khz", "135", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.strip() == "light-shift = -4.45 kHz"
    text = (tmp_path / "analytic_light-shift.txt").read_text()
    assert "# command analytic detuning_khz=135.0" in text


def test_analytic_numerical_error(tmp_path):
    assert main(["analytic", "resonance", "--n", "7", "--out", str(tmp_path)]) == 3


def test_ramsey_reference(tmp_path):
    assert main(["ramsey", "--scenario", "one_photon_ref", "--out", str(tmp_path)]) == 0
    csv = (tmp_path / "ramsey_one_photon_ref.csv").read_text().splitlines()
    assert csv[4] == "offset_hz,p_g"
    assert len(csv) == 5 + 41
    report = (tmp_path / "ramsey_one_photon_ref.txt").read_text()
    phase = float(report.split("relative_phase_rad = ")[1].split()[0])
    assert phase == pytest.approx(0.480, abs=1e-3)


def test_version(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert capsys.readouterr().out.strip() == __version__
