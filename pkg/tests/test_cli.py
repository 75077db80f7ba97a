import json
import time
from pathlib import Path

import numpy as np
import pytest

from ionflop import cli
from ionflop.pulse import synthetic_spectrum, write_spectrum_file

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def toml(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL = """
[pulse]
shape = "gaussian"
duration = 0.941e-12
detuning = "-33 GHz"
alpha = 1.3e11
scatter_counts_per_joule = 1e12
energy_sweep = {{ start = 0.5e-12, stop = 200e-12, num = {num} }}

[protocol]
repetitions = {reps}
reference_repetitions = {reps}
seed = 3
"""


def read_theory(out):
    return json.loads((Path(out) / "theory.json").read_text())


def test_theory_paper_defaults(tmp_path, capsys):
    out = tmp_path / "o"
    code = cli.main(["theory", "--config", str(CONFIGS / "theory.toml"), "--out", str(out), "--format", "json"])
    assert code == 0
    (row,) = read_theory(out)
    assert row["peak_intensity_W_m2"] == pytest.approx(458e9, rel=0.02)
    assert row["rabi_frequency_rad_s"] == pytest.approx(1.510e12, rel=0.01)
    assert row["t_eff_s"] == pytest.approx(2.36e-12, rel=0.005)
    assert "rabi_frequency_rad_s" in capsys.readouterr().out


def test_theory_zero_energy_and_halved_waist(tmp_path):
    base = "[pulse]\nshape = \"gaussian\"\nduration = 0.941e-12\nenergies = [0.0, 0.0867e-9]\nwaist = {w}\n"
    cli.main(["theory", "--config", toml(tmp_path, base.format(w=8.5e-6), "a.toml"), "--out", str(tmp_path / "a"), "--format", "json"])
    cli.main(["theory", "--config", toml(tmp_path, base.format(w=4.25e-6), "b.toml"), "--out", str(tmp_path / "b"), "--format", "json"])
    a, b = read_theory(tmp_path / "a"), read_theory(tmp_path / "b")
    assert a[0]["rabi_frequency_rad_s"] == 0.0
    assert b[1]["rabi_frequency_rad_s"] == pytest.approx(2 * a[1]["rabi_frequency_rad_s"], rel=1e-12)


def test_theory_missing_energies_is_config_error(tmp_path, capsys):
    assert cli.main(["theory", "--config", toml(tmp_path, "[pulse]\nwaist = 8.5e-6\n")]) == 2
    assert "pulse.energies" in capsys.readouterr().err


def test_unknown_key_is_config_error(tmp_path, capsys):
    assert cli.main(["simulate", "--config", toml(tmp_path, "[pulse]\nwiast = 1e-6\n")]) == 2
    assert "pulse.wiast" in capsys.readouterr().err


def test_zero_repetitions_is_config_error(tmp_path):
    path = toml(tmp_path, SMALL.format(num=3, reps=0))
    assert cli.main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_missing_config_file_is_io_error(tmp_path):
    assert cli.main(["simulate", "--config", str(tmp_path / "nope.toml")]) == 4


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    path = toml(tmp_path, SMALL.format(num=3, reps=100))
    assert cli.main(["simulate", "--config", path, "--out", str(blocker / "sub")]) == 4


def test_simulate_twice_is_byte_identical(tmp_path):
    path = toml(tmp_path, SMALL.format(num=4, reps=2000))
    out = tmp_path / "o"
    first = {}
    for _ in range(2):
        assert cli.main(["simulate", "--config", path, "--seed", "1", "--out", str(out)]) == 0
        run = {name: (out / name).read_bytes() for name in ("histograms.json", "histograms.csv")}
        first = first or run
    assert run == first


def test_seed_flag_overrides_config(tmp_path):
    path = toml(tmp_path, SMALL.format(num=2, reps=2000))
    cli.main(["simulate", "--config", path, "--seed", "1", "--out", str(tmp_path / "a"), "--format", "json"])
    cli.main(["simulate", "--config", path, "--seed", "2", "--out", str(tmp_path / "b"), "--format", "json"])
    a = json.loads((tmp_path / "a" / "histograms.json").read_text())
    b = json.loads((tmp_path / "b" / "histograms.json").read_text())
    assert a["seed"] == 1 and b["seed"] == 2
    assert a["points"] != b["points"]


def test_output_echoes_config_and_reproduces(tmp_path):
    path = toml(tmp_path, SMALL.format(num=3, reps=1000))
    cli.main(["simulate", "--config", path, "--out", str(tmp_path / "a"), "--format", "json"])
    doc = json.loads((tmp_path / "a" / "histograms.json").read_text())
    assert doc["seed"] == 3
    assert doc["config"]["pulse"]["detuning"] == -33e9
    # rerun from the echoed config alone
    from ionflop import config as cfgmod
    from ionflop.protocol import run_experiment

    cfg = cfgmod.resolve(doc["config"])
    hists = run_experiment(cfgmod.energies(cfg), cfgmod.experiment_model(cfg), cfg["protocol"]["repetitions"], doc["seed"])
    for p, (_, h) in zip(doc["points"], hists):
        assert {int(k): v for k, v in p["histogram"].items()} == h.bin_counts


def test_analyze_round_trip(tmp_path, capsys):
    path = toml(tmp_path, SMALL.format(num=20, reps=20000))
    sim = tmp_path / "sim"
    assert cli.main(["simulate", "--config", path, "--out", str(sim)]) == 0
    out = tmp_path / "fit"
    assert cli.main(["analyze", str(sim / "histograms.json"), "--out", str(out)]) == 0
    report = json.loads((out / "fit_report.json").read_text())
    fit = report["rabi_fit"]
    assert abs(fit["alpha"] - 1.3e11) < 3 * fit["alpha_std"]
    band = np.genfromtxt(out / "band.csv", delimiter=",", names=True)
    assert np.all(band["lower"] <= band["model"]) and np.all(band["model"] <= band["upper"])
    pts = np.genfromtxt(out / "rabi_points.csv", delimiter=",", names=True)
    assert pts.size == 20
    assert "alpha =" in capsys.readouterr().out


def test_analyze_accepts_csv_histograms(tmp_path):
    path = toml(tmp_path, SMALL.format(num=6, reps=5000))
    sim = tmp_path / "sim"
    cli.main(["simulate", "--config", path, "--out", str(sim)])
    # the flat CSV carries no references or metadata, so the mixture is calibrated from the readout model
    code = cli.main(
        ["analyze", str(sim / "histograms.csv"), "--config", path, "--out", str(tmp_path / "fit"), "--format", "json"]
    )
    assert code == 0
    assert (tmp_path / "fit" / "band.json").exists()


def test_analyze_single_energy_reports_fit_failure(tmp_path, capsys):
    path = toml(tmp_path, SMALL.format(num=1, reps=5000))
    cli.main(["simulate", "--config", path, "--out", str(tmp_path / "sim")])
    assert cli.main(["analyze", str(tmp_path / "sim" / "histograms.json"), "--out", str(tmp_path / "fit")]) == 3
    report = json.loads((tmp_path / "fit" / "fit_report.json").read_text())
    assert "population" in report["points"][0]
    assert report["rabi_fit"]["converged"] is False
    assert "Rabi fit failed" in capsys.readouterr().err


def test_analyze_empty_input(tmp_path):
    assert cli.main(["analyze"]) == 4
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert cli.main(["analyze", str(empty)]) == 4


def test_spectrum_reports_signed_detuning(tmp_path, capsys):
    ref = 811.29e12
    grid = ref - 190e9 + np.linspace(-2e12, 2e12, 801)
    a = synthetic_spectrum(0.896e-12, ref - 190e9, grid, instrument_sigma=3.6e9 / 2.3548)
    write_spectrum_file(tmp_path / "s.txt", grid, a)
    code = cli.main(["spectrum", str(tmp_path / "s.txt"), "--reference", "811.29 THz", "--out", str(tmp_path / "o")])
    assert code == 0
    rep = json.loads((tmp_path / "o" / "spectrum_report.json").read_text())
    assert rep["detuning_ghz"] == pytest.approx(-190, abs=0.5)
    assert rep["t_eff_s"] == pytest.approx(2.25e-12, rel=0.005)


def test_spectrum_centred_on_reference(tmp_path):
    ref = 811.29e12
    grid = ref + np.linspace(-2e12, 2e12, 801)
    write_spectrum_file(tmp_path / "s.txt", grid, synthetic_spectrum(0.941e-12, ref, grid))
    cli.main(["spectrum", str(tmp_path / "s.txt"), "--reference", str(ref), "--out", str(tmp_path / "o")])
    rep = json.loads((tmp_path / "o" / "spectrum_report.json").read_text())
    assert rep["detuning_ghz"] == pytest.approx(0.0, abs=1e-3)


def test_spectrum_garbage_names_line(tmp_path, capsys):
    p = tmp_path / "bad.txt"
    p.write_text("# f a\n1.0 2.0\n2.0 3.0\nthree four\n")
    assert cli.main(["spectrum", str(p), "--reference", "811 THz"]) == 4
    assert f"{p}:4:" in capsys.readouterr().err


def test_spectrum_without_peak_is_fit_failure(tmp_path):
    p = tmp_path / "flat.txt"
    write_spectrum_file(p, np.linspace(1e14, 1.01e14, 50), np.linspace(0, 1, 50))
    assert cli.main(["spectrum", str(p), "--reference", "811 THz"]) == 3


def test_spectrum_needs_reference(tmp_path):
    p = tmp_path / "s.txt"
    grid = 811e12 + np.linspace(-2e12, 2e12, 101)
    write_spectrum_file(p, grid, synthetic_spectrum(0.941e-12, 811e12, grid))
    assert cli.main(["spectrum", str(p)]) == 2


@pytest.mark.slow
def test_simulate_paper_scale_benchmark(tmp_path):
    t0 = time.perf_counter()
    code = cli.main(["simulate", "--config", str(CONFIGS / "on_resonance.toml"), "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    assert elapsed < 60.0
    doc = json.loads((tmp_path / "histograms.json").read_text())
    assert len(doc["points"]) == 20
    assert all(p["total"] == 68500 for p in doc["points"])
