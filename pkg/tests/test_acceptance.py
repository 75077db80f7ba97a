"""Acceptance criteria, one test each. Every test prints a PASS/FAIL line."""

import itertools
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from ionflop import cli
from ionflop.dynamics import (
    GaussianEnvelope,
    RectangularEnvelope,
    integrate_schroedinger,
    rect_probability,
    rect_probability_dalpha,
)
from ionflop.estimation import GaussianSpectrumFitter, finite_difference_jacobian
from ionflop.protocol import ExperimentModel, run_experiment
from ionflop.pulse import (
    detuning_from_spectrum,
    duration_from_spectrum,
    effective_square_duration,
    instrument_sigma_from_resolution,
    synthetic_spectrum,
)

TWO_PI = 2 * math.pi
CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def report(capsys):
    def _report(number, ok, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return _report


def expm_population(omega, detuning, t):
    h = np.array([[-detuning / 2, omega / 2], [omega / 2, detuning / 2]], dtype=complex)
    c = expm(-1j * h * t) @ np.array([1.0, 0.0])
    return abs(c[1]) ** 2


def test_1_theoretical_rabi_frequency(tmp_path, report):
    t0 = time.perf_counter()
    code = cli.main(["theory", "--config", str(CONFIGS / "theory.toml"), "--out", str(tmp_path), "--format", "json"])
    elapsed = time.perf_counter() - t0
    (row,) = json.loads((tmp_path / "theory.json").read_text())
    i_p, omega = row["peak_intensity_W_m2"], row["rabi_frequency_rad_s"]
    ok = code == 0 and abs(i_p / 458e9 - 1) <= 0.02 and abs(omega / 1.510e12 - 1) <= 0.01
    report(1, ok, f"I_p = {i_p:.4e} W/m^2 (458e9 +/- 2%), Omega_th = {omega:.5e} rad/s (1.510e12 +/- 1%), {elapsed * 1e3:.0f} ms")


def test_2_effective_durations(report):
    a = float(effective_square_duration(0.941e-12))
    b = float(effective_square_duration(0.896e-12))
    ok = abs(a / 2.36e-12 - 1) <= 0.005 and abs(b / 2.25e-12 - 1) <= 0.005
    report(2, ok, f"t_eff = {a * 1e12:.4f} ps (2.36), {b * 1e12:.4f} ps (2.25), tolerance 0.5%")


def test_3_curve_level_reproduction(report):
    omega = 1.226e12
    red = float(rect_probability(omega, TWO_PI * 190e9, 2.25e-12))
    red_oracle = expm_population(omega, TWO_PI * 190e9, 2.25e-12)
    red_ode = integrate_schroedinger(RectangularEnvelope(omega, 2.25e-12), TWO_PI * 190e9).excited_population

    # peak of the on-resonance curve over the drive strength
    t, d = 2.36e-12, TWO_PI * 33e9
    omegas = np.linspace(0.5e12, 2.5e12, 20001)
    i = int(np.argmax(rect_probability(omegas, d, t)))
    blue = float(rect_probability(omegas[i], d, t))
    blue_oracle = max(expm_population(w, d, t) for w in np.linspace(omegas[i] - 1e9, omegas[i] + 1e9, 201))

    ok = (
        0.42 <= red <= 0.47
        and 0.94 <= blue <= 0.98
        and abs(red - red_oracle) < 1e-10
        and abs(red - red_ode) < 1e-8
        and abs(blue - blue_oracle) < 1e-8
    )
    report(
        3,
        ok,
        f"red = {red:.5f} in [0.42, 0.47] (expm {red_oracle:.5f}), blue peak = {blue:.5f} in [0.94, 0.98] (expm {blue_oracle:.5f})",
    )


def test_4_oracle_equivalence(report):
    omegas = np.linspace(0.2e12, 3.0e12, 5)
    detunings = TWO_PI * np.array([0.0, 33e9, 100e9, 190e9, 300e9])
    durations = np.linspace(1.0e-12, 5.0e-12, 4)
    grid = list(itertools.product(omegas, detunings, durations))
    t0 = time.perf_counter()
    worst = 0.0
    for om, d, t in grid:
        p = integrate_schroedinger(RectangularEnvelope(om, t), d).excited_population
        exact = float(rect_probability(om, d, t))
        worst = max(worst, abs(p - exact) / exact)
    elapsed = time.perf_counter() - t0
    ok = len(grid) >= 100 and worst < 1e-8 and elapsed < 10.0
    report(4, ok, f"{len(grid)} triples, worst relative error {worst:.2e} (< 1e-8), {elapsed:.2f} s (< 10 s)")


SWEEP = """
[pulse]
shape = "gaussian"
duration = 0.941e-12
detuning = "-33 GHz"
alpha = 1.3e11
scatter_counts_per_joule = 1e12
energy_sweep = { start = 0.5e-12, stop = 200e-12, num = 20 }

[protocol]
repetitions = 68500
reference_repetitions = 68500

[analysis]
calibration = "reference"
"""


@pytest.mark.slow
def test_5_estimator_round_trip(tmp_path, report):
    cfg = tmp_path / "sweep.toml"
    cfg.write_text(SWEEP)
    alpha_true = 1.3e11
    t0 = time.perf_counter()
    hits, trials = 0, 100
    for seed in range(trials):
        sim, fit = tmp_path / f"sim{seed}", tmp_path / f"fit{seed}"
        assert cli.main(["simulate", "--config", str(cfg), "--seed", str(seed), "--out", str(sim), "--format", "json"]) == 0
        assert cli.main(["analyze", str(sim / "histograms.json"), "--out", str(fit), "--format", "json"]) == 0
        r = json.loads((fit / "fit_report.json").read_text())["rabi_fit"]
        hits += abs(r["alpha"] - alpha_true) <= 2 * r["alpha_std"]
    elapsed = time.perf_counter() - t0
    report(5, hits >= 90, f"alpha within 2 standard errors in {hits}/{trials} seeded trials (>= 90), {elapsed:.0f} s")


def test_6_spectral_pipeline(report):
    ref = 811.29e12
    inst = instrument_sigma_from_resolution(3.6e9)
    rng = np.random.default_rng(33190)
    lines = []
    ok = True
    for detuning_hz, tau in ((-33e9, 0.941e-12), (-190e9, 0.896e-12)):
        grid = ref + detuning_hz + np.linspace(-1.5e12, 1.5e12, 1201)
        amp = synthetic_spectrum(tau, ref + detuning_hz, grid, instrument_sigma=inst, baseline=0.01, noise=0.005, rng=rng)
        model = GaussianSpectrumFitter(instrument_sigma=inst).fit(grid, amp).spectrum_
        got_detuning = detuning_from_spectrum(model, ref).hz
        got_tau = float(duration_from_spectrum(model))
        good = abs(got_detuning - detuning_hz) <= 2e9 and abs(got_tau / tau - 1) <= 0.02
        ok &= good
        lines.append(f"{detuning_hz / 1e9:+.0f} GHz -> {got_detuning / 1e9:+.3f} GHz, tau {got_tau * 1e12:.4f} ps ({tau * 1e12} ps)")
    report(6, ok, "; ".join(lines))


def test_7_invariant_suite(report):
    rng = np.random.default_rng(7)
    results = {}

    # norm conservation of the integrator
    drift = 0.0
    for _ in range(20):
        om, d, t = rng.uniform(1e11, 3e12), rng.uniform(-1, 1) * TWO_PI * 300e9, rng.uniform(0.5e-12, 5e-12)
        drift = max(drift, abs(integrate_schroedinger(RectangularEnvelope(om, t), d).norm - 1))
        drift = max(drift, abs(integrate_schroedinger(GaussianEnvelope(om, t / 2.5), d).norm - 1))
    results["norm drift < 1e-10"] = drift < 1e-10

    # detuning symmetry and prefactor bound of the closed form
    om = rng.uniform(0, 5e12, 10000)
    d = rng.uniform(-1, 1, 10000) * TWO_PI * 500e9
    t = rng.uniform(0, 10e-12, 10000)
    p = rect_probability(om, d, t)
    results["detuning symmetry (exact)"] = bool(np.all(p == rect_probability(om, -d, t)))
    bound = om**2 / (om**2 + d**2)
    results["prefactor bound"] = bool(np.all((p >= 0) & (p <= bound * (1 + 1e-15))))

    # analytic d/d(alpha) vs finite differences on a 10 x 10 grid
    t_eff, c_sc, worst = 2.36e-12, 40.0, 0.0
    for theta in np.linspace(0.2, 6.0, 10):
        for det in TWO_PI * np.linspace(0.0, 300e9, 10):
            alpha = theta / (t_eff * math.sqrt(c_sc))
            analytic = rect_probability_dalpha(alpha, c_sc, det, t_eff)
            fd = finite_difference_jacobian(
                lambda a: rect_probability(a[0] * alpha * math.sqrt(c_sc), det, t_eff), [1.0], step=1e-6
            )[0, 0] / alpha
            worst = max(worst, abs(fd - analytic) / max(abs(analytic), 1e-300))
    results["gradient vs finite difference < 1e-6"] = worst < 1e-6

    # determinism under worker counts
    m = ExperimentModel(pulse_duration=0.941e-12, detuning=-TWO_PI * 33e9, alpha=1.3e11, scatter_counts_per_joule=1e12)
    energies = [5e-12, 5e-11, 1.2e-10]
    serial = [h for _, h in run_experiment(energies, m, 30000, seed=11, n_jobs=1)]
    results["worker-count determinism"] = all(
        serial == [h for _, h in run_experiment(energies, m, 30000, seed=11, n_jobs=n)] for n in (2, 4, 8)
    )

    detail = ", ".join(f"{k}: {'ok' if v else 'FAILED'}" for k, v in results.items())
    report(7, all(results.values()), detail)
