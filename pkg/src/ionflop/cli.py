"""Command-line entry point: ``ionflop {theory,simulate,analyze,spectrum}``.

Exit codes: 0 success, 2 configuration error, 3 fit failure, 4 I/O or
parse error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io as iomod
from .dynamics import theoretical_rabi
from .errors import ConfigError, FitFailure, InvalidInputError, NonIdentifiableError
from .estimation import (
    Calibration,
    RabiCurveRegressor,
    RabiDataPoint,
    fit_gaussian_spectrum,
    fit_histogram,
    population_from_bright_weight,
)
from .estimation.rabi import band_limits
from .protocol import run_experiment, run_reference
from .pulse import (
    PulseShape,
    PulseSpec,
    SpectrumParseError,
    detuning_from_spectrum,
    duration_from_spectrum,
    effective_square_duration,
    equivalent_square_width_for_intensity,
    peak_intensity,
    read_spectrum_file,
)
from .quantities import TWO_PI

log = logging.getLogger("ionflop")

EXIT_OK, EXIT_CONFIG, EXIT_FIT, EXIT_IO = 0, 2, 3, 4


def _load_config(args, fallback=None):
    if args.config:
        cfg = cfgmod.load(args.config)
    else:
        cfg = cfgmod.resolve(fallback or {})
    if args.seed is not None:
        cfg["protocol"]["seed"] = args.seed
    if args.out is not None:
        cfg["output"]["dir"] = args.out
    if args.format is not None:
        cfg["output"]["format"] = args.format
    return cfg


def _outdir(cfg):
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _spectrum_fit(path, cfg):
    f, a = read_spectrum_file(path)
    return fit_gaussian_spectrum((f, a), instrument_sigma=cfgmod.instrument_sigma(cfg))


def _pulse_timing(cfg):
    """(shape duration, detuning in Hz), taken from the spectrum file when one is configured."""
    p = cfg["pulse"]
    if p["spectrum_file"]:
        ref = cfg["analysis"]["reference_frequency"]
        if ref is None:
            raise ConfigError("needed to turn a spectrum into a detuning", "analysis.reference_frequency")
        model = _spectrum_fit(p["spectrum_file"], cfg)
        return float(duration_from_spectrum(model)), detuning_from_spectrum(model, ref).hz
    return p["duration"], p["detuning"]


# -- theory ------------------------------------------------------------------


def cmd_theory(args):
    cfg = _load_config(args)
    p = cfg["pulse"]
    if p["waist"] is None:
        raise ConfigError("required for intensity", "pulse.waist")
    duration, detuning_hz = _pulse_timing(cfg)
    constants = cfgmod.constants(cfg)
    shape = PulseShape(p["shape"])
    if shape is PulseShape.GAUSSIAN:
        t_p = equivalent_square_width_for_intensity(duration)
        t_eff = effective_square_duration(duration)
    else:
        t_p = t_eff = duration
    rows = []
    for e in cfgmod.energies(cfg):
        spec = PulseSpec(PulseShape.RECTANGULAR, e, t_p, TWO_PI * detuning_hz, p["waist"])
        i_p = float(peak_intensity(spec))
        omega = float(theoretical_rabi(constants, i_p))
        rows.append((e, i_p, omega, float(t_p), float(t_eff), omega * t_eff))
    header = ["energy_J", "peak_intensity_W_m2", "rabi_frequency_rad_s", "t_p_s", "t_eff_s", "pulse_area_rad"]
    print(f"# detuning {detuning_hz / 1e9:+.3f} GHz, waist {p['waist']:.4g} m, shape {shape.value}")
    print("  ".join(f"{h:>22s}" for h in header))
    for r in rows:
        print("  ".join(f"{v:22.6e}" for v in r))
    if args.out is not None:
        out = _outdir(cfg)
        iomod.write_table(out / f"theory.{cfg['output']['format']}", header, rows, cfg["output"]["format"])
    return EXIT_OK


# -- simulate ----------------------------------------------------------------


def cmd_simulate(args):
    cfg = _load_config(args)
    duration, detuning_hz = _pulse_timing(cfg)
    model = cfgmod.experiment_model(cfg, duration=duration, detuning_hz=detuning_hz)
    energies = cfgmod.energies(cfg)
    pr = cfg["protocol"]
    seed = pr["seed"]
    results = run_experiment(energies, model, pr["repetitions"], seed, n_jobs=pr["n_jobs"])
    points = [
        iomod.HistogramPoint(
            index=i,
            energy=float(e),
            scatter_counts=model.scatter_counts(e),
            histogram=h,
            p_excite=model.excitation_probability(e),
            rabi_frequency=model.rabi_frequency(e),
        )
        for i, (e, h) in enumerate(results)
    ]
    bright = dark = None
    if pr["reference_repetitions"] > 0:
        bright, dark = run_reference(model, pr["reference_repetitions"], seed, n_jobs=pr["n_jobs"])
    hs = iomod.HistogramSet(
        points=points,
        seed=seed,
        config=cfg,
        bright_reference=bright,
        dark_reference=dark,
        metadata={
            "pulse_duration_s": float(duration),
            "detuning_hz": float(detuning_hz),
            "t_eff_s": model.effective_duration,
        },
    )
    out = _outdir(cfg)
    path = out / "histograms.json"
    path.write_text(iomod.histograms_to_json(hs))
    written = [path]
    if cfg["output"]["format"] == "csv":
        csv_path = out / "histograms.csv"
        csv_path.write_text(iomod.histograms_to_csv(hs))
        written.append(csv_path)
    for w in written:
        print(f"wrote {w}")
    return EXIT_OK


# -- analyze -----------------------------------------------------------------


def _calibration(cfg, hs):
    mode = cfg["analysis"]["calibration"]
    if mode == "reference":
        if hs.bright_reference is None:
            log.warning("no reference histograms in input; co-fitting mixture components")
            return None
        return Calibration.from_reference_histograms(hs.bright_reference, hs.dark_reference)
    if mode == "model":
        model = cfgmod.experiment_model(cfg)
        return Calibration.from_readout_model(model.readout, model.timing)
    return None


def analyze_histograms(hs: iomod.HistogramSet, cfg):
    """Mixture fit per point, 3/2 scaling, then the alpha fit. Returns a report dict."""
    if not hs.points:
        raise InvalidInputError("no histogram points to analyze")
    constants = cfgmod.constants(cfg)
    calibration = _calibration(cfg, hs)
    a = cfg["analysis"]

    if a["t_eff"] is not None:
        t_eff = a["t_eff"]
    elif "t_eff_s" in hs.metadata and cfg["pulse"]["spectrum_file"] is None:
        t_eff = hs.metadata["t_eff_s"]
    else:
        duration, _ = _pulse_timing(cfg)
        t_eff = float(duration) * (math.sqrt(2 * math.pi) if cfg["pulse"]["shape"] == "gaussian" else 1.0)
    if a["detuning"] is not None:
        detuning_hz = a["detuning"]
    elif "detuning_hz" in hs.metadata and cfg["pulse"]["spectrum_file"] is None:
        detuning_hz = hs.metadata["detuning_hz"]
    else:
        _, detuning_hz = _pulse_timing(cfg)

    per_point, data = [], []
    for p in hs.points:
        c_sc = p.scatter_counts
        if not (c_sc == c_sc):
            k = cfg["pulse"]["scatter_counts_per_joule"]
            if k is None:
                raise ConfigError("needed to map pulse energy to scatter counts", "pulse.scatter_counts_per_joule")
            c_sc = k * p.energy
        entry = {"index": p.index, "energy_J": p.energy, "scatter_counts": c_sc, "total": p.histogram.total}
        try:
            fit = fit_histogram(p.histogram, calibration)
        except (FitFailure, InvalidInputError) as exc:
            entry["error"] = str(exc)
            per_point.append(entry)
            continue
        w = fit.bright_weight
        pop = population_from_bright_weight(w, constants.bright_fraction)
        se = fit.weight_std_error / constants.bright_fraction
        entry.update(bright_weight=w, weight_std_error=fit.weight_std_error, population=pop, population_std_error=se)
        per_point.append(entry)
        data.append(RabiDataPoint(c_sc, min(pop, 1.05), se))

    report = {
        "seed": hs.seed,
        "config": cfg,
        "t_eff_s": t_eff,
        "detuning_hz": detuning_hz,
        "calibration": cfg["analysis"]["calibration"] if calibration is not None else "cofit",
        "points": per_point,
    }
    c = np.array([d.scatter_counts for d in data])
    y = np.array([d.excited_population for d in data])
    se = np.array([d.population_std_error for d in data])
    reg = RabiCurveRegressor(
        t_eff=t_eff,
        detuning=TWO_PI * detuning_hz,
        t_eff_std=a["t_eff_std"],
        detuning_std=TWO_PI * a["detuning_std"],
    )
    try:
        if len(data) < 2 or np.unique(c).size < 2:
            raise NonIdentifiableError("need at least two points with distinct scatter counts")
        good = se > 0
        weights = np.where(good, 1.0 / np.where(good, se, 1.0) ** 2, 0.0)
        if not np.all(good):
            # points with zero error (boundary weights) get the smallest finite weight's error
            floor = np.min(se[good]) if np.any(good) else 1.0
            weights = 1.0 / np.maximum(se, floor) ** 2
        reg.fit(c, y, sample_weight=weights)
    except FitFailure as exc:
        report["rabi_fit"] = {"converged": False, "error": str(exc), "diagnostics": exc.diagnostics}
        return report, None, data
    m = reg.model_
    c_max = float(np.max(c))
    report["rabi_fit"] = {
        "converged": True,
        "alpha": m.alpha,
        "alpha_std": m.alpha_std,
        "alpha_covariance": m.alpha_covariance,
        "iterations": m.iterations,
        "chi2": reg.chi2_,
        "dof": reg.fit_result_.extra["dof"],
        "omega_eff_at_max_counts": float(m.rabi_frequency(c_max)),
    }
    return report, m, data


def cmd_analyze(args):
    paths = args.histograms
    if not paths:
        raise InvalidInputError("no histogram files given")
    sets = [iomod.read_histograms(p) for p in paths]
    cfg = _load_config(args, fallback=sets[0].config)
    hs = sets[0]
    for extra in sets[1:]:
        offset = len(hs.points)
        for p in extra.points:
            p.index += offset
        hs.points.extend(extra.points)
    report, model, data = analyze_histograms(hs, cfg)
    out = _outdir(cfg)
    fmt = cfg["output"]["format"]
    rows = [
        (e["energy_J"], e["scatter_counts"], e.get("population", float("nan")), e.get("population_std_error", float("nan")))
        for e in report["points"]
    ]
    iomod.write_table(out / f"rabi_points.{fmt}", ["energy_J", "c_sc", "population", "population_std_error"], rows, fmt)
    iomod.write_json(out / "fit_report.json", report)
    for e in report["points"]:
        if "error" in e:
            print(f"point {e['index']}: mixture fit failed: {e['error']}", file=sys.stderr)
    if model is None:
        print(f"Rabi fit failed: {report['rabi_fit']['error']}", file=sys.stderr)
        return EXIT_FIT
    a = cfg["analysis"]
    grid = np.linspace(0.0, max(d.scatter_counts for d in data) * 1.1, a["band_points"])
    lo, hi = band_limits(model, grid, a["n_sigma"])
    band_rows = list(zip(grid.tolist(), model.pulse_area(grid).tolist(), model(grid).tolist(), lo.tolist(), hi.tolist()))
    iomod.write_table(out / f"band.{fmt}", ["c_sc", "pulse_area", "model", "lower", "upper"], band_rows, fmt)
    fit = report["rabi_fit"]
    print(f"alpha = {fit['alpha']:.6e} +/- {fit['alpha_std']:.2e} rad/s per sqrt(count)")
    print(f"chi2 = {fit['chi2']:.3f} for {fit['dof']} degrees of freedom")
    print(f"wrote {out}/rabi_points.{fmt}, {out}/band.{fmt}, {out}/fit_report.json")
    return EXIT_OK


# -- spectrum ----------------------------------------------------------------


def cmd_spectrum(args):
    cfg = _load_config(args)
    path = args.spectrum or cfg["pulse"]["spectrum_file"]
    if not path:
        raise ConfigError("no spectrum file given", "pulse.spectrum_file")
    ref = cfgmod.parse_frequency(args.reference, "--reference") if args.reference is not None else cfg["analysis"]["reference_frequency"]
    if ref is None:
        raise ConfigError("reference frequency required", "analysis.reference_frequency")
    model = _spectrum_fit(path, cfg)
    tau = duration_from_spectrum(model)
    detuning = detuning_from_spectrum(model, ref)
    report = {
        "spectrum_file": str(path),
        "reference_frequency_hz": ref,
        "center_frequency_hz": model.center_frequency,
        "center_std_hz": model.center_std,
        "detuning_ghz": detuning.hz / 1e9,
        "detuning_rad_s": float(detuning),
        "sigma_hz": model.sigma,
        "instrument_sigma_hz": model.instrument_sigma,
        "deconvolved_sigma_hz": model.deconvolved_sigma,
        "field_duration_s": float(tau),
        "t_p_s": float(equivalent_square_width_for_intensity(tau)),
        "t_eff_s": float(effective_square_duration(tau)),
    }
    print(f"centre          {model.center_frequency:.9e} Hz (+/- {model.center_std:.2e})")
    print(f"detuning        {detuning.hz / 1e9:+.3f} GHz")
    print(f"sigma           {model.sigma / 1e9:.4f} GHz (deconvolved {model.deconvolved_sigma / 1e9:.4f} GHz)")
    print(f"field duration  {tau * 1e12:.4f} ps")
    print(f"t_eff           {report['t_eff_s'] * 1e12:.4f} ps")
    if args.out is not None:
        iomod.write_json(_outdir(cfg) / "spectrum_report.json", report)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="override protocol.seed")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="tabular output format")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ionflop", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("theory", parents=[common], help="intensity, Rabi frequency and pulse area per energy")
    sub.add_parser("simulate", parents=[common], help="Monte Carlo photon-count histograms")
    p = sub.add_parser("analyze", parents=[common], help="mixture fits and Rabi-curve fit")
    p.add_argument("histograms", nargs="*", help="histogram files written by simulate")
    p = sub.add_parser("spectrum", parents=[common], help="detuning and duration from a spectrum")
    p.add_argument("spectrum", nargs="?", help="two-column spectrum file")
    p.add_argument("--reference", help="reference transition frequency (e.g. '811.29 THz')")
    return parser


COMMANDS = {"theory": cmd_theory, "simulate": cmd_simulate, "analyze": cmd_analyze, "spectrum": cmd_spectrum}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitFailure as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (OSError, SpectrumParseError, InvalidInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
