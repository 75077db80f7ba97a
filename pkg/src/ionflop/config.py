"""Run configuration: a TOML file with strict keys.

Frequencies are ordinary frequencies, either plain numbers in Hz or strings
with a unit suffix (``"-33 GHz"``); they are turned into rad/s only when the
physics objects are built. Everything else is SI.
"""

from __future__ import annotations

import copy
import math
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .protocol import CycleTiming, ExperimentModel, ReadoutModel
from .pulse import PulseShape, instrument_sigma_from_resolution
from .quantities import AngularFrequency, yb171_defaults

_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9, "thz": 1e12}
_FREQ_RE = re.compile(r"^\s*([-+]?[0-9.]+(?:[eE][-+]?\d+)?)\s*([a-zA-Z]+)?\s*$")

# section -> key -> default (None = optional, unset)
SCHEMA = {
    "constants": {
        "gamma_hz": None,
        "saturation_intensity": None,
        "clebsch_gordan": None,
        "excited_lifetime": None,
    },
    "pulse": {
        "shape": "gaussian",
        "duration": 0.941e-12,
        "energies": None,
        "energy_sweep": None,
        "waist": 8.5e-6,
        "detuning": 0.0,
        "spectrum_file": None,
        "alpha": None,
        "scatter_counts_per_joule": None,
        "dynamics": "closed_form",
    },
    "protocol": {
        "repetitions": 68500,
        "reference_repetitions": 68500,
        "seed": 0,
        "n_jobs": 1,
        "timing": {
            "cooling": 40e-6,
            "pumping": 20e-6,
            "decay_wait": 2e-6,
            "readout": 227e-6,
            "cycle_period": 426.66e-6,
        },
        "readout": {
            "bright_rate": 30.0 / 227e-6,
            "dark_rate": 1.0 / 227e-6,
            "leak_rate": 0.0,
            "preparation_error": 0.0,
        },
    },
    "analysis": {
        "reference_frequency": None,
        "instrument_resolution": 3.6e9,
        "calibration": "reference",
        "n_sigma": 2.0,
        "t_eff": None,
        "t_eff_std": 0.0,
        "detuning": None,
        "detuning_std": 0.0,
        "band_points": 200,
    },
    "output": {
        "dir": ".",
        "format": "csv",
    },
}

_FREQUENCY_KEYS = {
    ("constants", "gamma_hz"),
    ("pulse", "detuning"),
    ("analysis", "reference_frequency"),
    ("analysis", "instrument_resolution"),
    ("analysis", "detuning"),
    ("analysis", "detuning_std"),
}


def parse_frequency(value, path="") -> float:
    """Hz from a number or a string such as ``"190 GHz"``."""
    if isinstance(value, bool):
        raise ConfigError("expected a frequency", path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = _FREQ_RE.match(value)
        if m:
            unit = (m.group(2) or "hz").lower()
            if unit in _FREQ_UNITS:
                return float(m.group(1)) * _FREQ_UNITS[unit]
    raise ConfigError(f"cannot read {value!r} as a frequency", path)


def _merge(schema, given, path):
    out = {}
    if not isinstance(given, dict):
        raise ConfigError("expected a table", path)
    unknown = set(given) - set(schema)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError("unknown key", f"{path}.{key}" if path else key)
    for key, default in schema.items():
        sub = f"{path}.{key}" if path else key
        if isinstance(default, dict):
            out[key] = _merge(default, given.get(key, {}), sub)
        else:
            out[key] = copy.deepcopy(given.get(key, default))
    return out


def _number(value, path, *, positive=False, nonneg=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", path)
    if integer and int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    value = int(value) if integer else float(value)
    if not math.isfinite(value):
        raise ConfigError("must be finite", path)
    if positive and value <= 0:
        raise ConfigError("must be > 0", path)
    if nonneg and value < 0:
        raise ConfigError("must be >= 0", path)
    return value


def resolve(raw: dict) -> dict:
    """Fill defaults, reject unknown keys and normalise units (frequencies to Hz)."""
    cfg = _merge(SCHEMA, raw or {}, "")
    for section, key in _FREQUENCY_KEYS:
        if cfg[section][key] is not None:
            cfg[section][key] = parse_frequency(cfg[section][key], f"{section}.{key}")

    p = cfg["pulse"]
    try:
        p["shape"] = PulseShape(str(p["shape"]).lower()).value
    except ValueError:
        raise ConfigError(f"unknown shape {p['shape']!r}", "pulse.shape") from None
    if p["dynamics"] not in ("closed_form", "integrator"):
        raise ConfigError(f"unknown dynamics {p['dynamics']!r}", "pulse.dynamics")
    p["duration"] = _number(p["duration"], "pulse.duration", positive=True)
    if p["waist"] is not None:
        p["waist"] = _number(p["waist"], "pulse.waist", positive=True)
    for key in ("alpha", "scatter_counts_per_joule"):
        if p[key] is not None:
            p[key] = _number(p[key], f"pulse.{key}", positive=True)
    if p["energies"] is not None and p["energy_sweep"] is not None:
        raise ConfigError("give energies or energy_sweep, not both", "pulse.energies")
    if p["energies"] is not None:
        if not isinstance(p["energies"], list):
            raise ConfigError("expected a list", "pulse.energies")
        p["energies"] = [_number(e, f"pulse.energies[{i}]", nonneg=True) for i, e in enumerate(p["energies"])]
    if p["energy_sweep"] is not None:
        sweep = p["energy_sweep"]
        if not isinstance(sweep, dict) or set(sweep) != {"start", "stop", "num"}:
            raise ConfigError("expected {start, stop, num}", "pulse.energy_sweep")
        sweep["start"] = _number(sweep["start"], "pulse.energy_sweep.start", nonneg=True)
        sweep["stop"] = _number(sweep["stop"], "pulse.energy_sweep.stop", nonneg=True)
        sweep["num"] = _number(sweep["num"], "pulse.energy_sweep.num", positive=True, integer=True)

    pr = cfg["protocol"]
    pr["repetitions"] = _number(pr["repetitions"], "protocol.repetitions", positive=True, integer=True)
    pr["reference_repetitions"] = _number(
        pr["reference_repetitions"], "protocol.reference_repetitions", nonneg=True, integer=True
    )
    pr["seed"] = _number(pr["seed"], "protocol.seed", nonneg=True, integer=True)
    pr["n_jobs"] = _number(pr["n_jobs"], "protocol.n_jobs", positive=True, integer=True)
    for key, v in pr["timing"].items():
        pr["timing"][key] = _number(v, f"protocol.timing.{key}", nonneg=True)
    for key, v in pr["readout"].items():
        pr["readout"][key] = _number(v, f"protocol.readout.{key}", nonneg=True)

    a = cfg["analysis"]
    if a["calibration"] not in ("reference", "model", "cofit"):
        raise ConfigError(f"unknown calibration {a['calibration']!r}", "analysis.calibration")
    a["n_sigma"] = _number(a["n_sigma"], "analysis.n_sigma", positive=True)
    a["band_points"] = _number(a["band_points"], "analysis.band_points", positive=True, integer=True)
    if a["t_eff"] is not None:
        a["t_eff"] = _number(a["t_eff"], "analysis.t_eff", positive=True)
    a["t_eff_std"] = _number(a["t_eff_std"], "analysis.t_eff_std", nonneg=True)
    if cfg["output"]["format"] not in ("csv", "json"):
        raise ConfigError(f"unknown format {cfg['output']['format']!r}", "output.format")
    return cfg


def load(path) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}", str(path)) from None
    return resolve(raw)


def energies(cfg) -> list:
    p = cfg["pulse"]
    if p["energies"] is not None:
        return list(p["energies"])
    if p["energy_sweep"] is not None:
        s = p["energy_sweep"]
        return np.linspace(s["start"], s["stop"], s["num"]).tolist()
    raise ConfigError("no pulse energies configured (energies or energy_sweep)", "pulse.energies")


def constants(cfg):
    c = cfg["constants"]
    base = yb171_defaults()
    overrides = {}
    if c["gamma_hz"] is not None:
        overrides["gamma"] = AngularFrequency.from_hz(c["gamma_hz"])
    for key in ("saturation_intensity", "clebsch_gordan", "excited_lifetime"):
        if c[key] is not None:
            overrides[key] = _number(c[key], f"constants.{key}", positive=True)
    return base.with_overrides(**overrides) if overrides else base


def instrument_sigma(cfg) -> float:
    res = cfg["analysis"]["instrument_resolution"]
    return instrument_sigma_from_resolution(res) if res else 0.0


def experiment_model(cfg, *, duration=None, detuning_hz=None) -> ExperimentModel:
    """Build the simulation model; ``duration``/``detuning_hz`` override the pulse section."""
    p, pr = cfg["pulse"], cfg["protocol"]
    try:
        timing = CycleTiming(**pr["timing"])
        readout = ReadoutModel(**pr["readout"])
    except ValueError as exc:
        raise ConfigError(str(exc), "protocol") from None
    return ExperimentModel(
        pulse_duration=duration if duration is not None else p["duration"],
        detuning=float(AngularFrequency.from_hz(detuning_hz if detuning_hz is not None else p["detuning"])),
        shape=PulseShape(p["shape"]),
        waist=p["waist"],
        alpha=p["alpha"],
        scatter_counts_per_joule=p["scatter_counts_per_joule"],
        dynamics=p["dynamics"],
        constants=constants(cfg),
        readout=readout,
        timing=timing,
    )
