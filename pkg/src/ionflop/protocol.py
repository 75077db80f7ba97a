"""Monte Carlo model of the cool / pump / excite / read-out cycle.

Each repetition draws whether the pulse excited the ion, which ground
sublevel it decayed into, and how many photons the PMT saw during readout.
Random streams are keyed by ``(seed, point index, block index)`` with a fixed
block size, so the result does not depend on how blocks are distributed
over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics
from .errors import ConfigError, InvalidInputError
from .pulse import PulseShape, PulseSpec, peak_intensity
from .quantities import Duration, Energy, TransitionConstants, yb171_defaults

BLOCK_SIZE = 8192

_POINT_STREAM = 0
_REFERENCE_STREAM = 1


@dataclass(frozen=True)
class CycleTiming:
    cooling: float = 40e-6
    pumping: float = 20e-6
    decay_wait: float = 2e-6
    readout: float = 227e-6
    cycle_period: float = 426.66e-6

    def __post_init__(self):
        for name in ("cooling", "pumping", "decay_wait", "readout", "cycle_period"):
            object.__setattr__(self, name, Duration(getattr(self, name)))
        if self.active_time > self.cycle_period * (1 + 1e-12):
            raise InvalidInputError(
                f"cycle steps take {self.active_time:.6g} s, longer than the period {self.cycle_period:.6g} s"
            )

    @property
    def active_time(self) -> float:
        return self.cooling + self.pumping + self.decay_wait + self.readout


@dataclass(frozen=True)
class ReadoutModel:
    """Photon-count model for state-selective fluorescence.

    Rates are PMT counts per second. ``leak_rate`` is the rate at which a
    bright ion is pumped dark during readout; ``preparation_error`` is the
    probability that optical pumping failed and the ion reads bright
    regardless of the pulse.
    """

    bright_rate: float = 30.0 / 227e-6
    dark_rate: float = 1.0 / 227e-6
    leak_rate: float = 0.0
    preparation_error: float = 0.0

    def __post_init__(self):
        for name in ("bright_rate", "dark_rate", "leak_rate"):
            v = float(getattr(self, name))
            if not (math.isfinite(v) and v >= 0):
                raise InvalidInputError(f"{name} must be finite and >= 0")
            object.__setattr__(self, name, v)
        if not 0.0 <= self.preparation_error <= 1.0:
            raise InvalidInputError("preparation_error must lie in [0, 1]")

    @classmethod
    def from_means(cls, bright_mean, dark_mean, readout_time=227e-6, **kwargs):
        return cls(bright_mean / readout_time, dark_mean / readout_time, **kwargs)


@dataclass(frozen=True)
class CycleRecord:
    excited: bool
    decayed_bright: bool
    photon_count: int

    def __post_init__(self):
        if self.decayed_bright and not self.excited:
            raise InvalidInputError("decayed_bright requires excited")
        if self.photon_count < 0:
            raise InvalidInputError("photon_count must be >= 0")


class CountHistogram:
    """Occurrences of each readout photon count."""

    def __init__(self, bin_counts=None):
        self.bin_counts = {}
        for k, n in (bin_counts or {}).items():
            k, n = int(k), int(n)
            if k < 0 or n < 0:
                raise InvalidInputError("histogram bins and occurrences must be >= 0")
            if n:
                self.bin_counts[k] = self.bin_counts.get(k, 0) + n

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts, dtype=np.int64)
        occ = np.bincount(counts) if counts.size else np.zeros(0, dtype=np.int64)
        return cls.from_bincount(occ)

    @classmethod
    def from_bincount(cls, occ):
        nz = np.flatnonzero(occ)
        return cls({int(k): int(occ[k]) for k in nz})

    @property
    def total(self) -> int:
        return sum(self.bin_counts.values())

    def arrays(self):
        keys = sorted(self.bin_counts)
        return (
            np.array(keys, dtype=np.int64),
            np.array([self.bin_counts[k] for k in keys], dtype=np.int64),
        )

    def mean(self) -> float:
        values, occ = self.arrays()
        return float(np.sum(values * occ) / occ.sum()) if occ.size else float("nan")

    def fraction_above(self, threshold) -> float:
        values, occ = self.arrays()
        return float(occ[values > threshold].sum() / occ.sum())

    def __add__(self, other):
        merged = dict(self.bin_counts)
        for k, n in other.bin_counts.items():
            merged[k] = merged.get(k, 0) + n
        return CountHistogram(merged)

    def __eq__(self, other):
        return isinstance(other, CountHistogram) and self.bin_counts == other.bin_counts

    def __repr__(self):
        return f"CountHistogram(total={self.total}, bins={len(self.bin_counts)})"

    def to_dict(self):
        return {str(k): self.bin_counts[k] for k in sorted(self.bin_counts)}

    @classmethod
    def from_dict(cls, d):
        return cls({int(k): int(v) for k, v in d.items()})


# -- single-cycle and block simulation ---------------------------------------


def _check_probability(p):
    p = float(p)
    if not (0.0 <= p <= 1.0):
        raise InvalidInputError(f"probability out of range: {p!r}")
    return p


def simulate_cycles(p_excite, constants: TransitionConstants, readout: ReadoutModel, timing: CycleTiming, n, rng):
    """Vectorised simulation of ``n`` cycles.

    Returns ``(excited, decayed_bright, photon_count)`` arrays.
    """
    p_excite = _check_probability(p_excite)
    T = float(timing.readout)
    excited = rng.random(n) < p_excite
    probs = np.array([c.probability for c in constants.branching])
    bright_channel = np.array([c.bright for c in constants.branching])
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    channel = np.searchsorted(cdf, rng.random(n), side="right")
    decayed_bright = excited & bright_channel[np.minimum(channel, len(cdf) - 1)]
    reads_bright = decayed_bright
    if readout.preparation_error > 0:
        reads_bright = reads_bright | (rng.random(n) < readout.preparation_error)
    bright_time = np.where(reads_bright, T, 0.0)
    if readout.leak_rate > 0:
        leak_time = rng.exponential(1.0 / readout.leak_rate, size=n)
        bright_time = np.minimum(bright_time, leak_time)
    counts = rng.poisson(readout.bright_rate * bright_time + readout.dark_rate * T)
    return excited, decayed_bright, counts


def simulate_cycle(p_excite, constants, readout, timing, rng) -> CycleRecord:
    excited, bright, counts = simulate_cycles(p_excite, constants, readout, timing, 1, rng)
    return CycleRecord(bool(excited[0]), bool(bright[0]), int(counts[0]))


def _block_rng(seed, stream, index, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream, index, block))))


def _n_blocks(n):
    return (n + BLOCK_SIZE - 1) // BLOCK_SIZE


# -- experiment configuration ------------------------------------------------


@dataclass(frozen=True)
class ExperimentModel:
    """Everything needed to turn a pulse energy into a readout histogram.

    The Rabi frequency comes from ``alpha * sqrt(C_sc)`` with
    ``C_sc = scatter_counts_per_joule * E`` when ``alpha`` is set, otherwise
    from the peak intensity at the ion (requires ``waist``). ``pulse_duration``
    is the full width for rectangular pulses and the field standard deviation
    for Gaussian ones.
    """

    pulse_duration: float = 0.941e-12
    detuning: float = 0.0
    shape: PulseShape = PulseShape.GAUSSIAN
    waist: float = None
    alpha: float = None
    scatter_counts_per_joule: float = None
    dynamics: str = "closed_form"
    constants: TransitionConstants = field(default_factory=yb171_defaults)
    readout: ReadoutModel = field(default_factory=ReadoutModel)
    timing: CycleTiming = field(default_factory=CycleTiming)

    def __post_init__(self):
        object.__setattr__(self, "shape", PulseShape(self.shape))
        if self.dynamics not in ("closed_form", "integrator"):
            raise ConfigError(f"unknown dynamics {self.dynamics!r}", "pulse.dynamics")
        if not self.pulse_duration > 0:
            raise ConfigError("must be > 0", "pulse.duration")
        if self.alpha is None and self.waist is None:
            raise ConfigError("waist is required when alpha is not given", "pulse.waist")
        if self.alpha is not None and self.scatter_counts_per_joule is None:
            raise ConfigError("required when alpha is given", "pulse.scatter_counts_per_joule")

    @property
    def effective_duration(self) -> float:
        if self.shape is PulseShape.GAUSSIAN:
            return self.pulse_duration * math.sqrt(2 * math.pi)
        return self.pulse_duration

    def scatter_counts(self, energy) -> float:
        if self.scatter_counts_per_joule is None:
            return float("nan")
        return self.scatter_counts_per_joule * float(energy)

    def rabi_frequency(self, energy) -> float:
        """Peak Rabi frequency for a pulse of the given energy."""
        energy = Energy(energy)
        if self.alpha is not None:
            return self.alpha * math.sqrt(self.scatter_counts(energy))
        spec = PulseSpec(self.shape, energy, self.pulse_duration, self.detuning, self.waist)
        return float(dynamics.theoretical_rabi(self.constants, peak_intensity(spec.equivalent_rectangular())))

    def excitation_probability(self, energy) -> float:
        omega = self.rabi_frequency(energy)
        if self.dynamics == "closed_form" or omega == 0:
            return float(dynamics.rect_probability(omega, self.detuning, self.effective_duration))
        if self.shape is PulseShape.GAUSSIAN:
            env = dynamics.GaussianEnvelope(omega, self.pulse_duration)
        else:
            env = dynamics.RectangularEnvelope(omega, self.pulse_duration)
        return min(1.0, dynamics.excitation_probability(env, self.detuning))


def _simulate_block(args):
    seed, stream, index, block, n_total, p, bright_override, model = args
    rng = _block_rng(seed, stream, index, block)
    n = min(BLOCK_SIZE, n_total - block * BLOCK_SIZE)
    if bright_override is None:
        _, _, counts = simulate_cycles(p, model.constants, model.readout, model.timing, n, rng)
    else:
        # reference measurement: ion prepared fully bright (True) or dark (False)
        T = float(model.timing.readout)
        bright_time = np.full(n, T if bright_override else 0.0)
        if bright_override and model.readout.leak_rate > 0:
            bright_time = np.minimum(bright_time, rng.exponential(1.0 / model.readout.leak_rate, size=n))
        counts = rng.poisson(model.readout.bright_rate * bright_time + model.readout.dark_rate * T)
    return np.bincount(counts)


def _merge_bincounts(parts):
    size = max((len(p) for p in parts), default=0)
    total = np.zeros(size, dtype=np.int64)
    for p in parts:
        total[: len(p)] += p
    return CountHistogram.from_bincount(total)


def _run_tasks(tasks, n_jobs):
    if n_jobs is None or n_jobs <= 1 or len(tasks) <= 1:
        return [_simulate_block(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(_simulate_block, tasks))


def run_experiment(pulse_energies, model: ExperimentModel, repetitions_per_point, seed, n_jobs=1):
    """Simulate ``repetitions_per_point`` cycles at each pulse energy.

    Returns a list of ``(Energy, CountHistogram)``. Output is identical for
    any ``n_jobs``.
    """
    if int(repetitions_per_point) <= 0:
        raise ConfigError("must be > 0", "protocol.repetitions")
    n = int(repetitions_per_point)
    energies = [Energy(e) for e in pulse_energies]
    probs = [model.excitation_probability(e) for e in energies]
    tasks = [
        (seed, _POINT_STREAM, i, b, n, p, None, model)
        for i, p in enumerate(probs)
        for b in range(_n_blocks(n))
    ]
    parts = _run_tasks(tasks, n_jobs)
    nb = _n_blocks(n)
    return [(e, _merge_bincounts(parts[i * nb : (i + 1) * nb])) for i, e in enumerate(energies)]


def run_reference(model: ExperimentModel, repetitions, seed, n_jobs=1):
    """Bright and dark reference histograms for calibration-first fitting."""
    n = int(repetitions)
    if n <= 0:
        raise ConfigError("must be > 0", "protocol.reference_repetitions")
    out = []
    for kind, bright in ((0, True), (1, False)):
        tasks = [(seed, _REFERENCE_STREAM, kind, b, n, 0.0, bright, model) for b in range(_n_blocks(n))]
        out.append(_merge_bincounts(_run_tasks(tasks, n_jobs)))
    return tuple(out)
