"""Pulse envelopes, focal intensity and spectrum/duration relations.

Gaussian pulses are described by ``tau``, the standard deviation of the
*field* envelope::

    E(t) = exp(-t**2 / (2 tau**2))        |E(t)|**2 = exp(-t**2 / tau**2)

With this convention the pulse area of a Gaussian Rabi-frequency envelope
with peak ``Omega`` is ``Omega * sqrt(2 pi) * tau`` and its energy equals a
square pulse of the same peak intensity and width ``sqrt(pi) * tau``. The
intensity spectrum of a transform-limited pulse is then a Gaussian in
ordinary frequency with standard deviation ``1 / (2 sqrt(2) pi tau)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DeconvolutionError, InvalidInputError
from .quantities import TWO_PI, AngularFrequency, Duration, Energy, Intensity

SQRT_PI = math.sqrt(math.pi)
SQRT_2PI = math.sqrt(2.0 * math.pi)
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


class PulseShape(enum.Enum):
    RECTANGULAR = "rectangular"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class PulseSpec:
    """A single pulse at the ion.

    ``shape_duration`` is the full width for a rectangular pulse and the
    field standard deviation ``tau`` for a Gaussian one.
    """

    shape: PulseShape
    energy: Energy
    shape_duration: Duration
    detuning: AngularFrequency
    waist: float

    def __post_init__(self):
        object.__setattr__(self, "shape", PulseShape(self.shape))
        object.__setattr__(self, "energy", Energy(self.energy))
        object.__setattr__(self, "shape_duration", Duration(self.shape_duration))
        object.__setattr__(self, "detuning", AngularFrequency(self.detuning))
        if self.shape_duration <= 0:
            raise InvalidInputError("shape_duration must be > 0")
        if not (math.isfinite(self.waist) and self.waist > 0):
            raise InvalidInputError("waist must be > 0")

    def equivalent_rectangular(self) -> "PulseSpec":
        """Square pulse with the same energy and peak intensity."""
        if self.shape is PulseShape.RECTANGULAR:
            return self
        width = equivalent_square_width_for_intensity(self.shape_duration)
        return PulseSpec(PulseShape.RECTANGULAR, self.energy, width, self.detuning, self.waist)

    @property
    def effective_duration(self) -> Duration:
        """Square-pulse duration with the same area at the same peak Rabi frequency."""
        if self.shape is PulseShape.RECTANGULAR:
            return self.shape_duration
        return effective_square_duration(self.shape_duration)


@dataclass(frozen=True)
class SpectrumModel:
    """Gaussian model of a measured intensity spectrum (frequencies in Hz)."""

    center_frequency: float
    sigma: float
    amplitude: float
    instrument_sigma: float = 0.0
    baseline: float = 0.0
    center_std: float = 0.0
    sigma_std: float = 0.0
    amplitude_std: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidInputError("spectral sigma must be > 0")
        if self.instrument_sigma < 0:
            raise InvalidInputError("instrument_sigma must be >= 0")

    @property
    def deconvolved_sigma(self) -> float:
        if self.sigma <= self.instrument_sigma:
            raise DeconvolutionError(
                f"spectral sigma {self.sigma:.6g} Hz does not exceed "
                f"instrument sigma {self.instrument_sigma:.6g} Hz"
            )
        return math.sqrt(self.sigma**2 - self.instrument_sigma**2)

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        return self.baseline + self.amplitude * np.exp(
            -0.5 * ((f - self.center_frequency) / self.sigma) ** 2
        )


def peak_intensity(spec: PulseSpec) -> Intensity:
    """Peak intensity of a square pulse focused to a Gaussian spot, 2E / (pi w0^2 t_p)."""
    if spec.shape is not PulseShape.RECTANGULAR:
        raise InvalidInputError(
            "peak_intensity assumes a square temporal profile; "
            "use spec.equivalent_rectangular() for Gaussian pulses"
        )
    return Intensity(2.0 * spec.energy / (math.pi * spec.waist**2 * spec.shape_duration))


def effective_square_duration(tau) -> Duration:
    """Area-equivalent square duration of a Gaussian field with std ``tau``."""
    if not tau > 0:
        raise InvalidInputError("duration must be > 0")
    return Duration(float(tau) * SQRT_2PI)


def equivalent_square_width_for_intensity(tau) -> Duration:
    """Energy-equivalent square width of a Gaussian field with std ``tau``."""
    if not tau > 0:
        raise InvalidInputError("duration must be > 0")
    return Duration(float(tau) * SQRT_PI)


def spectral_sigma_from_duration(tau) -> float:
    return 1.0 / (2.0 * math.sqrt(2.0) * math.pi * float(tau))


def duration_from_spectrum(spectrum: SpectrumModel) -> Duration:
    """Transform-limited field std ``tau`` from a fitted intensity spectrum.

    The instrument response is removed in quadrature first.
    """
    sigma = spectrum.deconvolved_sigma
    return Duration(1.0 / (2.0 * math.sqrt(2.0) * math.pi * sigma))


def detuning_from_spectrum(spectrum: SpectrumModel, reference_frequency: float) -> AngularFrequency:
    return AngularFrequency(TWO_PI * (spectrum.center_frequency - float(reference_frequency)))


def pulse_area(omega_eff, t_eff) -> float:
    return float(omega_eff) * float(t_eff)


def instrument_sigma_from_resolution(resolution_fwhm: float) -> float:
    """Treat a quoted spectrometer resolution as the FWHM of a Gaussian response."""
    return float(resolution_fwhm) / FWHM_PER_SIGMA


# -- synthetic spectra -------------------------------------------------------


def gaussian_field(t, tau):
    t = np.asarray(t, dtype=float)
    return np.exp(-0.5 * (t / tau) ** 2)


def sampled_spectrum(tau, *, n_samples=2**14, time_window=None, carrier_offset=0.0):
    """Intensity spectrum of a sampled Gaussian field, via a discrete FFT.

    Returns ``(frequency, intensity)`` with frequency in Hz relative to the
    optical carrier, shifted by ``carrier_offset``, sorted ascending. The
    intensity is normalised to unit peak.
    """
    if time_window is None:
        time_window = 400.0 * tau
    dt = time_window / n_samples
    t = (np.arange(n_samples) - n_samples // 2) * dt
    field_t = gaussian_field(t, tau)
    spec = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(field_t)))
    freq = np.fft.fftshift(np.fft.fftfreq(n_samples, dt))
    power = np.abs(spec) ** 2
    return freq + carrier_offset, power / power.max()


def instrument_blur(frequency, intensity, instrument_sigma):
    """Convolve a uniformly sampled spectrum with a Gaussian instrument response."""
    if instrument_sigma <= 0:
        return np.asarray(intensity, dtype=float).copy()
    frequency = np.asarray(frequency, dtype=float)
    df = frequency[1] - frequency[0]
    half = int(math.ceil(8 * instrument_sigma / df))
    kernel = np.exp(-0.5 * (np.arange(-half, half + 1) * df / instrument_sigma) ** 2)
    kernel /= kernel.sum()
    return np.convolve(intensity, kernel, mode="same")


def synthetic_spectrum(
    tau,
    center_frequency,
    frequency_grid,
    *,
    instrument_sigma=0.0,
    amplitude=1.0,
    baseline=0.0,
    noise=0.0,
    rng=None,
):
    """Spectrometer-like samples of a transform-limited Gaussian pulse.

    The spectrum is computed by FFT of the sampled field, blurred by the
    instrument response and interpolated onto ``frequency_grid`` (Hz).
    """
    grid = np.asarray(frequency_grid, dtype=float)
    span = grid.max() - grid.min()
    n = 2**16
    # resolve both the instrument width and the pulse bandwidth on the FFT grid
    df = min(span / 2000.0, instrument_sigma / 8 if instrument_sigma > 0 else np.inf)
    time_window = 1.0 / df
    freq, power = sampled_spectrum(tau, n_samples=n, time_window=time_window)
    power = instrument_blur(freq, power, instrument_sigma)
    values = np.interp(grid - center_frequency, freq, power, left=0.0, right=0.0)
    values = baseline + amplitude * values
    if noise > 0:
        rng = np.random.default_rng(rng)
        values = values + rng.normal(0.0, noise, size=values.shape)
    return values


# -- spectrum files ----------------------------------------------------------


class SpectrumParseError(InvalidInputError):
    def __init__(self, message, path=None, lineno=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
        self.lineno = lineno


def read_spectrum_file(path):
    """Read two-column ``frequency_Hz amplitude`` text; '#' starts a comment."""
    freqs, amps = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise SpectrumParseError(f"expected 2 columns, got {len(parts)}", path, lineno)
            try:
                f, a = float(parts[0]), float(parts[1])
            except ValueError:
                raise SpectrumParseError(f"non-numeric value in {line!r}", path, lineno) from None
            if not (math.isfinite(f) and math.isfinite(a)):
                raise SpectrumParseError("non-finite value", path, lineno)
            freqs.append(f)
            amps.append(a)
    if not freqs:
        raise SpectrumParseError("no data rows", path)
    return np.array(freqs), np.array(amps)


def write_spectrum_file(path, frequency, amplitude, header=None):
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.append("# frequency_Hz amplitude")
    lines.extend(f"{f:.12e} {a:.12e}" for f, a in zip(frequency, amplitude))
    Path(path).write_text("\n".join(lines) + "\n")
