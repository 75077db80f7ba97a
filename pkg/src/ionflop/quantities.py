"""Dimension-tagged scalars and the Yb-171 S1/2 - P1/2 transition constants.

Quantities are thin ``float`` subclasses: they validate on construction and
then behave as ordinary floats (arithmetic returns plain ``float``). All
frequencies and detunings are stored as angular frequencies in rad/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import InvalidInputError

TWO_PI = 2.0 * math.pi


class _Quantity(float):
    unit = ""
    nonnegative = True

    def __new__(cls, value=0.0):
        value = float(value)
        if not math.isfinite(value):
            raise InvalidInputError(f"{cls.__name__} must be finite, got {value!r}")
        if cls.nonnegative and value < 0:
            raise InvalidInputError(f"{cls.__name__} must be >= 0, got {value!r}")
        return super().__new__(cls, value)

    @property
    def value(self) -> float:
        return float(self)

    def __repr__(self):
        return f"{type(self).__name__}({float(self)!r} {self.unit})"


class AngularFrequency(_Quantity):
    unit = "rad/s"
    nonnegative = False

    @classmethod
    def from_hz(cls, f) -> "AngularFrequency":
        return cls(TWO_PI * float(f))

    @property
    def hz(self) -> float:
        return float(self) / TWO_PI


class Duration(_Quantity):
    unit = "s"


class Energy(_Quantity):
    unit = "J"


class Intensity(_Quantity):
    unit = "W/m^2"


def angular_from_hz(f) -> AngularFrequency:
    return AngularFrequency.from_hz(f)


def hz_from_angular(omega) -> float:
    return float(omega) / TWO_PI


@dataclass(frozen=True)
class DecayChannel:
    label: str
    probability: float
    bright: bool


@dataclass(frozen=True)
class TransitionConstants:
    """Atomic parameters of a driven two-level transition.

    ``branching`` lists where the excited state decays to, and whether that
    final state fluoresces under state-selective readout.
    """

    gamma: AngularFrequency
    saturation_intensity: Intensity
    clebsch_gordan: float
    excited_lifetime: Duration
    branching: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "gamma", AngularFrequency(self.gamma))
        object.__setattr__(self, "saturation_intensity", Intensity(self.saturation_intensity))
        object.__setattr__(self, "excited_lifetime", Duration(self.excited_lifetime))
        channels = tuple(
            c if isinstance(c, DecayChannel) else DecayChannel(*c) for c in self.branching
        )
        object.__setattr__(self, "branching", channels)
        if self.gamma <= 0 or self.saturation_intensity <= 0:
            raise InvalidInputError("gamma and saturation_intensity must be positive")
        if not channels:
            raise InvalidInputError("branching table is empty")
        if any(not 0.0 <= c.probability <= 1.0 for c in channels):
            raise InvalidInputError("branching probabilities must lie in [0, 1]")
        total = math.fsum(c.probability for c in channels)
        if abs(total - 1.0) > 1e-12:
            raise InvalidInputError(f"branching probabilities sum to {total!r}, not 1")

    @property
    def bright_fraction(self) -> float:
        return math.fsum(c.probability for c in self.branching if c.bright)

    def with_overrides(self, **kwargs) -> "TransitionConstants":
        values = {
            "gamma": self.gamma,
            "saturation_intensity": self.saturation_intensity,
            "clebsch_gordan": self.clebsch_gordan,
            "excited_lifetime": self.excited_lifetime,
            "branching": self.branching,
        }
        values.update(kwargs)
        return TransitionConstants(**values)


def yb171_defaults() -> TransitionConstants:
    """Constants for the 171Yb+ 2S1/2 F=0 -> 2P1/2 F=1, mF=0 pi transition."""
    third = 1.0 / 3.0
    return TransitionConstants(
        gamma=AngularFrequency.from_hz(19.6e6),
        saturation_intensity=Intensity(508.0),
        clebsch_gordan=1.0 / math.sqrt(3.0),
        excited_lifetime=Duration(8.12e-9),
        branching=(
            DecayChannel("S1/2 F=1 mF=-1", third, True),
            DecayChannel("S1/2 F=1 mF=+1", third, True),
            DecayChannel("S1/2 F=0", 1.0 - 2 * third, False),
        ),
    )
