"""Single-pulse coherent excitation of a trapped ion: simulation and analysis."""

from .dynamics import (
    DriveParameters,
    GaussianEnvelope,
    RectangularEnvelope,
    StepControl,
    TwoLevelState,
    bright_probability_after_decay,
    excitation_probability_rect,
    integrate_schroedinger,
    theoretical_rabi,
)
from .pulse import (
    PulseShape,
    PulseSpec,
    SpectrumModel,
    detuning_from_spectrum,
    duration_from_spectrum,
    effective_square_duration,
    equivalent_square_width_for_intensity,
    peak_intensity,
    pulse_area,
)
from .quantities import (
    AngularFrequency,
    Duration,
    Energy,
    Intensity,
    TransitionConstants,
    angular_from_hz,
    hz_from_angular,
    yb171_defaults,
)

__version__ = "0.1.0"
