"""Two-level excitation by a single short pulse.

Spontaneous decay is ignored while the pulse is on (picoseconds against a
nanosecond lifetime) and applied afterwards through the branching table.
The Hamiltonian is taken in the rotating frame with the rotating-wave
approximation, basis order (ground, excited)::

    H(t) = [[-Delta/2, Omega(t)/2],
            [Omega(t)/2, +Delta/2]]
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NonConvergenceError
from .quantities import AngularFrequency, Duration, TransitionConstants


@dataclass(frozen=True)
class TwoLevelState:
    ground_amplitude: complex = 1.0 + 0j
    excited_amplitude: complex = 0.0 + 0j

    def __post_init__(self):
        object.__setattr__(self, "ground_amplitude", complex(self.ground_amplitude))
        object.__setattr__(self, "excited_amplitude", complex(self.excited_amplitude))

    @classmethod
    def ground(cls):
        return cls(1.0, 0.0)

    @property
    def excited_population(self) -> float:
        return abs(self.excited_amplitude) ** 2

    @property
    def norm(self) -> float:
        return abs(self.ground_amplitude) ** 2 + abs(self.excited_amplitude) ** 2

    def as_array(self):
        return np.array([self.ground_amplitude, self.excited_amplitude], dtype=complex)


@dataclass(frozen=True)
class DriveParameters:
    rabi_frequency: AngularFrequency
    detuning: AngularFrequency
    duration: Duration

    def __post_init__(self):
        object.__setattr__(self, "rabi_frequency", AngularFrequency(self.rabi_frequency))
        object.__setattr__(self, "detuning", AngularFrequency(self.detuning))
        object.__setattr__(self, "duration", Duration(self.duration))
        if self.rabi_frequency < 0:
            raise InvalidInputError("rabi_frequency must be >= 0")
        if self.duration <= 0:
            raise InvalidInputError("duration must be > 0")

    @property
    def area(self) -> float:
        return float(self.rabi_frequency) * float(self.duration)


def rect_probability(omega, detuning, t):
    """Vectorised closed-form excited population after a square pulse."""
    omega = np.asarray(omega, dtype=float)
    detuning = np.asarray(detuning, dtype=float)
    om2 = omega * omega
    gen2 = om2 + detuning * detuning
    with np.errstate(invalid="ignore", divide="ignore"):
        prefactor = np.where(gen2 > 0, om2 / gen2, 0.0)
    return prefactor * np.sin(0.5 * np.asarray(t, dtype=float) * np.sqrt(gen2)) ** 2


def rect_probability_dalpha(alpha, c_sc, detuning, t):
    """d/d(alpha) of the square-pulse population with Omega = alpha * sqrt(c_sc)."""
    alpha = float(alpha)
    s = np.sqrt(np.asarray(c_sc, dtype=float))
    omega = alpha * s
    om2 = omega * omega
    d2 = float(detuning) ** 2
    gen2 = om2 + d2
    gen = np.sqrt(gen2)
    half = 0.5 * float(t) * gen
    sin_h = np.sin(half)
    with np.errstate(invalid="ignore", divide="ignore"):
        # dP/dOmega = 2 Om D^2 / W^4 sin^2 + Om^3 t / (2 W^3) sin(W t)
        dp_domega = np.where(
            gen > 0,
            2.0 * omega * d2 / gen2**2 * sin_h**2
            + om2 * omega / gen2 * (0.5 * float(t) / gen) * np.sin(2.0 * half),
            0.0,
        )
    return dp_domega * s


def excitation_probability_rect(drive: DriveParameters) -> float:
    return float(rect_probability(drive.rabi_frequency, drive.detuning, drive.duration))


def theoretical_rabi(constants: TransitionConstants, peak_intensity) -> AngularFrequency:
    """Resonant Rabi frequency from intensity: C * Gamma * sqrt(I / (2 I_s))."""
    peak_intensity = float(peak_intensity)
    if peak_intensity < 0:
        raise InvalidInputError("peak_intensity must be >= 0")
    return AngularFrequency(
        constants.clebsch_gordan
        * constants.gamma
        * math.sqrt(peak_intensity / (2.0 * constants.saturation_intensity))
    )


def bright_probability_after_decay(p_excited, constants: TransitionConstants) -> float:
    p_excited = float(p_excited)
    if not 0.0 <= p_excited <= 1.0:
        raise InvalidInputError(f"probability out of range: {p_excited!r}")
    return p_excited * constants.bright_fraction


# -- envelopes ---------------------------------------------------------------


class Envelope:
    """Time-dependent Rabi frequency on a finite support ``[t_start, t_stop]``.

    Subclasses implement ``__call__`` for numpy arrays of times.
    """

    t_start = 0.0
    t_stop = 0.0

    def __call__(self, t):
        raise NotImplementedError

    @property
    def area(self):
        raise NotImplementedError


@dataclass(frozen=True)
class RectangularEnvelope(Envelope):
    rabi_frequency: float
    duration: float

    @property
    def t_stop(self):
        return self.duration

    def __call__(self, t):
        return np.full(np.shape(t), float(self.rabi_frequency))

    @property
    def area(self):
        return self.rabi_frequency * self.duration


@dataclass(frozen=True)
class GaussianEnvelope(Envelope):
    """Omega(t) = peak * exp(-t^2 / (2 tau^2)), truncated at +-span * tau."""

    peak_rabi_frequency: float
    tau: float
    span: float = 9.0

    @property
    def t_start(self):
        return -self.span * self.tau

    @property
    def t_stop(self):
        return self.span * self.tau

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.peak_rabi_frequency * np.exp(-0.5 * (t / self.tau) ** 2)

    @property
    def area(self):
        return self.peak_rabi_frequency * self.tau * math.sqrt(2.0 * math.pi)


class _SampledEnvelope(Envelope):
    def __init__(self, func, t_start, t_stop):
        self._func = func
        self.t_start = float(t_start)
        self.t_stop = float(t_stop)

    def __call__(self, t):
        return np.asarray(self._func(t), dtype=float) * np.ones(np.shape(t))


def as_envelope(envelope, t_span=None) -> Envelope:
    if isinstance(envelope, Envelope):
        return envelope
    if t_span is None:
        raise InvalidInputError("a plain callable envelope needs t_span=(t_start, t_stop)")
    return _SampledEnvelope(envelope, *t_span)


# -- integrator --------------------------------------------------------------


@dataclass(frozen=True)
class StepControl:
    """Tolerances for :func:`integrate_schroedinger`.

    ``atol`` bounds the Richardson error estimate of the final amplitudes;
    ``norm_tol`` bounds the drift of |c_g|^2 + |c_e|^2.
    """

    atol: float = 1e-12
    norm_tol: float = 1e-11
    initial_steps: int = 64
    max_steps: int = 2**22

    def __post_init__(self):
        if not (self.atol > 0 and self.norm_tol > 0):
            raise InvalidInputError("tolerances must be > 0")


def _rk4_propagators(envelope, detuning, t0, t1, n_steps):
    """One RK4 update matrix per step for the linear system dc/dt = -i H(t) c."""
    h = (t1 - t0) / n_steps
    t = t0 + h * np.arange(n_steps)

    def generator(times):
        om = envelope(times)
        a = np.empty(times.shape + (2, 2), dtype=complex)
        a[..., 0, 0] = 0.5j * detuning
        a[..., 1, 1] = -0.5j * detuning
        a[..., 0, 1] = -0.5j * om
        a[..., 1, 0] = -0.5j * om
        return a

    a0 = generator(t)
    am = generator(t + 0.5 * h)
    a1 = generator(t + h)
    eye = np.eye(2, dtype=complex)
    b1 = eye + 0.5 * h * a0
    k2 = am @ b1
    b2 = eye + 0.5 * h * k2
    k3 = am @ b2
    b3 = eye + h * k3
    k4 = a1 @ b3
    return eye + (h / 6.0) * (a0 + 2.0 * k2 + 2.0 * k3 + k4)


def _ordered_product(mats):
    """M[n-1] @ ... @ M[1] @ M[0] by pairwise reduction."""
    while len(mats) > 1:
        if len(mats) % 2:
            mats = np.concatenate([mats, np.eye(2, dtype=complex)[None]], axis=0)
        mats = mats[1::2] @ mats[0::2]
    return mats[0]


def _propagate(envelope, detuning, c0, n_steps):
    u = _ordered_product(_rk4_propagators(envelope, detuning, envelope.t_start, envelope.t_stop, n_steps))
    return u @ c0


def integrate_schroedinger(envelope, detuning, initial=None, step_control=None, *, t_span=None):
    """Integrate the driven two-level Schroedinger equation with classic RK4.

    The step count starts at ``step_control.initial_steps`` and doubles until
    the Richardson estimate ``|c_2N - c_N| / 15`` and the norm drift are both
    within tolerance. Returns the final :class:`TwoLevelState`.
    """
    envelope = as_envelope(envelope, t_span)
    step_control = step_control or StepControl()
    initial = initial or TwoLevelState.ground()
    detuning = float(detuning)
    c0 = initial.as_array()
    norm0 = initial.norm
    if envelope.t_stop <= envelope.t_start:
        return initial

    n = step_control.initial_steps
    coarse = _propagate(envelope, detuning, c0, n)
    while True:
        n *= 2
        if n > step_control.max_steps:
            raise NonConvergenceError(
                f"step size underflow: no convergence with {n // 2} RK4 steps"
            )
        fine = _propagate(envelope, detuning, c0, n)
        err = np.max(np.abs(fine - coarse)) / 15.0
        drift = abs(np.vdot(fine, fine).real - norm0)
        if err <= step_control.atol and drift <= step_control.norm_tol:
            # Richardson-extrapolated amplitudes
            c = fine + (fine - coarse) / 15.0
            return TwoLevelState(c[0], c[1])
        coarse = fine


def excitation_probability(envelope, detuning, step_control=None) -> float:
    return integrate_schroedinger(envelope, detuning, step_control=step_control).excited_population
